"""Reinforcement and rank losses on a score map, and their gradient.

Rankings come from the extraction step (descending score within an
:class:`InterestPointSet`). For an inlier ``p`` in image ``i``
matched to the point of rank ``r`` in image ``j``, the rank target is the
point of rank ``r`` in image ``i``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .extraction import InterestPointSet
from .geometry import INLIER, OUTLIER, LabeledMatches


class LossUndefinedError(ValueError):
    """No labeled matches: the loss normalizer would be zero."""


@dataclass(frozen=True)
class LossBreakdown:
    reinforcement: np.ndarray  # per point of the image's set
    rank: np.ndarray  # per point of the image's set
    n_inliers: int
    n_outliers: int
    total: float

    def as_dict(self) -> dict:
        return {
            "total": self.total,
            "n_inliers": self.n_inliers,
            "n_outliers": self.n_outliers,
            "reinforcement": self.reinforcement.tolist(),
            "rank": self.rank.tolist(),
        }


def _side_indices(labels: LabeledMatches, side: int):
    if side not in (0, 1):
        raise ValueError("side must be 0 or 1")
    m = labels.matches
    own, other = (m.idx0, m.idx1) if side == 0 else (m.idx1, m.idx0)
    return own, other


def _scores_at(S: np.ndarray, points: InterestPointSet) -> np.ndarray:
    xy = np.asarray(points.xy, dtype=np.int64).reshape(-1, 2)
    return S[xy[:, 1], xy[:, 0]]


def _check_scores(S) -> np.ndarray:
    S = np.asarray(S, dtype=np.float64)
    if not np.all(np.isfinite(S)) or S.min() < 0.0 or S.max() > 1.0:
        raise ValueError("scores must lie in [0, 1]")
    return S


def reinforcement_loss(S, points: InterestPointSet, labels: LabeledMatches, side: int) -> np.ndarray:
    """Per-point terms: 1 - S for inlier points, S for outlier points, else 0."""
    S = _check_scores(S)
    own, _ = _side_indices(labels, side)
    s = _scores_at(S, points)
    terms = np.zeros(len(points))
    inl = own[labels.labels == INLIER]
    out = own[labels.labels == OUTLIER]
    terms[inl] = 1.0 - s[inl]
    terms[out] = s[out]
    return terms


def rank_targets(points_i: InterestPointSet, points_j: InterestPointSet, labels: LabeledMatches,
                 side: int) -> tuple[np.ndarray, np.ndarray]:
    """(inlier point index, rank-target index) pairs within image ``side``."""
    own, other = _side_indices(labels, side)
    sel = labels.labels == INLIER
    p, m = own[sel], other[sel]
    # rank of the match in the other image, mapped through this image's inverse ranking
    r = points_j.ranks[m] if len(m) else np.zeros(0, dtype=np.int64)
    if len(r) and r.max() > len(points_i):
        raise ValueError("matched rank exceeds this image's point count; extract equal n on both sides")
    q = np.array([points_i.point_at_rank(int(k)) for k in r], dtype=np.int64)
    return p, q


def rank_loss(S, points_i: InterestPointSet, points_j: InterestPointSet, labels: LabeledMatches,
              side: int) -> np.ndarray:
    S = _check_scores(S)
    s = _scores_at(S, points_i)
    p, q = rank_targets(points_i, points_j, labels, side)
    terms = np.zeros(len(points_i))
    terms[p] = (s[p] - s[q]) ** 2
    return terms


def total_loss(S, points_i: InterestPointSet, points_j: InterestPointSet, labels: LabeledMatches,
               side: int) -> LossBreakdown:
    """Mean reinforcement over labeled matches plus mean rank term over inliers."""
    n_in, n_out = labels.n_inliers, labels.n_outliers
    if n_in + n_out == 0:
        raise LossUndefinedError("no inliers or outliers; loss is undefined")
    le = reinforcement_loss(S, points_i, labels, side)
    la = rank_loss(S, points_i, points_j, labels, side)
    total = le.sum() / (n_in + n_out)
    if n_in:
        total += la.sum() / n_in
    return LossBreakdown(le, la, n_in, n_out, float(total))


def loss_gradient(S, points_i: InterestPointSet, points_j: InterestPointSet, labels: LabeledMatches,
                  side: int) -> np.ndarray:
    """dL/dS per pixel, with rankings and rank targets held fixed."""
    S = _check_scores(S)
    n_in, n_out = labels.n_inliers, labels.n_outliers
    if n_in + n_out == 0:
        raise LossUndefinedError("no inliers or outliers; loss is undefined")
    own, _ = _side_indices(labels, side)
    xy = np.asarray(points_i.xy, dtype=np.int64).reshape(-1, 2)
    s = _scores_at(S, points_i)
    g_pts = np.zeros(len(points_i))
    norm = 1.0 / (n_in + n_out)
    np.add.at(g_pts, own[labels.labels == INLIER], -norm)
    np.add.at(g_pts, own[labels.labels == OUTLIER], norm)
    if n_in:
        p, q = rank_targets(points_i, points_j, labels, side)
        c = 2.0 * (s[p] - s[q]) / n_in
        np.add.at(g_pts, p, c)
        np.add.at(g_pts, q, -c)
    grad = np.zeros_like(S)
    np.add.at(grad, (xy[:, 1], xy[:, 0]), g_pts)
    return grad

"""Greedy non-maximum suppression and interest-point rankings."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class InterestPointSet:
    """Interest points with their scores.

    ``xy`` holds integer pixel coordinates as (x, y) rows. Sets built by
    :func:`nms_select` are ordered by descending score, so there the rank of
    point ``j`` is ``j + 1``. Ties rank by index.
    """

    xy: np.ndarray
    scores: np.ndarray
    nms_radius: float

    def __len__(self) -> int:
        return len(self.scores)

    def prefix(self, n: int) -> "InterestPointSet":
        return InterestPointSet(self.xy[:n], self.scores[:n], self.nms_radius)

    @cached_property
    def _order(self) -> np.ndarray:
        # index of the point holding each rank
        return np.argsort(-np.asarray(self.scores, dtype=np.float64), kind="stable")

    @cached_property
    def ranks(self) -> np.ndarray:
        r = np.empty(len(self), dtype=np.int64)
        r[self._order] = np.arange(1, len(self) + 1)
        return r

    def rank_of(self, j: int) -> int:
        if not 0 <= j < len(self):
            raise IndexError(f"point index {j} out of range for {len(self)} points")
        return int(self.ranks[j])

    def point_at_rank(self, rank: int) -> int:
        """Inverse ranking: index of the point holding ``rank``."""
        if not 1 <= rank <= len(self):
            raise IndexError(f"rank {rank} out of range for {len(self)} points")
        return int(self._order[rank - 1])


def _disk_offsets(radius: float) -> tuple[np.ndarray, np.ndarray]:
    r = int(np.floor(radius))
    dy, dx = np.mgrid[-r:r + 1, -r:r + 1]
    keep = dx * dx + dy * dy <= radius * radius
    return dy[keep], dx[keep]


def nms_select(score, n: int, radius: float) -> InterestPointSet:
    """Greedy NMS over the strictly positive pixels of ``score``.

    Repeatedly take the best unsuppressed pixel and suppress everything within
    Euclidean distance <= radius. Ties go to the smaller row-major index.
    """
    if n < 1 or radius < 1:
        raise ValueError("need n >= 1 and radius >= 1")
    s = np.asarray(score, dtype=np.float64)
    h, w = s.shape
    flat = s.ravel()
    cand = np.flatnonzero(flat > 0)
    order = cand[np.lexsort((cand, -flat[cand]))]
    suppressed = np.zeros((h, w), dtype=bool)
    sup_flat = suppressed.ravel()
    ody, odx = _disk_offsets(radius)
    picked = []
    for idx in order:
        if sup_flat[idx]:
            continue
        y, x = divmod(int(idx), w)
        picked.append(idx)
        if len(picked) == n:
            break
        yy, xx = y + ody, x + odx
        ok = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        suppressed[yy[ok], xx[ok]] = True
    picked = np.asarray(picked, dtype=np.int64)
    xy = np.stack([picked % w, picked // w], axis=1) if len(picked) else np.zeros((0, 2), np.int64)
    return InterestPointSet(xy, flat[picked].copy(), float(radius))


def ranks(points: InterestPointSet) -> np.ndarray:
    """Rank (1-based) of every point; 1 = highest score."""
    return points.ranks.copy()


def rank_of(points: InterestPointSet, j: int) -> int:
    return points.rank_of(j)

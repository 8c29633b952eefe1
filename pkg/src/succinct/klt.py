"""Pyramidal Lucas-Kanade tracking, KLT inlier labeling and training-pair selection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .descriptors import MatchSet
from .detectors import fast_score
from .extraction import InterestPointSet, nms_select
from .geometry import INLIER, OUTLIER, UNLABELED, LabeledMatches
from .image_core import gaussian_pyramid, gradients

ALIVE, LOST_BORDER, LOST_RESIDUAL = "alive", "lost_border", "lost_residual"
_STATUS = np.array([ALIVE, LOST_BORDER, LOST_RESIDUAL])

# inlier bound on both directional track-to-match distances, pixels
KLT_INLIER_DISTANCE = 3.0


@dataclass(frozen=True)
class KltParams:
    window: int = 11
    levels: int = 3
    max_iters: int = 30
    eps: float = 0.01
    min_eigenvalue: float = 1e-6
    max_residual: float = 0.05
    pyramid_sigma: float = 1.0


@dataclass(frozen=True)
class Track:
    origin: np.ndarray
    position: np.ndarray
    status: str

    @property
    def alive(self) -> bool:
        return self.status == ALIVE


class ImagePyramid:
    """Image pyramid plus per-level gradients, built once and reused across tracks."""

    def __init__(self, img, levels: int, sigma: float = 1.0):
        img = np.asarray(img, dtype=np.float32)
        h, w = img.shape
        feasible = 1
        while feasible < levels and -(-h // 2 ** feasible) >= 8 and -(-w // 2 ** feasible) >= 8:
            feasible += 1
        self.levels = [lvl.astype(np.float64) for lvl in gaussian_pyramid(img, feasible, sigma)]
        self.grads = [gradients(lvl) for lvl in self.levels]

    @property
    def shape(self) -> tuple[int, int]:
        return self.levels[0].shape


def bilinear(img: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Bilinear samples at (x, y); coordinates are clamped to the image."""
    h, w = img.shape
    x = np.clip(x, 0.0, w - 1.0)
    y = np.clip(y, 0.0, h - 1.0)
    x0 = np.minimum(np.floor(x).astype(np.int64), w - 2) if w > 1 else np.zeros_like(x, np.int64)
    y0 = np.minimum(np.floor(y).astype(np.int64), h - 2) if h > 1 else np.zeros_like(y, np.int64)
    ax, ay = x - x0, y - y0
    x1, y1 = np.minimum(x0 + 1, w - 1), np.minimum(y0 + 1, h - 1)
    return ((1 - ay) * ((1 - ax) * img[y0, x0] + ax * img[y0, x1])
            + ay * ((1 - ax) * img[y1, x0] + ax * img[y1, x1]))


def _as_pyramid(img, params: KltParams) -> ImagePyramid:
    return img if isinstance(img, ImagePyramid) else ImagePyramid(img, params.levels, params.pyramid_sigma)


def track_points(img0, img1, points, params: KltParams = KltParams()) -> tuple[np.ndarray, np.ndarray]:
    """Track many points at once.

    ``img0``/``img1`` may be arrays or prebuilt :class:`ImagePyramid` objects.
    Returns (positions (n, 2), status codes (n,) with 0 alive, 1 lost_border,
    2 lost_residual).
    """
    if params.window % 2 == 0:
        raise ValueError("window must be odd")
    pyr0, pyr1 = _as_pyramid(img0, params), _as_pyramid(img1, params)
    p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n = len(p)
    hw = params.window // 2
    oy, ox = np.mgrid[-hw:hw + 1, -hw:hw + 1]
    ox, oy = ox.ravel().astype(np.float64), oy.ravel().astype(np.float64)
    nlev = min(len(pyr0.levels), len(pyr1.levels))

    d = np.zeros((n, 2))
    G_fine = np.zeros((n, 2, 2))
    resid = np.zeros(n)
    for lvl in range(nlev - 1, -1, -1):
        scale = 0.5 ** lvl
        I0, I1 = pyr0.levels[lvl], pyr1.levels[lvl]
        gx0, gy0 = pyr0.grads[lvl]
        px = p[:, 0:1] * scale + ox
        py = p[:, 1:2] * scale + oy
        T = bilinear(I0, px, py)
        gx = bilinear(gx0, px, py)
        gy = bilinear(gy0, px, py)
        G = np.empty((n, 2, 2))
        G[:, 0, 0] = (gx * gx).sum(1)
        G[:, 0, 1] = G[:, 1, 0] = (gx * gy).sum(1)
        G[:, 1, 1] = (gy * gy).sum(1)
        det = G[:, 0, 0] * G[:, 1, 1] - G[:, 0, 1] ** 2
        safe = np.abs(det) > 1e-18
        inv = np.zeros_like(G)
        inv[safe, 0, 0] = G[safe, 1, 1] / det[safe]
        inv[safe, 1, 1] = G[safe, 0, 0] / det[safe]
        inv[safe, 0, 1] = inv[safe, 1, 0] = -G[safe, 0, 1] / det[safe]
        # coarse levels only help when well conditioned
        if lvl > 0:
            safe &= np.linalg.eigvalsh(G / float(len(ox)))[:, 0] >= params.min_eigenvalue
        d_enter = d.copy()
        active = safe.copy()
        for _ in range(params.max_iters):
            if not active.any():
                break
            a = np.flatnonzero(active)
            J = bilinear(I1, px[a] + d[a, 0:1], py[a] + d[a, 1:2])
            e = T[a] - J
            b = np.stack([(e * gx[a]).sum(1), (e * gy[a]).sum(1)], axis=1)
            step = np.einsum("nij,nj->ni", inv[a], b)
            norm = np.hypot(step[:, 0], step[:, 1])
            step *= np.minimum(1.0, hw / np.maximum(norm, 1e-300))[:, None]
            d[a] += step
            active[a] = np.hypot(step[:, 0], step[:, 1]) >= params.eps
        if lvl == 0:
            G_fine = G
            J = bilinear(I1, px + d[:, 0:1], py + d[:, 1:2])
            resid = np.abs(T - J).mean(axis=1)
        else:
            # a coarse estimate that left the level image is discarded
            lh, lw = I1.shape
            cx, cy = p[:, 0] * scale + d[:, 0], p[:, 1] * scale + d[:, 1]
            lost = (cx < 0) | (cx > lw - 1) | (cy < 0) | (cy > lh - 1)
            d[lost] = d_enter[lost]
            d *= 2.0

    q = p + d
    h, w = pyr1.shape
    h0, w0 = pyr0.shape
    status = np.zeros(n, dtype=np.int64)
    npx = float(params.window ** 2)
    eig_min = np.linalg.eigvalsh(G_fine / npx)[:, 0] if n else np.zeros(0)
    bad = (eig_min < params.min_eigenvalue) | (resid > params.max_residual) | ~np.all(np.isfinite(q), axis=1)
    status[bad] = 2
    out = ((q[:, 0] - hw < 0) | (q[:, 0] + hw > w - 1) | (q[:, 1] - hw < 0) | (q[:, 1] + hw > h - 1)
           | (p[:, 0] - hw < 0) | (p[:, 0] + hw > w0 - 1) | (p[:, 1] - hw < 0) | (p[:, 1] + hw > h0 - 1))
    out |= ~np.all(np.isfinite(q), axis=1)
    status[out] = 1
    return q, status


def klt_track(img0, img1, p, window: int = 11, levels: int = 3, max_iters: int = 30,
              eps: float = 0.01) -> Track:
    params = KltParams(window=window, levels=levels, max_iters=max_iters, eps=eps)
    q, st = track_points(img0, img1, np.asarray(p, dtype=np.float64)[None], params)
    return Track(np.asarray(p, dtype=np.float64), q[0], str(_STATUS[st[0]]))


def label_matches_klt(img0, img1, P0: InterestPointSet, P1: InterestPointSet, matches: MatchSet,
                      params: KltParams = KltParams()) -> LabeledMatches:
    """Bidirectional tracking check.

    Inlier iff both tracks survive and each lands within 3 px of the other
    point; unlabeled iff either track left the image; outlier otherwise.
    """
    labels = np.full(len(matches), OUTLIER, dtype=np.int64)
    if len(matches) == 0:
        return LabeledMatches(matches, labels)
    pyr0, pyr1 = _as_pyramid(img0, params), _as_pyramid(img1, params)
    p0 = np.asarray(P0.xy, dtype=np.float64)[matches.idx0]
    p1 = np.asarray(P1.xy, dtype=np.float64)[matches.idx1]
    fwd, st_f = track_points(pyr0, pyr1, p0, params)
    bwd, st_b = track_points(pyr1, pyr0, p1, params)
    close = ((np.linalg.norm(fwd - p1, axis=1) < KLT_INLIER_DISTANCE)
             & (np.linalg.norm(bwd - p0, axis=1) < KLT_INLIER_DISTANCE))
    labels[(st_f == 0) & (st_b == 0) & close] = INLIER
    labels[(st_f == 1) | (st_b == 1)] = UNLABELED
    return LabeledMatches(matches, labels)


@dataclass(frozen=True)
class TrainingPair:
    index0: int
    index1: int
    overlap: float


def track_pool(sequence, n_sel: int = 500, params: KltParams = KltParams(), fast_threshold: float = 0.05,
               radius: float = 5.0) -> list[np.ndarray]:
    """Track ids alive at every frame for a persistent, FAST-replenished point pool."""
    frames = [np.asarray(f, dtype=np.float32) for f in sequence]
    next_id = 0
    ids = np.zeros(0, dtype=np.int64)
    pos = np.zeros((0, 2))
    per_frame = []
    prev_pyr = None
    for f, img in enumerate(frames):
        pyr = ImagePyramid(img, params.levels, params.pyramid_sigma)
        if len(ids):
            pos, st = track_points(prev_pyr, pyr, pos, params)
            keep = st == 0
            ids, pos = ids[keep], pos[keep]
        want = n_sel - len(ids)
        if want > 0:
            score = fast_score(img, fast_threshold)
            # seeds must start trackable: a full window inside the frame
            hw = params.window // 2
            score[:hw + 1], score[-hw - 1:], score[:, :hw + 1], score[:, -hw - 1:] = 0, 0, 0, 0
            if len(ids):
                h, w = score.shape
                yy, xx = np.mgrid[0:h, 0:w]
                for x, y in pos:
                    score[(xx - x) ** 2 + (yy - y) ** 2 <= radius * radius] = 0.0
            if score.max() > 0:
                fresh = nms_select(score, want, radius)
                ids = np.concatenate([ids, np.arange(next_id, next_id + len(fresh))])
                pos = np.concatenate([pos, fresh.xy.astype(np.float64)])
                next_id += len(fresh)
        per_frame.append(ids.copy())
        prev_pyr = pyr
    return per_frame


def overlap_matrix(pool: list[np.ndarray]) -> np.ndarray:
    """Fraction of frame i's pool still tracked at frame j (j > i)."""
    n = len(pool)
    ov = np.zeros((n, n))
    for i in range(n):
        if len(pool[i]) == 0:
            continue
        for j in range(i + 1, n):
            ov[i, j] = np.intersect1d(pool[i], pool[j], assume_unique=True).size / len(pool[i])
    return ov


def select_training_pairs(sequence, o: float = 0.5, n_sel: int = 500, seed: int = 0, pairs_wanted: int = 100,
                          params: KltParams = KltParams(), max_retries: int = 20,
                          fast_threshold: float = 0.05, radius: float = 5.0) -> list[TrainingPair]:
    if len(sequence) < 2:
        raise ValueError("sequence needs at least two frames")
    if not 0 < o < 1:
        raise ValueError("overlap threshold must lie in (0, 1)")
    ov = overlap_matrix(track_pool(sequence, n_sel, params, fast_threshold, radius))
    n = len(sequence)
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(pairs_wanted):
        for _ in range(max_retries):
            i = int(rng.integers(n))
            cands = np.flatnonzero(ov[i] >= o)
            cands = cands[cands > i]
            if len(cands):
                j = int(cands[rng.integers(len(cands))])
                pairs.append(TrainingPair(i, j, float(ov[i, j])))
                break
    return pairs

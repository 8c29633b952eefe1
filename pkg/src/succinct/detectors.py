"""Classic per-pixel scoring functions and external score-map I/O.

Any of these can stand in for the trained network: they map an image to a
same-sized score map that only needs to be meaningful up to ordering.
"""

from __future__ import annotations

import enum
from pathlib import Path

import numpy as np

from .image_core import ImageFormatError, box_filter, gaussian_blur, gradients, load_png16_raw, save_png16


class DetectorKind(str, enum.Enum):
    HARRIS = "harris"
    SHI_TOMASI = "shitomasi"
    FAST = "fast"
    DOG = "dog"
    EXTERNAL = "external"
    NETWORK = "network"


def structure_tensor(img, window: int = 3) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if window < 3 or window % 2 == 0:
        raise ValueError("window must be odd and >= 3")
    a = np.asarray(img, dtype=np.float64)
    if min(a.shape) < window:
        raise ValueError("image smaller than window")
    ix, iy = gradients(a)
    # uniform weights: window mean times window area
    area = float(window * window)
    r = window // 2
    sxx = box_filter(ix * ix, r) * area
    syy = box_filter(iy * iy, r) * area
    sxy = box_filter(ix * iy, r) * area
    return sxx, syy, sxy


def harris_score(img, window: int = 3, kappa: float = 0.04) -> np.ndarray:
    if not 0.02 <= kappa <= 0.3:
        raise ValueError("kappa must lie in [0.02, 0.3]")
    sxx, syy, sxy = structure_tensor(img, window)
    tr = sxx + syy
    return sxx * syy - sxy * sxy - kappa * tr * tr


def shi_tomasi_score(img, window: int = 3) -> np.ndarray:
    sxx, syy, sxy = structure_tensor(img, window)
    tr = sxx + syy
    disc = np.sqrt(np.maximum((sxx - syy) ** 2 + 4.0 * sxy * sxy, 0.0))
    return 0.5 * (tr - disc)


# 16-pixel Bresenham circle of radius 3, clockwise from 12 o'clock, as (dx, dy)
FAST_CIRCLE = np.array([
    (0, -3), (1, -3), (2, -2), (3, -1), (3, 0), (3, 1), (2, 2), (1, 3),
    (0, 3), (-1, 3), (-2, 2), (-3, 1), (-3, 0), (-3, -1), (-2, -2), (-1, -3),
])
FAST_ARC = 9


def _best_arc_min(diff: np.ndarray) -> np.ndarray:
    """Max over all cyclic 9-arcs of the minimum value along the arc (axis 0)."""
    ext = np.concatenate([diff, diff[:FAST_ARC - 1]], axis=0)
    best = None
    for start in range(16):
        m = ext[start:start + FAST_ARC].min(axis=0)
        best = m if best is None else np.maximum(best, m)
    return best


def fast_score(img, threshold: float = 0.05) -> np.ndarray:
    """FAST-9 corner score.

    The score is the largest threshold for which the segment test still fires,
    i.e. the supremum a bisection over thresholds converges to. It is evaluated
    in closed form as the best 9-arc minimum of the brighter/darker differences.
    Non-corners and the 3-pixel border band score 0.
    """
    a = np.asarray(img, dtype=np.float64)
    h, w = a.shape
    if h < 7 or w < 7:
        raise ValueError("image must be at least 7x7")
    c = a[3:h - 3, 3:w - 3]
    ring = np.stack([a[3 + dy:h - 3 + dy, 3 + dx:w - 3 + dx] for dx, dy in FAST_CIRCLE])
    brighter = _best_arc_min(ring - c)
    darker = _best_arc_min(c - ring)
    s = np.maximum(brighter, darker)
    out = np.zeros_like(a)
    out[3:h - 3, 3:w - 3] = np.where(s > threshold, s, 0.0)
    return out


def dog_score(img, sigma: float = 1.0, k: float = 1.6) -> np.ndarray:
    if sigma <= 0 or k <= 1:
        raise ValueError("need sigma > 0 and k > 1")
    a = np.asarray(img, dtype=np.float64)
    return np.abs(gaussian_blur(a, k * sigma) - gaussian_blur(a, sigma))


def save_external_scoremap(path, score) -> None:
    """Store a [0, 1] score map as a 16-bit PNG (value / 65535 = score)."""
    s = np.asarray(score, dtype=np.float64)
    if s.min() < 0 or s.max() > 1:
        raise ValueError("external score maps must lie in [0, 1]")
    save_png16(path, np.round(s * 65535.0))


def load_external_scoremap(path, expected: tuple[int, int] | None = None) -> np.ndarray:
    """Load a 16-bit PNG score map; ``expected`` is (width, height)."""
    path = Path(path)
    try:
        raw = load_png16_raw(path)
    except (ImageFormatError, FileNotFoundError):
        raise
    except Exception as exc:  # PIL decode errors
        raise ImageFormatError(f"malformed score map {path}: {exc}") from exc
    if raw.ndim != 2:
        raise ImageFormatError(f"malformed score map {path}")
    if expected is not None and (raw.shape[1], raw.shape[0]) != tuple(expected):
        raise ValueError(
            f"score map {path} is {raw.shape[1]}x{raw.shape[0]}, expected {expected[0]}x{expected[1]}")
    return raw.astype(np.float64) / 65535.0


def score_image(img, kind: DetectorKind | str, **params) -> np.ndarray:
    """Dispatch to a classic detector by name."""
    kind = DetectorKind(kind)
    if kind is DetectorKind.HARRIS:
        return harris_score(img, **params)
    if kind is DetectorKind.SHI_TOMASI:
        return shi_tomasi_score(img, **params)
    if kind is DetectorKind.FAST:
        return fast_score(img, **params)
    if kind is DetectorKind.DOG:
        return dog_score(img, **params)
    raise ValueError(f"{kind.value} detector needs a score source, not an image")

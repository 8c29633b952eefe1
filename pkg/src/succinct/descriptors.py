"""256-bit binary patch descriptor and cross-checked brute-force matching."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .extraction import InterestPointSet
from .image_core import box_filter

N_BITS = 256
PATTERN_SIGMA = 6.0
PATTERN_EXTENT = 15
# pattern reach plus the 3x3 smoothing support
BORDER = PATTERN_EXTENT + 1


@dataclass(frozen=True)
class SamplingPattern:
    # (256, 4) int offsets: dx1, dy1, dx2, dy2
    pairs: np.ndarray
    seed: int


@dataclass(frozen=True)
class Descriptors:
    """Packed descriptors for the described subset of a point set."""

    index: np.ndarray  # point indices into the InterestPointSet
    bits: np.ndarray  # (m, 32) uint8, packed big-endian

    def __len__(self) -> int:
        return len(self.index)

    def subset(self, n: int) -> "Descriptors":
        """Descriptors of points with index < n (a prefix of the point set)."""
        keep = self.index < n
        return Descriptors(self.index[keep], self.bits[keep])


@dataclass(frozen=True)
class MatchSet:
    """One-to-one matches: indices into P0 and P1 with Hamming distances."""

    idx0: np.ndarray
    idx1: np.ndarray
    distance: np.ndarray

    def __len__(self) -> int:
        return len(self.idx0)

    @classmethod
    def empty(cls) -> "MatchSet":
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z.copy(), z.copy())

    def take(self, rows) -> "MatchSet":
        rows = np.asarray(rows, dtype=np.int64)
        return MatchSet(self.idx0[rows], self.idx1[rows], self.distance[rows])


def make_pattern(seed: int) -> SamplingPattern:
    rng = np.random.default_rng(seed)
    off = rng.normal(0.0, PATTERN_SIGMA, size=(N_BITS, 4))
    off = np.clip(np.rint(off), -PATTERN_EXTENT, PATTERN_EXTENT).astype(np.int64)
    return SamplingPattern(off, seed)


def describe(img, points: InterestPointSet, pattern: SamplingPattern) -> Descriptors:
    """Bit b is set iff the smoothed intensity at the first offset is strictly lower.

    Points closer than 16 px to the border are left undescribed.
    """
    a = np.asarray(img, dtype=np.float64)
    h, w = a.shape
    smooth = box_filter(a, 1)
    xy = np.asarray(points.xy, dtype=np.int64).reshape(-1, 2)
    x, y = xy[:, 0], xy[:, 1]
    ok = (x >= BORDER) & (x <= w - 1 - BORDER) & (y >= BORDER) & (y <= h - 1 - BORDER)
    idx = np.flatnonzero(ok)
    x, y = x[idx, None], y[idx, None]
    p = pattern.pairs
    v1 = smooth[y + p[:, 1], x + p[:, 0]]
    v2 = smooth[y + p[:, 3], x + p[:, 2]]
    bits = np.packbits(v1 < v2, axis=1)
    return Descriptors(idx, bits.reshape(len(idx), N_BITS // 8))


def hamming_matrix(b0: np.ndarray, b1: np.ndarray) -> np.ndarray:
    x = np.bitwise_xor(b0[:, None, :], b1[None, :, :])
    return np.bitwise_count(x).sum(axis=2, dtype=np.int64)


def match_brute_force(d0: Descriptors, d1: Descriptors) -> MatchSet:
    """Mutual nearest neighbours under Hamming distance; ties go to the smaller index."""
    if len(d0) == 0 or len(d1) == 0:
        return MatchSet.empty()
    dist = hamming_matrix(d0.bits, d1.bits)
    # argmin returns the first minimum, which is the smaller index
    fwd = dist.argmin(axis=1)
    bwd = dist.argmin(axis=0)
    rows = np.flatnonzero(bwd[fwd] == np.arange(len(d0)))
    cols = fwd[rows]
    return MatchSet(d0.index[rows], d1.index[cols], dist[rows, cols])

"""Score maps to labeled matches: NMS, description, matching and I/O labeling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .descriptors import Descriptors, MatchSet, SamplingPattern, describe, make_pattern, match_brute_force
from .extraction import InterestPointSet, nms_select
from .geometry import (
    CameraIntrinsics,
    LabeledMatches,
    Pose,
    PoseEstimationError,
    points3d_from_depth,
    ransac_p3p,
)
from .klt import KltParams, label_matches_klt


def derive_seed(*parts: int) -> int:
    """Stable 32-bit seed from a tuple of non-negative integers."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


@dataclass(frozen=True)
class PipelineConfig:
    n: int = 500
    nms_radius: float = 10.0
    method: str = "klt"
    pattern_seed: int = 0
    ransac_threshold: float = 2.0
    ransac_max_iters: int = 1000
    ransac_confidence: float = 0.99
    klt: KltParams = field(default_factory=KltParams)

    def __post_init__(self):
        if self.method not in ("klt", "p3p"):
            raise ValueError(f"unknown labeling method {self.method!r}")


@dataclass
class PairRun:
    P0: InterestPointSet
    P1: InterestPointSet
    matches: MatchSet
    labels: LabeledMatches | None
    pose: Pose | None = None


def extract_pair(S0, S1, n: int, radius: float) -> tuple[InterestPointSet, InterestPointSet]:
    """NMS on both maps, truncated to a common point count so rankings are comparable."""
    P0, P1 = nms_select(S0, n, radius), nms_select(S1, n, radius)
    m = min(len(P0), len(P1))
    return P0.prefix(m), P1.prefix(m)


def match_points(img0, img1, P0, P1, pattern: SamplingPattern) -> tuple[Descriptors, Descriptors, MatchSet]:
    d0, d1 = describe(img0, P0, pattern), describe(img1, P1, pattern)
    return d0, d1, match_brute_force(d0, d1)


def label_p3p(P0, P1, matches: MatchSet, K: CameraIntrinsics, depth0, cfg: PipelineConfig,
              seed: int) -> tuple[Pose, LabeledMatches]:
    X0 = points3d_from_depth(K, P0.xy, depth0)
    return ransac_p3p(P1.xy.astype(np.float64), X0, matches, K, cfg.ransac_threshold,
                      cfg.ransac_max_iters, seed, cfg.ransac_confidence)


def run_pair(S0, S1, img0, img1, cfg: PipelineConfig, K: CameraIntrinsics | None = None, depth0=None,
             seed: int = 0, pattern: SamplingPattern | None = None) -> PairRun:
    """One forward pass of the pose pipeline for an image pair.

    With the P3P method a failed RANSAC yields ``labels=None``.
    """
    pattern = pattern or make_pattern(cfg.pattern_seed)
    P0, P1 = extract_pair(S0, S1, cfg.n, cfg.nms_radius)
    _, _, matches = match_points(img0, img1, P0, P1, pattern)
    if cfg.method == "klt":
        return PairRun(P0, P1, matches, label_matches_klt(img0, img1, P0, P1, matches, cfg.klt))
    if K is None or depth0 is None:
        raise ValueError("the P3P method needs intrinsics and a depth map for image 0")
    try:
        pose, labels = label_p3p(P0, P1, matches, K, depth0, cfg, seed)
    except PoseEstimationError:
        return PairRun(P0, P1, matches, None)
    return PairRun(P0, P1, matches, labels, pose)

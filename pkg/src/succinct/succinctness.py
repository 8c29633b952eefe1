"""Minimal interest-point counts per pair, succinctness curves and AUC summaries.

For a pair and a required inlier count k, n_k is the smallest number of
interest points (extracted from both images) for which the pose pipeline
finds at least k inliers. Extraction happens once at n_max; smaller counts
are prefixes of that set, so each probe only re-runs matching and RANSAC.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .descriptors import SamplingPattern, make_pattern
from .extraction import InterestPointSet
from .geometry import CameraIntrinsics, Pose, PoseEstimationError, pose_errors, relative_pose
from .pipeline import PipelineConfig, derive_seed, extract_pair, label_p3p, match_points

MIN_K = 4  # fewest inliers that pin down a P3P pose uniquely


@dataclass(frozen=True)
class EvalPair:
    img0: np.ndarray
    img1: np.ndarray
    depth0: np.ndarray
    K: CameraIntrinsics
    gt: Pose  # relative pose, camera 0 to camera 1
    index0: int = 0
    index1: int = 1


@dataclass(frozen=True)
class PairResult:
    n_k: int | None
    e_R: float | None  # degrees
    e_t: float | None  # metres
    index0: int = 0
    index1: int = 1

    def __post_init__(self):
        if (self.n_k is None) != (self.e_R is None) or (self.n_k is None) != (self.e_t is None):
            raise ValueError("errors must be present exactly when n_k is")

    @property
    def found(self) -> bool:
        return self.n_k is not None


@dataclass(frozen=True)
class EvalPipeline:
    """Detector plus the fixed matching and P3P-RANSAC back end."""

    detector: Callable[[np.ndarray], np.ndarray]
    nms_radius: float = 10.0
    pattern_seed: int = 0
    ransac_threshold: float = 2.0
    ransac_max_iters: int = 1000
    ransac_confidence: float = 0.99

    def config(self, n_max: int) -> PipelineConfig:
        return PipelineConfig(n=n_max, nms_radius=self.nms_radius, method="p3p", pattern_seed=self.pattern_seed,
                              ransac_threshold=self.ransac_threshold, ransac_max_iters=self.ransac_max_iters,
                              ransac_confidence=self.ransac_confidence)


class PairProbe:
    """Pipeline runs at prefix sizes of one n_max extraction, memoized by n.

    The RANSAC seed for a probe depends only on (seed, n), so a cached run is
    valid for every k.
    """

    def __init__(self, pipeline: EvalPipeline, pair: EvalPair, n_max: int, seed: int,
                 pattern: SamplingPattern | None = None):
        if pair.depth0 is None or pair.gt is None:
            raise ValueError("evaluation needs depth for image 0 and a ground-truth pose")
        self.pipeline, self.pair, self.n_max, self.seed = pipeline, pair, n_max, seed
        self.cfg = pipeline.config(n_max)
        self.pattern = pattern or make_pattern(pipeline.pattern_seed)
        S0, S1 = pipeline.detector(pair.img0), pipeline.detector(pair.img1)
        self.P0, self.P1 = extract_pair(S0, S1, n_max, pipeline.nms_radius)
        self._cache: dict[int, tuple[int, Pose | None]] = {}
        self.probes: list[int] = []

    def __call__(self, n: int) -> tuple[int, Pose | None]:
        if n not in self._cache:
            self.probes.append(n)
            self._cache[n] = self._run(n)
        return self._cache[n]

    def _run(self, n: int) -> tuple[int, Pose | None]:
        p0, p1 = self.P0.prefix(n), self.P1.prefix(n)
        _, _, matches = match_points(self.pair.img0, self.pair.img1, p0, p1, self.pattern)
        try:
            pose, labels = label_p3p(p0, p1, matches, self.pair.K, self.pair.depth0, self.cfg,
                                     derive_seed(self.seed, n))
        except PoseEstimationError:
            return 0, None
        return labels.n_inliers, pose


def _check_k(k: int, n_max: int) -> None:
    if k < MIN_K:
        raise ValueError(f"k must be at least {MIN_K}")
    if n_max < k:
        raise ValueError("n_max must be at least k")


def search_nk(probe: Callable[[int], tuple[int, object]], k: int, n_max: int) -> int | None:
    """Binary search for the smallest n in [k, n_max] with at least k inliers."""
    _check_k(k, n_max)
    if probe(n_max)[0] < k:
        return None
    lo, hi = k, n_max  # hi always satisfies
    while lo < hi:
        mid = (lo + hi) // 2
        if probe(mid)[0] >= k:
            hi = mid
        else:
            lo = mid + 1
    return hi


def linear_scan_nk(probe: Callable[[int], tuple[int, object]], k: int, n_max: int) -> int | None:
    """Exhaustive reference for :func:`search_nk`."""
    _check_k(k, n_max)
    for n in range(k, n_max + 1):
        if probe(n)[0] >= k:
            return n
    return None


def _result(probe: PairProbe, n_k: int | None) -> PairResult:
    pair = probe.pair
    if n_k is None:
        return PairResult(None, None, None, pair.index0, pair.index1)
    e_R, e_t = pose_errors(probe(n_k)[1], pair.gt)
    return PairResult(n_k, e_R, e_t, pair.index0, pair.index1)


def find_nk(pipeline: EvalPipeline, pair: EvalPair, k: int = 10, n_max: int = 200, seed: int = 0,
            probe: PairProbe | None = None) -> PairResult:
    _check_k(k, n_max)
    probe = probe or PairProbe(pipeline, pair, n_max, seed)
    return _result(probe, search_nk(probe, k, n_max))


def succinctness_curve(results: list[PairResult], n_max: int) -> np.ndarray:
    """s(n) for n = 0..n_max: fraction of pairs with n_k <= n."""
    if not results:
        raise ValueError("no pair results")
    nk = np.array([r.n_k for r in results if r.found], dtype=np.int64)
    n = np.arange(n_max + 1)
    return (nk[None, :] <= n[:, None]).sum(axis=1) / len(results)


def auc(results: list[PairResult], n_max: int) -> float:
    if not results:
        raise ValueError("no pair results")
    total = sum(n_max - r.n_k for r in results if r.found and r.n_k <= n_max)
    return float(total) / (n_max * len(results))


def error_auc(results: list[PairResult], e_max: float = 1.0, which: str = "R") -> float:
    """Area under the fraction-of-pairs-below-error curve on [0, e_max], normalized."""
    if not results:
        raise ValueError("no pair results")
    if which not in ("R", "t"):
        raise ValueError("which must be 'R' or 't'")
    total = 0.0
    for r in results:
        if r.found:
            e = r.e_R if which == "R" else r.e_t
            total += max(0.0, 1.0 - e / e_max)
    return total / len(results)


def sample_eval_pairs(poses: list[Pose], delta_t: float = 5.0, delta_R: float = 30.0, l: int = 100,
                      seed: int = 0) -> tuple[list[tuple[int, int]], bool]:
    """Seeded draw without replacement from ordered pairs (i != j) close in position and heading.

    ``poses`` are camera-to-world. Returns (pairs, short) where ``short``
    flags that fewer than ``l`` candidates existed and all were returned.
    """
    cands = []
    for i in range(len(poses)):
        for j in range(len(poses)):
            if i == j:
                continue
            rel = relative_pose(poses[i], poses[j])
            ang, dist = pose_errors(rel, Pose.identity())
            if dist <= delta_t and ang <= delta_R:
                cands.append((i, j))
    if not cands:
        raise ValueError("no pair satisfies the distance and heading bounds")
    if len(cands) <= l:
        return cands, len(cands) < l
    rng = np.random.default_rng(seed)
    pick = np.sort(rng.choice(len(cands), size=l, replace=False))
    return [cands[i] for i in pick], False


@dataclass
class SuccinctnessReport:
    k: int
    n_max: int
    seed: int
    results: list[PairResult]
    curve: np.ndarray
    auc_n: float
    auc_R: float
    auc_t: float
    params: dict = field(default_factory=dict)

    @classmethod
    def build(cls, results: list[PairResult], k: int, n_max: int, seed: int, e_max_R: float = 1.0,
              e_max_t: float = 1.0, **params) -> "SuccinctnessReport":
        return cls(k, n_max, seed, list(results), succinctness_curve(results, n_max), auc(results, n_max),
                   error_auc(results, e_max_R, "R"), error_auc(results, e_max_t, "t"),
                   dict(params, e_max_R=e_max_R, e_max_t=e_max_t))

    def as_dict(self) -> dict:
        return {
            "k": self.k,
            "n_max": self.n_max,
            "seed": self.seed,
            "auc_n": self.auc_n,
            "auc_R": self.auc_R,
            "auc_t": self.auc_t,
            "params": self.params,
            "pairs": [{"index0": r.index0, "index1": r.index1, "n_k": r.n_k, "e_R": r.e_R, "e_t": r.e_t}
                      for r in self.results],
            "curve": self.curve.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SuccinctnessReport":
        results = [PairResult(p["n_k"], p["e_R"], p["e_t"], p["index0"], p["index1"]) for p in d["pairs"]]
        return cls(d["k"], d["n_max"], d["seed"], results, np.array(d["curve"], dtype=np.float64),
                   d["auc_n"], d["auc_R"], d["auc_t"], dict(d["params"]))


def make_eval_pairs(images, depths, poses: list[Pose], K: CameraIntrinsics,
                    index_pairs: list[tuple[int, int]]) -> list[EvalPair]:
    """EvalPairs from per-frame images, depth maps and camera-to-world poses."""
    return [EvalPair(images[i], images[j], depths[i], K, relative_pose(poses[i], poses[j]), i, j)
            for i, j in index_pairs]


def evaluate(pipeline: EvalPipeline, pairs: list[EvalPair], k: int = 10, n_max: int = 200,
             seed: int = 0, **params) -> SuccinctnessReport:
    if not pairs:
        raise ValueError("no evaluation pairs")
    results = [find_nk(pipeline, p, k, n_max, derive_seed(seed, p.index0, p.index1)) for p in pairs]
    return SuccinctnessReport.build(results, k, n_max, seed, **params)


def k_sweep(pipeline: EvalPipeline, pairs: list[EvalPair], ks: list[int], n_max: int = 200,
            seed: int = 0) -> list[tuple[int, float, float, float]]:
    """(k, AUC-n_max, AUC-1deg, AUC-1m) per k, with one extraction per pair."""
    if not pairs:
        raise ValueError("no evaluation pairs")
    for k in ks:
        _check_k(k, n_max)
    probes = [PairProbe(pipeline, p, n_max, derive_seed(seed, p.index0, p.index1)) for p in pairs]
    table = []
    for k in ks:
        res = [_result(pr, search_nk(pr, k, n_max)) for pr in probes]
        table.append((k, auc(res, n_max), error_auc(res, 1.0, "R"), error_auc(res, 1.0, "t")))
    return table

"""Unsupervised training of the score network with the matching pipeline in the loop."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .descriptors import SamplingPattern, make_pattern
from .geometry import CameraIntrinsics
from .loss import loss_gradient, total_loss
from .pipeline import PairRun, PipelineConfig, derive_seed, run_pair
from .scorenet import AdamState, FcnParams, adam_step, backward, forward


@dataclass(frozen=True)
class TrainPair:
    img0: np.ndarray
    img1: np.ndarray
    depth0: np.ndarray | None = None
    index0: int = 0
    index1: int = 1


@dataclass
class IterationLog:
    iteration: int
    index0: int
    index1: int
    skipped: bool
    loss: float | None = None
    loss0: float | None = None
    loss1: float | None = None
    n_inliers: int = 0
    n_outliers: int = 0
    n_matches: int = 0
    reason: str = ""

    def as_dict(self) -> dict:
        return asdict(self)


def _label(params, pair: TrainPair, cfg: PipelineConfig, K, seed, pattern):
    S0, S1 = forward(params, pair.img0), forward(params, pair.img1)
    run = run_pair(S0, S1, pair.img0, pair.img1, cfg, K, pair.depth0, seed, pattern)
    return S0, S1, run


def train_iteration(params: FcnParams, state: AdamState, pair: TrainPair, cfg: PipelineConfig,
                    K: CameraIntrinsics | None = None, seed: int = 0, pattern: SamplingPattern | None = None,
                    iteration: int = 0) -> tuple[FcnParams, AdamState, IterationLog]:
    """One pair: forward both images, label matches, then one Adam step per image.

    Both gradients come from the same forward pass; the image-0 step is
    applied first. Iterations without labeled matches leave everything as is.
    """
    if cfg.method == "p3p" and (pair.depth0 is None or K is None):
        raise ValueError("the P3P method needs depth for image 0 and intrinsics")
    pattern = pattern or make_pattern(cfg.pattern_seed)
    S0, S1, run = _label(params, pair, cfg, K, seed, pattern)
    log = IterationLog(iteration, pair.index0, pair.index1, True, n_matches=len(run.matches))
    if run.labels is None:
        log.reason = "pose estimation failed"
        return params, state, log
    lab = run.labels
    log.n_inliers, log.n_outliers = lab.n_inliers, lab.n_outliers
    if lab.n_inliers + lab.n_outliers == 0:
        log.reason = "no labeled matches"
        return params, state, log
    l0 = total_loss(S0, run.P0, run.P1, lab, 0).total
    l1 = total_loss(S1, run.P1, run.P0, lab, 1).total
    g0 = backward(params, pair.img0, loss_gradient(S0, run.P0, run.P1, lab, 0))
    g1 = backward(params, pair.img1, loss_gradient(S1, run.P1, run.P0, lab, 1))
    params, state = adam_step(params, g0, state)
    params, state = adam_step(params, g1, state)
    log.skipped = False
    log.loss0, log.loss1, log.loss = l0, l1, 0.5 * (l0 + l1)
    return params, state, log


@dataclass
class TrainResult:
    params: FcnParams
    state: AdamState
    logs: list[IterationLog] = field(default_factory=list)

    def losses(self) -> np.ndarray:
        return np.array([lg.loss for lg in self.logs if not lg.skipped], dtype=np.float64)


def train(params: FcnParams, pairs: list[TrainPair], cfg: PipelineConfig, iters: int, seed: int = 0,
          K: CameraIntrinsics | None = None, lr: float = 1e-5, state: AdamState | None = None,
          callback=None) -> TrainResult:
    """Seeded pair order; ``callback(iteration, params, log)`` runs after each iteration."""
    if not pairs:
        raise ValueError("no training pairs")
    rng = np.random.default_rng(derive_seed(seed, 1))
    order = rng.integers(len(pairs), size=iters)
    state = state or AdamState.for_params(params, lr=lr)
    pattern = make_pattern(cfg.pattern_seed)
    logs = []
    for it, k in enumerate(order):
        params, state, log = train_iteration(params, state, pairs[int(k)], cfg, K, derive_seed(seed, 2, it),
                                             pattern, it)
        logs.append(log)
        if callback is not None:
            callback(it, params, log)
    return TrainResult(params, state, logs)


def inlier_rank_correlation(params: FcnParams, pairs: list[TrainPair], cfg: PipelineConfig,
                            K: CameraIntrinsics | None = None, seed: int = 0) -> float:
    """Mean Spearman correlation of matched inlier scores across pairs.

    Pairs with fewer than three inliers are left out; NaN if none remain.
    """
    pattern = make_pattern(cfg.pattern_seed)
    vals = []
    for i, pair in enumerate(pairs):
        S0, S1, run = _label(params, pair, cfg, K, derive_seed(seed, 3, i), pattern)
        rho = _pair_correlation(S0, S1, run)
        if rho is not None:
            vals.append(rho)
    return float(np.mean(vals)) if vals else float("nan")


def _pair_correlation(S0, S1, run: PairRun) -> float | None:
    from scipy.stats import spearmanr

    if run.labels is None:
        return None
    inl = run.labels.inliers
    if len(inl) < 3:
        return None
    a = S0[run.P0.xy[inl.idx0, 1], run.P0.xy[inl.idx0, 0]]
    b = S1[run.P1.xy[inl.idx1, 1], run.P1.xy[inl.idx1, 0]]
    rho = spearmanr(a, b).statistic
    return None if not np.isfinite(rho) else float(rho)

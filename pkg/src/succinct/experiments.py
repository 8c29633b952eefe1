"""Seeded end-to-end experiments on synthetic scenes, shared by the scripts and the acceptance suite."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .detectors import harris_score
from .geometry import CameraIntrinsics
from .pipeline import PipelineConfig
from .scorenet import FcnConfig, FcnParams, forward, init_params
from .succinctness import (
    EvalPipeline,
    SuccinctnessReport,
    evaluate,
    make_eval_pairs,
    sample_eval_pairs,
)
from .synthetic import Room, SyntheticScene, Trajectory, render_synthetic
from .train import TrainPair, TrainResult, inlier_rank_correlation, train


@dataclass(frozen=True)
class SyntheticEvalConfig:
    """Harris + exact depth on a rendered room; the closed-loop pose check.

    A long focal length and small splats keep integer-pixel keypoints
    accurate enough for sub-0.1 degree poses on most pairs.
    """

    seed: int = 0
    size: tuple[int, int] = (1280, 960)
    focal: float = 960.0
    n_points: int = 20000
    splat_sigma: float = 0.0025
    room: Room = Room(lo=(-1.0, -0.75, -3.0), hi=(1.0, 0.75, 4.0))
    trajectory: Trajectory = Trajectory(n_frames=12, step=0.05, lateral=0.15, yaw_deg=5.0, vertical=0.05)
    k: int = 10
    n_max: int = 200
    l: int = 20
    nms_radius: float = 10.0
    delta_t: float = 5.0
    delta_R: float = 30.0

    @property
    def K(self) -> CameraIntrinsics:
        w, h = self.size
        return CameraIntrinsics(self.focal, self.focal, (w - 1) / 2.0, (h - 1) / 2.0)

    def render(self) -> SyntheticScene:
        return render_synthetic(self.seed, self.n_points, self.trajectory, self.size, self.K, self.room,
                                self.splat_sigma)


def run_synthetic_eval(cfg: SyntheticEvalConfig = SyntheticEvalConfig(),
                       scene: SyntheticScene | None = None) -> SuccinctnessReport:
    scene = scene or cfg.render()
    idx, short = sample_eval_pairs(scene.poses, cfg.delta_t, cfg.delta_R, cfg.l, cfg.seed)
    pairs = make_eval_pairs(scene.images, scene.depths, scene.poses, scene.K, idx)
    pipe = EvalPipeline(harris_score, cfg.nms_radius, pattern_seed=cfg.seed)
    return evaluate(pipe, pairs, cfg.k, cfg.n_max, cfg.seed, detector="harris", l=cfg.l, short_sample=short,
                    delta_t=cfg.delta_t, delta_R=cfg.delta_R)


@dataclass(frozen=True)
class TrainingExperimentConfig:
    """Small-image training run with KLT labels and a held-out P3P evaluation."""

    seed: int = 0
    scene_seed: int = 1
    size: tuple[int, int] = (128, 96)
    n_points: int = 1500
    trajectory: Trajectory = Trajectory(n_frames=24, step=0.05, lateral=0.1, yaw_deg=3.0, vertical=0.03)
    train_frames: int = 14  # pairs (i, i+d) start below this frame
    heldout_frames: tuple[int, int] = (16, 21)
    gaps: tuple[int, ...] = (1, 2, 3)
    depth: int = 2
    iters: int = 300
    lr: float = 1e-5
    n: int = 500
    nms_radius: float = 10.0
    k: int = 10
    n_max: int = 200

    def pipeline(self) -> PipelineConfig:
        return PipelineConfig(n=self.n, nms_radius=self.nms_radius, method="klt", pattern_seed=self.seed)


@dataclass
class TrainingOutcome:
    result: TrainResult
    rho_start: float
    rho_end: float
    loss_first: float
    loss_last: float
    auc_network: float
    auc_random: float
    reports: dict = field(default_factory=dict)
    seconds: float = 0.0

    def summary(self) -> dict:
        d = asdict(self)
        del d["result"], d["reports"]
        return d


def _pairs(scene: SyntheticScene, starts, gaps) -> list[TrainPair]:
    n = len(scene.images)
    return [TrainPair(scene.images[i], scene.images[i + d], scene.depths[i], i, i + d)
            for i in starts for d in gaps if i + d < n]


def network_detector(params: FcnParams):
    return lambda img: forward(params, img)


def random_detector(seed: int):
    """Uniform random score map; the stream depends only on ``seed`` and call order."""
    rng = np.random.default_rng(seed)
    return lambda img: rng.uniform(size=np.shape(img))


def heldout_auc(detector, scene: SyntheticScene, cfg: TrainingExperimentConfig) -> SuccinctnessReport:
    lo, hi = cfg.heldout_frames
    idx = [(i, i + d) for i in range(lo, hi) for d in cfg.gaps if i + d < len(scene.images)]
    pairs = make_eval_pairs(scene.images, scene.depths, scene.poses, scene.K, idx)
    pipe = EvalPipeline(detector, cfg.nms_radius, pattern_seed=cfg.seed)
    return evaluate(pipe, pairs, cfg.k, cfg.n_max, cfg.seed)


def run_training_experiment(cfg: TrainingExperimentConfig = TrainingExperimentConfig(),
                            callback=None) -> TrainingOutcome:
    t0 = time.perf_counter()
    scene = render_synthetic(cfg.scene_seed, cfg.n_points, cfg.trajectory, cfg.size)
    train_pairs = _pairs(scene, range(cfg.train_frames), cfg.gaps)
    held = _pairs(scene, range(*cfg.heldout_frames), cfg.gaps)
    pcfg = cfg.pipeline()
    params = init_params(FcnConfig(depth=cfg.depth, seed=cfg.seed))
    rho0 = inlier_rank_correlation(params, held, pcfg, seed=cfg.seed)
    res = train(params, train_pairs, pcfg, cfg.iters, cfg.seed, lr=cfg.lr, callback=callback)
    rho1 = inlier_rank_correlation(res.params, held, pcfg, seed=cfg.seed)
    L = res.losses()
    m = max(1, len(L) // 10)
    rep_net = heldout_auc(network_detector(res.params), scene, cfg)
    rep_rand = heldout_auc(random_detector(cfg.seed), scene, cfg)
    return TrainingOutcome(res, rho0, rho1, float(L[:m].mean()), float(L[-m:].mean()), rep_net.auc_n,
                           rep_rand.auc_n, {"network": rep_net, "random": rep_rand},
                           time.perf_counter() - t0)

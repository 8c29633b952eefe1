"""Command line entry point: ``succinct <command> ...``.

Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("succinct")

DEFAULTS = {
    "n": 500,
    "nms_radius": 10.0,
    "k": 10,
    "n_max": 200,
    "l": 100,
    "delta_t": 5.0,
    "delta_R": 30.0,
    "ransac_threshold": 2.0,
    "ransac_max_iters": 1000,
    "ransac_confidence": 0.99,
    "lr": 1e-5,
    "overlap": 0.5,
    "n_sel": 500,
}


class UsageError(Exception):
    pass


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="succinct", description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None, help="BLAS thread count")
    p.add_argument("--config", type=Path, default=None, help="JSON file overriding defaults")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def detector_args(sp):
        sp.add_argument("--detector", default="harris",
                        choices=["harris", "shitomasi", "fast", "dog", "external", "network"])
        sp.add_argument("--checkpoint", type=Path, help="network weights (detector=network)")
        sp.add_argument("--score-dir", type=Path, help="16-bit score maps named like the images (detector=external)")

    sp = sub.add_parser("score", help="score map of one image")
    detector_args(sp)
    sp.add_argument("image", type=Path)
    sp.add_argument("out", type=Path, help="16-bit PNG output")

    sp = sub.add_parser("extract", help="NMS interest points of one image")
    detector_args(sp)
    sp.add_argument("image", type=Path)
    sp.add_argument("--n", type=int)
    sp.add_argument("--radius", type=float)

    sp = sub.add_parser("match", help="match two images")
    detector_args(sp)
    sp.add_argument("image0", type=Path)
    sp.add_argument("image1", type=Path)
    sp.add_argument("--n", type=int)
    sp.add_argument("--radius", type=float)

    sp = sub.add_parser("pose", help="P3P pose between two frames of a dataset")
    detector_args(sp)
    sp.add_argument("--dataset", type=Path, required=True)
    sp.add_argument("i", type=int)
    sp.add_argument("j", type=int)
    sp.add_argument("--n", type=int)

    sp = sub.add_parser("eval", help="succinctness evaluation")
    detector_args(sp)
    sp.add_argument("--dataset", type=Path, required=True)
    sp.add_argument("--k", type=int)
    sp.add_argument("--n-max", type=int)
    sp.add_argument("--l", type=int)
    sp.add_argument("--out", type=Path, default=Path("eval_out"))

    sp = sub.add_parser("train", help="train the score network")
    sp.add_argument("--dataset", type=Path, required=True)
    sp.add_argument("--method", choices=["klt", "p3p"], default="klt")
    sp.add_argument("--depth", type=int, default=2)
    sp.add_argument("--iters", type=int, default=300)
    sp.add_argument("--pairs", type=Path, help="pair list from make-pairs; default: consecutive frames")
    sp.add_argument("--out", type=Path, default=Path("scorenet.bin"))

    sp = sub.add_parser("make-pairs", help="overlap-based training pairs")
    sp.add_argument("--dataset", type=Path, required=True)
    sp.add_argument("--count", type=int, default=100)
    sp.add_argument("--out", type=Path, default=None)

    sp = sub.add_parser("synth", help="render a synthetic sequence to disk")
    sp.add_argument("out", type=Path)
    sp.add_argument("--frames", type=int, default=12)
    sp.add_argument("--width", type=int, default=320)
    sp.add_argument("--height", type=int, default=240)
    sp.add_argument("--points", type=int, default=3000)
    sp.add_argument("--step", type=float, default=0.05)

    sp = sub.add_parser("loss", help="debug: loss breakdown for one image of a labeled pair")
    sp.add_argument("--score", type=Path, required=True, help="16-bit score map of image `side`")
    sp.add_argument("--points0", type=Path, required=True, help="CSV rows x,y,score")
    sp.add_argument("--points1", type=Path, required=True, help="CSV rows x,y,score")
    sp.add_argument("--labels", type=Path, required=True, help="CSV rows idx0,idx1,label (1 in, 0 out, -1 none)")
    sp.add_argument("--side", type=int, choices=[0, 1], default=0)

    sp = sub.add_parser("report", help="summarize a report.json")
    sp.add_argument("path", type=Path)
    return p


def _load_config(path: Path | None) -> dict:
    cfg = dict(DEFAULTS)
    if path is None:
        return cfg
    try:
        extra = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    unknown = set(extra) - set(DEFAULTS)
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    cfg.update(extra)
    return cfg


def _detector(args):
    """Callable image -> score map for the chosen detector."""
    from .detectors import load_external_scoremap, score_image

    kind = args.detector
    if kind == "network":
        if args.checkpoint is None:
            raise UsageError("--detector network needs --checkpoint")
        from .scorenet import forward, load_checkpoint

        params = load_checkpoint(args.checkpoint)
        return lambda img: forward(params, img)
    if kind == "external":
        if args.score_dir is None:
            raise UsageError("--detector external needs --score-dir")
        lookup = {}

        def ext(img):
            key = lookup[id(img)]
            return load_external_scoremap(args.score_dir / key.name, (img.shape[1], img.shape[0]))
        ext.lookup = lookup
        return ext
    return lambda img: score_image(img, kind)


def _load(detector, path: Path):
    from .image_core import load_image

    img = load_image(path)
    if hasattr(detector, "lookup"):
        detector.lookup[id(img)] = path
    return img


def _pipeline_config(cfg: dict, **over):
    from .pipeline import PipelineConfig

    kw = dict(n=cfg["n"], nms_radius=cfg["nms_radius"], ransac_threshold=cfg["ransac_threshold"],
              ransac_max_iters=cfg["ransac_max_iters"], ransac_confidence=cfg["ransac_confidence"])
    kw.update(over)
    return PipelineConfig(**kw)


def cmd_score(args, cfg):
    from .detectors import save_external_scoremap

    det = _detector(args)
    img = _load(det, args.image)
    S = det(img)
    lo, hi = float(S.min()), float(S.max())
    # classic detector responses are unbounded; rescale for storage
    if lo < 0 or hi > 1:
        S = (S - lo) / (hi - lo) if hi > lo else S * 0.0
    save_external_scoremap(args.out, S)
    print(json.dumps({"image": str(args.image), "out": str(args.out), "min": lo, "max": hi}))


def cmd_extract(args, cfg):
    from .extraction import nms_select

    det = _detector(args)
    img = _load(det, args.image)
    P = nms_select(det(img), args.n or cfg["n"], args.radius or cfg["nms_radius"])
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["x", "y", "score", "rank"])
    w.writerows((int(x), int(y), repr(float(s)), int(r)) for (x, y), s, r in zip(P.xy, P.scores, P.ranks))


def cmd_match(args, cfg):
    from .descriptors import make_pattern
    from .pipeline import extract_pair, match_points

    det = _detector(args)
    img0, img1 = _load(det, args.image0), _load(det, args.image1)
    P0, P1 = extract_pair(det(img0), det(img1), args.n or cfg["n"], args.radius or cfg["nms_radius"])
    _, _, m = match_points(img0, img1, P0, P1, make_pattern(args.seed))
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["idx0", "idx1", "hamming"])
    w.writerows(zip(m.idx0.tolist(), m.idx1.tolist(), m.distance.tolist()))


def _dataset(path):
    from .dataset import load_dataset

    ds = load_dataset(path)
    for note in ds.notes:
        log.info("%s: %s", path, note)
    return ds


def cmd_pose(args, cfg):
    from .geometry import pose_errors, relative_pose
    from .pipeline import run_pair

    ds = _dataset(args.dataset)
    if not ds.has_depth:
        raise FileNotFoundError(f"{args.dataset} has no depth or stereo data")
    det = _detector(args)
    img0, img1 = _load(det, ds.images[args.i]), _load(det, ds.images[args.j])
    run = run_pair(det(img0), det(img1), img0, img1, _pipeline_config(cfg, n=args.n or cfg["n_max"], method="p3p"),
                   ds.K, ds.depth(args.i), args.seed)
    if run.pose is None:
        raise ArithmeticError("pose estimation failed")
    out = {"R": run.pose.R.tolist(), "t": run.pose.t.tolist(), "inliers": run.labels.n_inliers,
           "matches": len(run.matches)}
    if ds.poses is not None:
        out["e_R_deg"], out["e_t_m"] = pose_errors(run.pose, relative_pose(ds.poses[args.i], ds.poses[args.j]))
    print(json.dumps(out))


def cmd_eval(args, cfg):
    from .dataset import write_report
    from .geometry import relative_pose
    from .succinctness import EvalPair, EvalPipeline, evaluate, sample_eval_pairs

    ds = _dataset(args.dataset)
    if not ds.can_evaluate:
        raise FileNotFoundError(f"{args.dataset} needs poses and depth (or stereo) for evaluation")
    k, n_max, l = args.k or cfg["k"], args.n_max or cfg["n_max"], args.l or cfg["l"]
    idx, short = sample_eval_pairs(ds.poses, cfg["delta_t"], cfg["delta_R"], l, args.seed)
    det = _detector(args)
    pipe = EvalPipeline(det, cfg["nms_radius"], args.seed, cfg["ransac_threshold"], cfg["ransac_max_iters"],
                        cfg["ransac_confidence"])
    cache = {}

    def img(i):
        if i not in cache:
            cache[i] = _load(det, ds.images[i])
        return cache[i]

    pairs = [EvalPair(img(i), img(j), ds.depth(i), ds.K, relative_pose(ds.poses[i], ds.poses[j]), i, j)
             for i, j in idx]
    report = evaluate(pipe, pairs, k, n_max, args.seed, detector=args.detector, l=l, short_sample=short,
                      delta_t=cfg["delta_t"], delta_R=cfg["delta_R"], dataset=str(args.dataset))
    paths = write_report(report, args.out)
    print(json.dumps({"auc_n": report.auc_n, "auc_R": report.auc_R, "auc_t": report.auc_t,
                      "pairs": len(pairs), "report": str(paths["json"])}))


def _read_pairs(path: Path) -> list[tuple[int, int]]:
    return [(int(r[0]), int(r[1])) for r in _read_csv_rows(path, 3)]


def cmd_train(args, cfg):
    from .scorenet import FcnConfig, init_params, save_checkpoint
    from .train import TrainPair, train

    ds = _dataset(args.dataset)
    if args.method == "p3p" and not ds.can_train_p3p:
        raise FileNotFoundError(f"{args.dataset} has no depth for the P3P method")
    idx = _read_pairs(args.pairs) if args.pairs else [(i, i + 1) for i in range(len(ds) - 1)]
    if not idx:
        raise FileNotFoundError("no training pairs")
    imgs = {}
    for i in sorted({i for p in idx for i in p}):
        imgs[i] = ds.image(i)
    depth = {i: ds.depth(i) for i, _ in idx} if args.method == "p3p" else {}
    pairs = [TrainPair(imgs[i], imgs[j], depth.get(i), i, j) for i, j in idx]
    params = init_params(FcnConfig(depth=args.depth, seed=args.seed))
    pcfg = _pipeline_config(cfg, method=args.method)

    def progress(it, _params, lg):
        if lg.skipped:
            log.info("iter %d skipped: %s", it, lg.reason)
        else:
            log.info("iter %d loss %.5f |I|=%d |O|=%d", it, lg.loss, lg.n_inliers, lg.n_outliers)

    res = train(params, pairs, pcfg, args.iters, args.seed, ds.K, cfg["lr"], callback=progress)
    save_checkpoint(args.out, res.params, [lg.as_dict() for lg in res.logs])
    losses = res.losses()
    print(json.dumps({"checkpoint": str(args.out), "iterations": args.iters,
                      "skipped": sum(lg.skipped for lg in res.logs),
                      "final_loss": float(losses[-1]) if len(losses) else None}))


def cmd_make_pairs(args, cfg):
    from .klt import select_training_pairs

    ds = _dataset(args.dataset)
    frames = [ds.image(i) for i in range(len(ds))]
    pairs = select_training_pairs(frames, cfg["overlap"], cfg["n_sel"], args.seed, args.count)
    text = "idx0,idx1,overlap\n" + "".join(f"{p.index0},{p.index1},{p.overlap!r}\n" for p in pairs)
    if args.out:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)


def cmd_synth(args, cfg):
    from .dataset import write_synthetic
    from .synthetic import Trajectory, render_synthetic

    if min(args.frames, args.width, args.height, args.points) <= 0:
        raise UsageError("frames, size and point count must be positive")
    scene = render_synthetic(args.seed, args.points, Trajectory(args.frames, args.step, lateral=0.1, yaw_deg=3.0,
                                                                vertical=0.03), (args.width, args.height))
    ds = write_synthetic(scene, args.out)
    print(json.dumps({"out": str(args.out), "frames": len(ds), "K": asdict(ds.K)}))


def cmd_report(args, cfg):
    from .dataset import read_report

    rep = read_report(args.path)
    found = [r for r in rep.results if r.found]
    print(f"k={rep.k} n_max={rep.n_max} pairs={len(rep.results)} found={len(found)}")
    print(f"AUC-{rep.n_max}={rep.auc_n:.4f} AUC-1deg={rep.auc_R:.4f} AUC-1m={rep.auc_t:.4f}")


def _read_csv_rows(path: Path, ncols: int) -> list[list[str]]:
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#"):
                continue
            if len(row) != ncols:
                raise ValueError(f"{path}: expected {ncols} columns, got {len(row)}")
            rows.append(row)
    # a non-numeric first row is a header
    if rows and not rows[0][0].lstrip("-").isdigit():
        rows = rows[1:]
    return rows


def cmd_loss(args, cfg):
    import numpy as np

    from .descriptors import MatchSet
    from .detectors import load_external_scoremap
    from .extraction import InterestPointSet
    from .geometry import LabeledMatches
    from .loss import total_loss

    def points(path):
        rows = _read_csv_rows(path, 3)
        xy = np.array([[int(r[0]), int(r[1])] for r in rows], dtype=np.int64).reshape(-1, 2)
        return InterestPointSet(xy, np.array([float(r[2]) for r in rows]), cfg["nms_radius"])

    P0, P1 = points(args.points0), points(args.points1)
    rows = _read_csv_rows(args.labels, 3)
    i0 = np.array([int(r[0]) for r in rows], dtype=np.int64)
    i1 = np.array([int(r[1]) for r in rows], dtype=np.int64)
    lab = np.array([int(r[2]) for r in rows], dtype=np.int64)
    labels = LabeledMatches(MatchSet(i0, i1, np.zeros(len(rows), dtype=np.int64)), lab)
    S = load_external_scoremap(args.score)
    Pi, Pj = (P0, P1) if args.side == 0 else (P1, P0)
    print(json.dumps(total_loss(S, Pi, Pj, labels, args.side).as_dict()))


COMMANDS = {
    "score": cmd_score, "extract": cmd_extract, "match": cmd_match, "pose": cmd_pose, "eval": cmd_eval,
    "train": cmd_train, "make-pairs": cmd_make_pairs, "synth": cmd_synth, "report": cmd_report,
    "loss": cmd_loss,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    try:
        cfg = _load_config(args.config)
        COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, ValueError, KeyError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ArithmeticError, FloatingPointError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""How accurate can a pose from integer-pixel keypoints be?

Projects a handful of points at 2-4 m, rounds to whole pixels, refits the pose
from ground truth by Gauss-Newton and reports how often both the rotation and
translation errors stay under the given bounds, per focal length.

    python scripts/pose_accuracy_bound.py --points 10 --trials 500
"""

import argparse

import numpy as np

from succinct.geometry import CameraIntrinsics, Pose, pose_errors, project, refine_pose, rodrigues


def trial(rng, K, size, n_points):
    w, h = size
    gt = Pose(rodrigues(rng.normal(size=3) * np.deg2rad(3)), rng.normal(size=3) * 0.1)
    uv0 = rng.uniform([0.1 * w, 0.1 * h], [0.9 * w, 0.9 * h], size=(n_points, 2))
    z = rng.uniform(2.0, 4.0, n_points)
    X = np.column_stack([(uv0[:, 0] - K.cx) / K.fx * z, (uv0[:, 1] - K.cy) / K.fy * z, z])
    uv = np.round(project(gt, K, X))
    est = refine_pose(gt, K, X, uv)
    return pose_errors(est, gt)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=10)
    ap.add_argument("--trials", type=int, default=500)
    ap.add_argument("--e-R", type=float, default=0.1)
    ap.add_argument("--e-t", type=float, default=0.01)
    args = ap.parse_args()

    print("focal,width,height,fraction_within,median_e_R,median_e_t")
    for f, (w, h) in [(240, (320, 240)), (480, (640, 480)), (960, (1280, 960)), (960, (640, 480))]:
        K = CameraIntrinsics(f, f, (w - 1) / 2, (h - 1) / 2)
        rng = np.random.default_rng(0)
        errs = np.array([trial(rng, K, (w, h), args.points) for _ in range(args.trials)])
        ok = np.mean((errs[:, 0] < args.e_R) & (errs[:, 1] < args.e_t))
        print(f"{f},{w},{h},{ok:.3f},{np.median(errs[:, 0]):.4f},{np.median(errs[:, 1]):.5f}")


if __name__ == "__main__":
    main()

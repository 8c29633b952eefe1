"""Forward-pass time of the score network against its depth, with a linear fit.

    python scripts/depth_sweep.py --depths 2 4 8 16 --size 128
"""

import argparse
import time

import numpy as np

from succinct.scorenet import FcnConfig, forward, init_params


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--depths", type=int, nargs="+", default=[2, 4, 8, 16])
    ap.add_argument("--size", type=int, default=128)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    img = np.random.default_rng(0).uniform(size=(args.size, args.size))
    times = []
    print("depth,ms")
    for d in args.depths:
        params = init_params(FcnConfig(depth=d))
        forward(params, img)
        best = np.inf
        for _ in range(args.repeats):
            t = time.perf_counter()
            forward(params, img)
            best = min(best, time.perf_counter() - t)
        times.append(best)
        print(f"{d},{1e3 * best:.2f}", flush=True)
    x, y = np.array(args.depths, float), np.array(times)
    slope, icpt = np.polyfit(x, y, 1)
    r2 = 1 - np.sum((y - slope * x - icpt) ** 2) / np.sum((y - y.mean()) ** 2)
    print(f"# slope {1e3 * slope:.2f} ms/layer, intercept {1e3 * icpt:.2f} ms, R^2 {r2:.4f}")


if __name__ == "__main__":
    main()

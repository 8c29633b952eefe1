"""Train a small score network on a rendered sequence and compare it with a random score map.

    python scripts/train_synthetic.py --iters 300 --out runs/train
"""

import argparse
import json
from dataclasses import replace
from pathlib import Path

from succinct.dataset import write_report
from succinct.experiments import TrainingExperimentConfig, run_training_experiment
from succinct.scorenet import save_checkpoint


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--iters", type=int, default=300)
    ap.add_argument("--depth", type=int, default=2)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=Path("runs/train"))
    args = ap.parse_args()

    cfg = replace(TrainingExperimentConfig(), iters=args.iters, depth=args.depth, seed=args.seed)
    args.out.mkdir(parents=True, exist_ok=True)

    def progress(it, _params, log):
        if (it + 1) % 25 == 0:
            print(f"iter {it + 1}: loss {log.loss}, |I|={log.n_inliers} |O|={log.n_outliers}", flush=True)

    out = run_training_experiment(cfg, callback=progress)
    save_checkpoint(args.out / "scorenet.bin", out.result.params, [lg.as_dict() for lg in out.result.logs])
    for name, rep in out.reports.items():
        write_report(rep, args.out, f"heldout_{name}")
    (args.out / "summary.json").write_text(json.dumps(out.summary(), indent=1) + "\n")
    print(json.dumps(out.summary(), indent=1))


if __name__ == "__main__":
    main()

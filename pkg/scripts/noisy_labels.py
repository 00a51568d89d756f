"""Uniform weighting against the four estimators on the 40% symmetric-noise task.

Prints final test accuracy (mean of the last 10 epochs) and the ratio of mean
noisy-sample weight to mean clean-sample weight, per seed and averaged.
"""

import argparse
from dataclasses import replace
from pathlib import Path

import numpy as np

from driftwt.config import build_dataset, load_config
from driftwt.trainer import WEConfig, train

ROOT = Path(__file__).resolve().parents[1]
# step sizes tuned on this task
TUNED = {
    "kmm": WEConfig(),
    "kliep": WEConfig(eta=0.5),
    "lsif": WEConfig(eta=0.1),
    "w1": WEConfig(eta=100.0, critic_lr=1e-3),
}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=ROOT / "configs" / "noisy_labels.ini")
    ap.add_argument("--epochs", type=int)
    args = ap.parse_args()
    spec = load_config(args.config)
    t = spec.train if args.epochs is None else replace(spec.train, epochs=args.epochs)
    rows = {}
    for seed in spec.seeds:
        ds = build_dataset(spec.data, seed)
        base = train(ds, replace(t, baseline="uniform", seed=seed))
        rows.setdefault("uniform", []).append((base.final("test_acc", 10), float("nan")))
        for est, we in TUNED.items():
            rep = train(ds, replace(t, estimator=est, we=we, seed=seed))
            last = rep.epochs[-1]
            rows.setdefault(est, []).append((rep.final("test_acc", 10), last["w_mean_noisy"] / last["w_mean_clean"]))
    print(f"{'method':<8} {'acc':>7} {'noisy/clean':>12}")
    for name, vals in rows.items():
        acc, ratio = np.mean(vals, axis=0)
        print(f"{name:<8} {acc:7.3f} {ratio:12.2f}")


if __name__ == "__main__":
    main()

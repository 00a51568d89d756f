"""Hidden-layer weighting on the class-prior-shift toy set versus uniform weighting."""

import argparse
from dataclasses import replace
from pathlib import Path

import numpy as np

from driftwt.config import build_dataset, load_config
from driftwt.trainer import train

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=ROOT / "configs" / "class_prior.ini")
    args = ap.parse_args()
    spec = load_config(args.config)
    print(f"{'seed':>4} {'w_minority':>11} {'w_majority':>11} {'bal_acc':>8} {'uniform':>8}")
    gains = []
    for seed in spec.seeds:
        ds = build_dataset(spec.data, seed)
        minority = np.bincount(ds.train.y, minlength=ds.n_classes)
        minority = minority < minority.max()
        rep = train(ds, replace(spec.train, seed=seed))
        base = train(ds, replace(spec.train, baseline="uniform", seed=seed))
        w, y = rep.weights, ds.train.y
        a, b = rep.epochs[-1]["test_bal_acc"], base.epochs[-1]["test_bal_acc"]
        gains.append(a - b)
        print(f"{seed:4d} {w[minority[y]].mean():11.3f} {w[~minority[y]].mean():11.3f} {a:8.3f} {b:8.3f}")
    print(f"mean balanced-accuracy gain: {100 * np.mean(gains):+.1f} points")


if __name__ == "__main__":
    main()

"""Command-line entry point: ``driftwt {train,sweep,oracle,profile,selftest}``."""

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from .config import ExperimentSpec, build_dataset, dump_config, load_config, sweep_points
from .constraints import ConfigError
from .data import make_covariate_shift_1d
from .metrics import STAGE_NOTE, StageTimer, stage_report, we_nmse, write_stage_report
from .numerics import ContractError
from .objectives import KINDS
from .ratio import RatioConfig, estimate_weights
from .trainer import train

BASELINE_FLAGS = {"uniform": "uniform", "random": "random", "valonly": "val_only", "diw": "diw_kmm"}
AGG_HEADER = ("name", "estimator", "transform", "baseline", "trials", "test_acc_mean", "test_acc_std",
              "test_bal_acc_mean", "test_bal_acc_std", "w_clean_mean", "w_noisy_mean")
FINAL_WINDOW = 10


def _fmt(x):
    return repr(float(x))


def _write_trial(out, seed, ds, rep):
    with open(os.path.join(out, f"trial_seed{seed}.json"), "w") as fh:
        json.dump(rep.to_json_dict(), fh, indent=1, default=float)
    keys = list(rep.epochs[0])
    with open(os.path.join(out, f"epochs_seed{seed}.csv"), "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        w.writerows(rep.epochs)
    noisy = ds.val.is_noisy if rep.config["baseline"] == "val_only" else ds.train.is_noisy
    _weights_csv(os.path.join(out, f"weights_seed{seed}.csv"), rep.weights, noisy)
    for epoch, wv in rep.snapshots.items():
        _weights_csv(os.path.join(out, f"weights_seed{seed}_epoch{epoch}.csv"), wv, noisy)
    if rep.stages:
        write_stage_report(rep.stages, os.path.join(out, f"stages_seed{seed}.csv"),
                           os.path.join(out, f"stages_seed{seed}.json"))


def _weights_csv(path, weights, noisy):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "weight", "is_noisy"])
        for i, v in enumerate(weights):
            w.writerow([i, repr(float(v)), int(noisy[i])])


def _run_trial(args):
    spec, seed = args
    ds = build_dataset(spec.data, seed)
    rep = train(ds, replace(spec.train, seed=seed))
    rep.model = None
    return seed, ds, rep


def aggregate_row(spec, reports):
    acc = [r.final("test_acc", FINAL_WINDOW) for r in reports]
    bal = [r.final("test_bal_acc", FINAL_WINDOW) for r in reports]
    wc = [r.epochs[-1]["w_mean_clean"] for r in reports]
    wn = [r.epochs[-1]["w_mean_noisy"] for r in reports]
    t = spec.train
    return [spec.name, t.estimator, t.transform, t.baseline or "none", len(reports),
            _fmt(np.mean(acc)), _fmt(np.std(acc)), _fmt(np.mean(bal)), _fmt(np.std(bal)),
            _fmt(np.mean(wc)), _fmt(np.mean(wn))]


def aggregate_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(AGG_HEADER)
    w.writerows(rows)
    return buf.getvalue()


def run_experiment(spec, out=None, jobs=1):
    """Run every trial of ``spec``; returns (exit status, aggregate row or None)."""
    out = out or spec.out
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "config.ini"), "w") as fh:
        fh.write(dump_config(spec))
    tasks = [(spec, s) for s in spec.seeds]
    reports = []
    status = 0
    try:
        if jobs > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(min(jobs, len(tasks))) as ex:
                results = ex.map(_run_trial, tasks)
                for seed, ds, rep in results:
                    _write_trial(out, seed, ds, rep)
                    reports.append(rep)
        else:
            for t in tasks:
                seed, ds, rep = _run_trial(t)
                _write_trial(out, seed, ds, rep)
                reports.append(rep)
    except (ContractError, ArithmeticError, RuntimeError) as e:
        print(f"error: trial failed: {e}", file=sys.stderr)
        status = 1
    if not reports:
        return status or 1, None
    row = aggregate_row(spec, reports)
    with open(os.path.join(out, "aggregate.csv"), "w", newline="") as fh:
        fh.write(aggregate_csv([row]))
    return status, row


def _apply_flags(spec, ns):
    t = spec.train
    if getattr(ns, "estimator", None):
        t = replace(t, estimator=ns.estimator)
    if getattr(ns, "transform", None):
        t = replace(t, transform=ns.transform)
    if getattr(ns, "baseline", None):
        t = replace(t, baseline=BASELINE_FLAGS[ns.baseline])
    spec = replace(spec, train=t)
    if getattr(ns, "seed", None) is not None:
        spec = replace(spec, seeds=[ns.seed], trials=1)
    return spec


def _load(ns):
    spec = load_config(ns.config) if ns.config else ExperimentSpec()
    return _apply_flags(spec, ns)


def cmd_train(ns):
    spec = _load(ns)
    status, row = run_experiment(spec, ns.out, ns.jobs)
    if row:
        print(aggregate_csv([row]), end="")
    return status


def cmd_sweep(ns):
    spec = _load(ns)
    out = ns.out or spec.out
    rows, status = [], 0
    for label, point in sweep_points(spec):
        st, row = run_experiment(point, os.path.join(out, label), ns.jobs)
        status = status or st
        if row:
            rows.append(row)
    os.makedirs(out, exist_ok=True)
    text = aggregate_csv(rows)
    with open(os.path.join(out, "sweep.csv"), "w", newline="") as fh:
        fh.write(text)
    print(text, end="")
    return status


def cmd_oracle(ns):
    kinds = ns.estimators.split(",") if ns.estimators else list(KINDS)
    for k in kinds:
        if k not in KINDS:
            raise ConfigError(f"--estimators: unknown estimator {k!r}")
    seeds = list(range(ns.seeds))
    table = {"uniform": []}
    table.update({k: [] for k in kinds})
    for seed in seeds:
        ds = make_covariate_shift_1d(ns.n_tr, ns.n_v, 10, seed, ns.shift)
        truth = ds.ratio(ds.train.x, ds.train.y)
        table["uniform"].append(we_nmse(np.ones(len(truth)), truth))
        for k in kinds:
            w = estimate_weights(k, ds.train.x, ds.val.x, RatioConfig(seed=seed))
            table[k].append(we_nmse(w, truth))
    rows = [(k, np.mean(v), np.std(v), v) for k, v in table.items()]
    print(f"{'estimator':<10} {'nmse_mean':>10} {'nmse_std':>10}  per-seed")
    for k, m, s, v in rows:
        print(f"{k:<10} {m:10.4f} {s:10.4f}  " + " ".join(f"{x:.4f}" for x in v))
    if ns.out:
        os.makedirs(ns.out, exist_ok=True)
        with open(os.path.join(ns.out, "oracle.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["estimator", "nmse_mean", "nmse_std", *[f"seed{s}" for s in seeds]])
            for k, m, s, v in rows:
                w.writerow([k, _fmt(m), _fmt(s), *[_fmt(x) for x in v]])
    return 0


def profile_run(spec, seed, epochs, skip=10, warmup=2, record=10):
    ds = build_dataset(spec.data, seed)
    timer = StageTimer(skip, warmup, record)
    train(ds, replace(spec.train, seed=seed), timer=timer, profile_epochs=epochs)
    return stage_report(timer)


def _print_stages(title, rows):
    print(f"# {title} ({STAGE_NOTE})")
    for n, s, p in rows:
        print(f"{n:<18} {s * 1e3:10.3f} ms {p:6.2f} %")


def cmd_profile(ns):
    spec = _load(ns)
    seed = spec.seeds[0]
    epochs = [int(e) - 1 for e in ns.epochs.split(",")] if ns.epochs else [0]
    if max(epochs) >= spec.train.epochs:
        raise ConfigError(f"--epochs: profiled epoch beyond the {spec.train.epochs} training epochs")
    out = ns.out or spec.out
    os.makedirs(out, exist_ok=True)
    rows = profile_run(spec, seed, epochs)
    write_stage_report(rows, os.path.join(out, "stages.csv"), os.path.join(out, "stages.json"))
    _print_stages(spec.train.baseline or f"adiw-{spec.train.estimator}", rows)
    if ns.compare_diw:
        diw = replace(spec, train=replace(spec.train, baseline="diw_kmm", estimator="kmm"))
        rows = profile_run(diw, seed, epochs)
        write_stage_report(rows, os.path.join(out, "stages_diw.csv"), os.path.join(out, "stages_diw.json"))
        _print_stages("diw_kmm", rows)
    return 0


def cmd_selftest(ns):
    from .selftest import run_all

    failed = 0
    for name, ok, detail in run_all():
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        failed += not ok
    return 1 if failed else 0


def build_parser():
    p = argparse.ArgumentParser(prog="driftwt", description="Dynamic importance weighting experiments")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="INI experiment file")
        sp.add_argument("--out", help="output directory (overrides experiment.out)")
        sp.add_argument("--seed", type=int, help="run a single trial with this seed")
        sp.add_argument("--estimator", choices=KINDS)
        sp.add_argument("--transform", choices=("loss", "hidden"))
        sp.add_argument("--baseline", choices=tuple(BASELINE_FLAGS))
        sp.add_argument("--jobs", type=int, default=1, help="parallel trials")

    common(sub.add_parser("train", help="run one experiment"))
    common(sub.add_parser("sweep", help="grid over the [sweep] section"))
    sp = sub.add_parser("profile", help="windowed stage timing")
    common(sp)
    sp.add_argument("--epochs", help="1-based epochs to profile, comma-separated (default 1)")
    sp.add_argument("--compare-diw", action="store_true", help="also profile the DIW baseline")
    sp = sub.add_parser("oracle", help="ratio recovery on the 1-D Gaussian shift")
    sp.add_argument("--seeds", type=int, default=3)
    sp.add_argument("--n-tr", type=int, default=2000)
    sp.add_argument("--n-v", type=int, default=200)
    sp.add_argument("--shift", type=float, default=1.0)
    sp.add_argument("--estimators", help="comma-separated subset of kmm,kliep,lsif,w1")
    sp.add_argument("--out")
    sub.add_parser("selftest", help="fast invariant checks")
    return p


COMMANDS = {"train": cmd_train, "sweep": cmd_sweep, "oracle": cmd_oracle, "profile": cmd_profile,
            "selftest": cmd_selftest}


def main(argv=None):
    ns = build_parser().parse_args(argv)
    try:
        return COMMANDS[ns.command](ns)
    except (ConfigError, ContractError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

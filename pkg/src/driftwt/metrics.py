"""Accuracy, weight statistics, weight-estimation quality and stage-wise timing."""

import csv
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .numerics import ContractError

STAGES = (
    "fetch tr data",
    "fetch val data",
    "forward tr data",
    "forward val data",
    "get tr loss",
    "get val loss",
    "estimate weights",
    "weight tr loss",
    "backward data",
    "update model",
)


def accuracy(logits, labels, k=1):
    """(top-1, top-k) accuracy; ties go to the lowest class index."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ContractError("accuracy of an empty split")
    order = np.argsort(-logits, axis=1, kind="stable")
    top1 = float(np.mean(order[:, 0] == labels))
    topk = float(np.mean((order[:, :k] == labels[:, None]).any(1)))
    return top1, topk


def model_accuracy(model, split, k=1):
    return accuracy(model.logits(split.x), split.clean_y, k)


def balanced_accuracy(logits, labels, n_classes):
    pred = np.argmax(logits, axis=1)
    accs = [np.mean(pred[labels == c] == c) for c in range(n_classes) if np.any(labels == c)]
    return float(np.mean(accs))


def we_nmse(estimated, oracle):
    """|w/mean(w) - w*/mean(w*)|^2 / |w*/mean(w*)|^2; invariant to positive rescaling of w."""
    est = np.asarray(estimated, dtype=np.float64)
    ora = np.asarray(oracle, dtype=np.float64)
    if est.shape != ora.shape:
        raise ContractError("estimate and oracle lengths differ")
    if ora.mean() == 0:
        raise ContractError("oracle weights have zero mean")
    if est.mean() == 0:
        return float("inf")
    a = est / est.mean()
    b = ora / ora.mean()
    return float(((a - b) ** 2).sum() / (b * b).sum())


@dataclass
class GroupStats:
    count: int
    mean: float
    median: float
    q1: float
    q3: float
    hist: list
    edges: list


@dataclass
class WeightStats:
    groups: dict = field(default_factory=dict)

    @property
    def total(self):
        return sum(g.count for g in self.groups.values())

    def to_dict(self):
        return {k: vars(v) for k, v in self.groups.items()}


def weight_stats(weights, groups, bins=20):
    """Per-group summary; ``groups`` maps each sample to a label (e.g. 'clean'/'noisy' or class)."""
    w = np.asarray(weights, dtype=np.float64)
    g = np.asarray(groups)
    hi = float(w.max()) if w.size and w.max() > 0 else 1.0
    edges = np.linspace(0.0, hi, bins + 1)
    out = WeightStats()
    for key in sorted(set(g.tolist()), key=str):
        sel = w[g == key]
        hist, _ = np.histogram(sel, bins=edges)
        q1, med, q3 = np.percentile(sel, [25, 50, 75])
        out.groups[str(key)] = GroupStats(int(sel.size), float(sel.mean()), float(med), float(q1), float(q3),
                                          hist.tolist(), edges.tolist())
    return out


class _Stage:
    __slots__ = ("timer", "name")

    def __init__(self, timer, name):
        self.timer = timer
        self.name = name

    def __enter__(self):
        self.timer._t0 = time.perf_counter()

    def __exit__(self, *exc):
        t = self.timer
        if t.recording:
            t._acc[self.name] = t._acc.get(self.name, 0.0) + time.perf_counter() - t._t0


class StageTimer:
    """Accumulates wall time per named stage over profiling windows.

    Each window spans ``skip + warmup + record`` iterations (``step()`` ends an
    iteration); only the last ``record`` iterations are accumulated. With the
    defaults every iteration is recorded into one long window.
    """

    def __init__(self, skip=0, warmup=0, record=None, stages=STAGES):
        self.skip = skip
        self.warmup = warmup
        self.record = record
        self.stage_names = tuple(stages)
        self.windows = []
        self._acc = {}
        self._cache = {}
        self._t0 = 0.0
        self._iter = 0
        self.active = True
        self.recording = skip + warmup == 0

    def stage(self, name):
        s = self._cache.get(name)
        if s is None:
            s = self._cache[name] = _Stage(self, name)
        return s

    def open_window(self):
        """Restart the skip/warmup/record cycle (e.g. at the start of a profiled epoch)."""
        self._close()
        self._iter = 0
        self.active = True
        self.recording = self.skip + self.warmup == 0

    def step(self):
        if not self.active:
            return
        self._iter += 1
        if self.record is not None and self._iter >= self.skip + self.warmup + self.record:
            self._close()
            self.active = False
            self.recording = False
            return
        self.recording = self._iter >= self.skip + self.warmup

    def _close(self):
        if self._acc:
            self.windows.append(self._acc)
        self._acc = {}

    def finish(self):
        self._close()
        self.active = False
        self.recording = False
        return self

    def totals(self):
        """Mean seconds per stage over all closed windows (plus the open one)."""
        wins = self.windows + ([self._acc] if self._acc else [])
        if not wins:
            return {}
        names = list(self.stage_names) + sorted({k for w in wins for k in w} - set(self.stage_names))
        return {n: sum(w.get(n, 0.0) for w in wins) / len(wins) for n in names}


def stage_report(timer):
    """Rows (stage, seconds, percent) in fixed stage order, then a Total row."""
    tot = timer.totals()
    if not tot:
        raise ContractError("no profiling window was recorded")
    total = sum(tot.values())
    rows = [(n, s, 100.0 * s / total if total > 0 else 0.0) for n, s in tot.items()]
    rows.append(("Total", total, 100.0))
    return rows


STAGE_HEADER = ("stage", "seconds", "percent")
STAGE_NOTE = "wall-clock seconds, single execution space (no separate device time)"


def write_stage_report(rows, csv_path=None, json_path=None):
    if csv_path:
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(STAGE_HEADER)
            for n, s, p in rows:
                w.writerow([n, f"{s:.6f}", f"{p:.2f}"])
    if json_path:
        with open(json_path, "w") as fh:
            json.dump({"note": STAGE_NOTE, "stages": [dict(zip(STAGE_HEADER, r)) for r in rows]}, fh, indent=2)

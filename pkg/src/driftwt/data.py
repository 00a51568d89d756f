"""Synthetic shifted datasets with analytic density-ratio oracles, plus noise injectors.

Labels are 0-based. A ``ShiftDataset`` holds train/validation/test splits; the
validation split always follows the test distribution.
"""

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .numerics import ContractError, Rng


@dataclass(frozen=True)
class Split:
    x: np.ndarray
    y: np.ndarray
    clean_y: np.ndarray
    is_noisy: np.ndarray

    @classmethod
    def clean(cls, x, y):
        y = np.asarray(y, dtype=np.int64)
        return cls(np.asarray(x, dtype=np.float64), y, y.copy(), np.zeros(y.shape[0], dtype=bool))

    def __len__(self):
        return self.y.shape[0]

    def take(self, idx):
        return Split(self.x[idx], self.y[idx], self.clean_y[idx], self.is_noisy[idx])


@dataclass(frozen=True)
class GaussianSpec:
    """Class-conditional spherical Gaussians with class priors."""

    means: np.ndarray  # (C, d)
    variances: np.ndarray  # (C,)
    priors: np.ndarray  # (C,)

    def log_density(self, x, y):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        y = np.asarray(y, dtype=np.int64)
        d = self.means.shape[1]
        var = self.variances[y]
        sq = ((x - self.means[y]) ** 2).sum(1)
        return np.log(self.priors[y]) - 0.5 * sq / var - 0.5 * d * np.log(2 * np.pi * var)

    def sample(self, n, rng):
        C, d = self.means.shape
        y = rng.choice(C, n, self.priors)
        x = self.means[y] + rng.normal((n, d)) * np.sqrt(self.variances[y])[:, None]
        return x, y


@dataclass(frozen=True)
class ShiftDataset:
    train: Split
    val: Split
    test: Split
    n_classes: int
    train_spec: GaussianSpec = None
    test_spec: GaussianSpec = None

    @property
    def has_oracle(self):
        return self.train_spec is not None and self.test_spec is not None

    def ratio(self, x, y):
        """True importance w*(x, y) = p_te(x, y) / p_tr(x, y)."""
        if not self.has_oracle:
            raise ContractError("dataset has no closed-form ratio oracle")
        return np.exp(self.test_spec.log_density(x, y) - self.train_spec.log_density(x, y))

    @property
    def dim(self):
        return self.train.x.shape[1]


def _spherical_variances(covs, C, d):
    out = np.empty(C)
    for c, cov in enumerate(covs):
        a = np.asarray(cov, dtype=np.float64)
        if a.ndim == 0:
            var = float(a)
        else:
            if a.shape != (d, d) or not np.allclose(a, a.T):
                raise ContractError(f"covariance {c} must be a symmetric {d}x{d} matrix")
            if np.linalg.eigvalsh(a)[0] <= 0:
                raise ContractError(f"covariance {c} is not positive definite")
            if not np.allclose(a, a[0, 0] * np.eye(d)):
                raise ContractError(f"covariance {c} is not spherical")
            var = float(a[0, 0])
        if not var > 0:
            raise ContractError(f"covariance {c} is not positive definite")
        out[c] = var
    return out


def _priors(p, C):
    p = np.full(C, 1.0 / C) if p is None else np.asarray(p, dtype=np.float64)
    if p.shape != (C,) or np.any(p < 0) or not p.sum() > 0:
        raise ContractError("class priors must be a non-negative vector with one entry per class")
    return p / p.sum()


def make_gaussian_mixture(C, d, means, covs, n_tr, n_v, n_te, seed=0, priors=None,
                          test_means=None, test_covs=None, test_priors=None):
    """Spherical Gaussian classes; test/validation may use shifted means, variances or priors."""
    if C < 2 or d < 1:
        raise ContractError("need at least two classes and one dimension")
    if n_tr < 10 * n_v:
        raise ContractError(f"training set ({n_tr}) must be at least 10x the validation set ({n_v})")
    means = np.asarray(means, dtype=np.float64).reshape(C, d)
    tr = GaussianSpec(means, _spherical_variances(covs, C, d), _priors(priors, C))
    te = GaussianSpec(
        means if test_means is None else np.asarray(test_means, dtype=np.float64).reshape(C, d),
        tr.variances if test_covs is None else _spherical_variances(test_covs, C, d),
        tr.priors if test_priors is None else _priors(test_priors, C),
    )
    rng = Rng(seed)
    splits = [Split.clean(*spec.sample(n, rng.spawn(name)))
              for spec, n, name in ((tr, n_tr, "train"), (te, n_v, "val"), (te, n_te, "test"))]
    return ShiftDataset(*splits, n_classes=C, train_spec=tr, test_spec=te)


def make_covariate_shift_1d(n_tr=2000, n_v=200, n_te=2000, seed=0, shift=1.0):
    """p_tr = N(0, 1), p_te = N(shift, 1) with uninformative labels; w*(x) = exp(shift*x - shift^2/2)."""
    return make_gaussian_mixture(2, 1, [[0.0], [0.0]], [1.0, 1.0], n_tr, n_v, n_te, seed,
                                 test_means=[[shift], [shift]])


def make_two_gaussians(n_tr=2000, n_v=100, n_te=2000, seed=0, sep=1.0, var=1.0, d=2):
    """Two equiprobable spherical classes with means at -sep and +sep on the first axis."""
    means = np.zeros((2, d))
    means[0, 0], means[1, 0] = -sep, sep
    return make_gaussian_mixture(2, d, means, [var, var], n_tr, n_v, n_te, seed)


def _flip(ds, new_y, flipped):
    tr = ds.train
    return replace(ds, train=Split(tr.x, new_y, tr.clean_y, tr.is_noisy | flipped))


def inject_pair_flip(ds, rate, seed=0):
    """Each training label moves to the next class (cyclically) with probability ``rate``."""
    if not 0 <= rate < 1:
        raise ContractError("noise rate must lie in [0, 1)")
    rng = Rng(seed).spawn("pair")
    y = ds.train.y
    flipped = rng.uniform(len(y)) < rate
    return _flip(ds, np.where(flipped, (y + 1) % ds.n_classes, y), flipped)


def inject_symmetric_flip(ds, rate, seed=0):
    """Each training label moves to a uniformly drawn other class with probability ``rate``."""
    if not 0 <= rate < 1:
        raise ContractError("noise rate must lie in [0, 1)")
    C = ds.n_classes
    if C < 2:
        raise ContractError("symmetric flip needs at least two classes")
    rng = Rng(seed).spawn("symmetric")
    y = ds.train.y
    n = len(y)
    flipped = rng.uniform(n) < rate
    offset = 1 + rng.integers(C - 1, n)
    return _flip(ds, np.where(flipped, (y + offset) % C, y), flipped)


def make_class_prior_shift(base, mu, rho, n_val_per_class=10, seed=0, majority_per_class=None):
    """Down-sample ceil(mu * C) randomly chosen classes of ``base.train`` by factor ``rho``.

    Validation takes ``n_val_per_class`` clean samples per class from the base
    training pool before subsampling; the test split is the base test split.
    """
    if not 0 < mu < 1:
        raise ContractError("minority fraction mu must lie in (0, 1)")
    if rho < 1:
        raise ContractError("imbalance ratio rho must be at least 1")
    C = base.n_classes
    rng = Rng(seed).spawn("prior-shift")
    pool = base.train
    per_class = [np.nonzero(pool.clean_y == c)[0] for c in range(C)]
    per_class = [idx[rng.permutation(len(idx))] for idx in per_class]
    available = min(len(idx) for idx in per_class) - n_val_per_class
    maj = available if majority_per_class is None else int(majority_per_class)
    if n_val_per_class < 1 or maj < 1 or maj > available:
        raise ContractError(
            f"base pool too small: need {n_val_per_class} + {maj} samples per class, have {available + n_val_per_class}"
        )
    n_minor = math.ceil(mu * C - 1e-9)  # guard 0.3 * 10 == 3.0000000000000004
    minority = np.sort(rng.permutation(C)[:n_minor])
    minor_count = max(1, math.ceil(maj / rho))
    val_idx, tr_idx = [], []
    for c in range(C):
        idx = per_class[c]
        val_idx.append(idx[:n_val_per_class])
        count = minor_count if c in minority else maj
        tr_idx.append(idx[n_val_per_class : n_val_per_class + count])
    tr_idx = np.concatenate(tr_idx)
    tr_idx = tr_idx[rng.permutation(len(tr_idx))]
    val_idx = np.concatenate(val_idx)
    train = pool.take(tr_idx)
    val = Split.clean(pool.x[val_idx], pool.clean_y[val_idx])
    if len(train) < 10 * len(val):
        raise ContractError(f"training set ({len(train)}) must be at least 10x the validation set ({len(val)})")
    tr_counts = np.bincount(train.y, minlength=C).astype(np.float64)
    train_spec = test_spec = None
    if base.train_spec is not None:
        train_spec = replace(base.train_spec, priors=tr_counts / tr_counts.sum())
        test_spec = replace(base.train_spec, priors=np.full(C, 1.0 / C))
    ds = ShiftDataset(train, val, base.test, C, train_spec, test_spec)
    return ds, minority


def _split_rows(name, s):
    for i in range(len(s)):
        yield [name, *[repr(float(v)) for v in s.x[i]], int(s.y[i]), int(s.clean_y[i]), int(s.is_noisy[i])]


def to_csv(ds, path):
    """One row per sample: split, x0..x{d-1}, label, clean_label, is_noisy."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["split", *[f"x{j}" for j in range(ds.dim)], "label", "clean_label", "is_noisy"])
        for name in ("train", "val", "test"):
            w.writerows(_split_rows(name, getattr(ds, name)))


def from_csv(path, n_classes=None):
    rows = {"train": [], "val": [], "test": []}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        d = len(header) - 4
        for r in reader:
            if r[0] not in rows:
                raise ContractError(f"unknown split {r[0]!r}")
            rows[r[0]].append(r)
    splits = {}
    for name, rs in rows.items():
        x = np.array([[float(v) for v in r[1 : 1 + d]] for r in rs]).reshape(len(rs), d)
        y = np.array([int(r[1 + d]) for r in rs], dtype=np.int64)
        cy = np.array([int(r[2 + d]) for r in rs], dtype=np.int64)
        noisy = np.array([r[3 + d] == "1" for r in rs], dtype=bool)
        splits[name] = Split(x, y, cy, noisy)
    C = n_classes or int(max(s.clean_y.max(initial=0) for s in splits.values()) + 1)
    return ShiftDataset(splits["train"], splits["val"], splits["test"], C)

"""Gaussian RBF kernel: Gram matrices, KMM targets and basis-function features."""

import math
from dataclasses import dataclass

import numpy as np

from .numerics import ContractError


@dataclass(frozen=True)
class RbfKernel:
    sigma: float

    def __post_init__(self):
        if not (self.sigma > 0 and np.isfinite(self.sigma)):
            raise ContractError(f"kernel width must be positive and finite, got {self.sigma}")


@dataclass(frozen=True)
class BasisSet:
    """Kernel centres, one per row."""

    centers: np.ndarray

    def __post_init__(self):
        c = as_points(self.centers, "centers")
        if c.shape[0] < 1:
            raise ContractError("basis needs at least one centre")
        if not np.all(np.isfinite(c)):
            raise ContractError("basis centres must be finite")
        object.__setattr__(self, "centers", c)

    @property
    def size(self):
        return self.centers.shape[0]


def as_points(a, name="points"):
    """Coerce to an (n, d) float array; a 1-D input is read as n scalar points."""
    p = np.asarray(a, dtype=np.float64)
    if p.ndim == 1:
        p = p[:, None]
    if p.ndim != 2:
        raise ContractError(f"{name} must be a list of vectors, got shape {p.shape}")
    return p


def sq_dists(a, b):
    a = as_points(a, "a")
    b = as_points(b, "b")
    if a.shape[1] != b.shape[1]:
        raise ContractError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    d = a @ b.T
    d *= -2.0
    d += (a * a).sum(1)[:, None]
    d += (b * b).sum(1)[None, :]
    np.maximum(d, 0.0, out=d)
    return d


def gram(kernel, a, b):
    """K[i, j] = exp(-|a_i - b_j|^2 / (2 sigma^2)).

    When ``a is b`` the diagonal is set to exactly one and the result is
    symmetrised, so floating-point cancellation in the distance expansion
    cannot break either property.
    """
    same = a is b
    k = np.exp(-sq_dists(a, b) / (2.0 * kernel.sigma**2))
    if same:
        k = 0.5 * (k + k.T)
        np.fill_diagonal(k, 1.0)
    return k


def kmm_targets(kernel, train, val):
    """k_i = (n_tr / n_v) * sum_j k(train_i, val_j)."""
    train = as_points(train, "train")
    val = as_points(val, "val")
    if train.shape[0] == 0 or val.shape[0] == 0:
        raise ContractError("kmm_targets needs non-empty train and validation sets")
    return gram(kernel, train, val).sum(1) * (train.shape[0] / val.shape[0])


def features(basis, kernel, z):
    """psi(z) for a single point, or a (n, b) matrix when ``z`` holds n points."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim <= 1 and z.size == basis.centers.shape[1]:
        return gram(kernel, z.reshape(1, -1), basis.centers)[0]
    return gram(kernel, z, basis.centers)


def mean_features(basis, kernel, points):
    """Column mean of the per-sample feature matrix (psi-bar)."""
    return features(basis, kernel, as_points(points)).mean(0)


def median_heuristic(*point_sets):
    """Median pairwise Euclidean distance over the pooled points; 1.0 if degenerate."""
    p = np.concatenate([as_points(s) for s in point_sets], 0)
    if p.shape[0] < 2:
        return 1.0
    n = p.shape[0]
    sq = sq_dists(p, p)[np.triu(np.ones((n, n), dtype=bool), 1)]
    # sqrt is monotone, so select the middle order statistics on squared distances
    m = sq.shape[0]
    k = (m - 1) // 2
    if m % 2:
        med = math.sqrt(np.partition(sq, k)[k])
    else:
        q = np.partition(sq, [k, k + 1])
        med = 0.5 * (math.sqrt(q[k]) + math.sqrt(q[k + 1]))
    return med if med > 0 else 1.0

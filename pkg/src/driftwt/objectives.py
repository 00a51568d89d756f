"""Weight-estimation objectives with analytic gradients.

Each objective exposes ``value(x)``, ``grad(x)``, ``value_and_grad(x)`` and the
constraint set its variable lives in. Quadratic objectives also expose
``hessian_matvec`` so the PGD engine can estimate a safe step size.
"""

import math

import numpy as np

from .constraints import NonnegMeanBand, NonnegOrthant, NonnegWeightedSumOne
from .kernels import BasisSet, as_points, gram, kmm_targets
from .numerics import ContractError, as_vec, is_symmetric, power_iteration

KINDS = ("kmm", "kliep", "lsif", "w1")

# KLIEP returns +inf when the model density at a validation point is this small
KLIEP_FLOOR = 1e-300


class Objective:
    kind = None
    constraint = None
    quadratic = False

    def value(self, x):
        return self.value_and_grad(x)[0]

    def grad(self, x):
        return self.value_and_grad(x)[1]

    def value_and_grad(self, x):
        raise NotImplementedError

    def lipschitz(self, iters=30):
        """Largest Hessian eigenvalue via power iteration (quadratic objectives only)."""
        if not self.quadratic:
            raise ContractError(f"{self.kind}: no constant Hessian, step size must be given")
        return power_iteration(self.hessian_matvec, self.dim, iters)


class KMMObjective(Objective):
    """J(w) = w'Kw - 2k'w over the mean band."""

    kind = "kmm"
    quadratic = True

    def __init__(self, K, k, epsilon=0.1):
        self.K = np.asarray(K, dtype=np.float64)
        self.k = as_vec(k, "k")
        n = self.k.shape[0]
        if self.K.shape != (n, n):
            raise ContractError(f"K has shape {self.K.shape}, expected ({n}, {n})")
        if not is_symmetric(self.K):
            raise ContractError("K must be symmetric")
        self.dim = n
        self.constraint = NonnegMeanBand(epsilon)

    def value_and_grad(self, w):
        w = as_vec(w, "w")
        Kw = self.K @ w
        return float(w @ Kw - 2.0 * self.k @ w), 2.0 * Kw - 2.0 * self.k

    def hessian_matvec(self, v):
        return 2.0 * (self.K @ v)


def kmm_build(kernel, train_reps, val_reps, epsilon=0.1):
    train_reps = as_points(train_reps, "train_reps")
    val_reps = as_points(val_reps, "val_reps")
    return KMMObjective(gram(kernel, train_reps, train_reps), kmm_targets(kernel, train_reps, val_reps), epsilon)


class KLIEPObjective(Objective):
    """J(beta) = -mean_i log(beta' psi(z_i^v)) subject to beta' psibar_tr = 1, beta >= 0."""

    kind = "kliep"

    def __init__(self, basis, kernel, val_features, mean_train_features):
        self.basis = basis
        self.kernel = kernel
        self.Psi_v = np.asarray(val_features, dtype=np.float64)
        self.psibar = as_vec(mean_train_features)
        self.dim = self.psibar.shape[0]
        if self.Psi_v.ndim != 2 or self.Psi_v.shape[1] != self.dim:
            raise ContractError("validation features and mean train features disagree in width")
        self.constraint = NonnegWeightedSumOne(self.psibar)

    def value_and_grad(self, beta):
        beta = as_vec(beta, "beta")
        g = self.Psi_v @ beta
        if np.any(g <= KLIEP_FLOOR):
            return math.inf, np.full(self.dim, np.nan)
        n_v = g.shape[0]
        return float(-np.log(g).sum() / n_v), -(self.Psi_v / g[:, None]).sum(0) / n_v


def kliep_build(basis, kernel, train_reps, val_reps):
    if not isinstance(basis, BasisSet):
        basis = BasisSet(basis)
    Psi_tr = gram(kernel, as_points(train_reps), basis.centers)
    Psi_v = gram(kernel, as_points(val_reps), basis.centers)
    return KLIEPObjective(basis, kernel, Psi_v, Psi_tr.mean(0))


class LSIFObjective(Objective):
    """J(beta) = beta'H beta / 2 - h'beta + lambda * sum(beta) over beta >= 0."""

    kind = "lsif"
    quadratic = True

    def __init__(self, basis, kernel, H, h, lam=1e-5):
        if lam < 0:
            raise ContractError("lambda must be non-negative")
        self.basis = basis
        self.kernel = kernel
        self.H = np.asarray(H, dtype=np.float64)
        self.h = as_vec(h, "h")
        self.lam = float(lam)
        self.dim = self.h.shape[0]
        if self.H.shape != (self.dim, self.dim):
            raise ContractError(f"H has shape {self.H.shape}, expected ({self.dim}, {self.dim})")
        self.constraint = NonnegOrthant()

    def value_and_grad(self, beta):
        beta = as_vec(beta, "beta")
        Hb = self.H @ beta
        value = 0.5 * beta @ Hb - self.h @ beta + self.lam * beta.sum()
        return float(value), Hb - self.h + self.lam

    def hessian_matvec(self, v):
        return self.H @ v


def lsif_build(basis, kernel, train_reps, val_reps, lam=1e-5):
    if not isinstance(basis, BasisSet):
        basis = BasisSet(basis)
    Psi_tr = gram(kernel, as_points(train_reps), basis.centers)
    Psi_v = gram(kernel, as_points(val_reps), basis.centers)
    H = Psi_tr.T @ Psi_tr / Psi_tr.shape[0]
    return LSIFObjective(basis, kernel, 0.5 * (H + H.T), Psi_v.mean(0), lam)


def weights_from_params(objective, beta, train_reps):
    """Per-sample weights beta' psi(z) for the parametric estimators."""
    if objective.kind not in ("kliep", "lsif"):
        raise ContractError("weights_from_params applies to KLIEP and LSIF only")
    Psi = gram(objective.kernel, as_points(train_reps), objective.basis.centers)
    return np.maximum(Psi @ as_vec(beta, "beta"), 0.0)


def w1_weight_gradient(critic_values_on_train, n_tr=None):
    """Per-sample W1 gradient -Phi(z_i) / n_tr under the empirical training measure."""
    phi = as_vec(critic_values_on_train, "critic values")
    if not np.all(np.isfinite(phi)):
        raise ContractError("critic values must be finite")
    n_tr = phi.shape[0] if n_tr is None else n_tr
    return -phi / n_tr


class W1Objective(Objective):
    """Dual-gap estimate for a fixed critic: mean(Phi_v) - (1/n_tr) * sum_i w_i Phi(z_i^tr).

    Linear in ``w``; the gradient is ``w1_weight_gradient``. A new instance is
    built whenever the critic changes.
    """

    kind = "w1"

    def __init__(self, phi_train, phi_val, epsilon=0.1):
        self.phi_train = as_vec(phi_train)
        self.phi_val = as_vec(phi_val)
        self.dim = self.phi_train.shape[0]
        self.constraint = NonnegMeanBand(epsilon)
        self._g = w1_weight_gradient(self.phi_train, self.dim)

    def value_and_grad(self, w):
        w = as_vec(w, "w")
        return float(self.phi_val.mean() + self._g @ w), self._g.copy()


def w1_build(critic, train_reps, val_reps, epsilon=0.1):
    return W1Objective(critic.values(as_points(train_reps)), critic.values(as_points(val_reps)), epsilon)

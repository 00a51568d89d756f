"""Projected gradient descent: x <- P_Q(x - eta * grad J(x)).

Two modes: a fixed number of warm-started steps (the accelerated loop) and
run-to-convergence (the DIW baseline and test oracles).
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .numerics import ContractError

MAX_HALVINGS = 30
ORACLE_BOOST = 4.0
# bounded feasible set: oversized early steps cannot run away
ORACLE_BOOST_BOUNDED = 64.0


class StepFailure(RuntimeError):
    """Step halving could not find a point with finite objective."""

    def __init__(self, message, last_point):
        super().__init__(message)
        self.last_point = last_point


@dataclass
class PgdConfig:
    steps: int = 1
    step_size: object = "auto"  # float or "auto" (1/L for quadratic objectives)
    mode: str = "fixed_steps"  # or "to_convergence"
    tol: float = 1e-8
    max_iter: int = 10_000
    w2_clamp: object = None  # l1 bound on eta * grad, or None

    def __post_init__(self):
        if self.mode not in ("fixed_steps", "to_convergence"):
            raise ContractError(f"unknown PGD mode {self.mode!r}")
        if self.steps < 1:
            raise ContractError("PGD needs at least one step")
        if self.mode == "to_convergence" and not self.tol > 0:
            raise ContractError("convergence tolerance must be positive")
        if self.step_size != "auto" and not float(self.step_size) > 0:
            raise ContractError("step size must be positive or 'auto'")


@dataclass
class PgdResult:
    x: np.ndarray
    trajectory: list = field(default_factory=list)
    iterations: int = 0
    step_times: list = field(default_factory=list)
    step_size: float = 0.0

    @property
    def value(self):
        return self.trajectory[-1]


def resolve_step(obj, step_size):
    if step_size == "auto":
        L = obj.lipschitz()
        return 1.0 / L if L > 0 else 1.0
    return float(step_size)


def _clamped(eta, g, clamp):
    if clamp is None:
        return eta
    l1 = float(np.abs(g).sum())
    if l1 * eta <= clamp:
        return eta
    return clamp / l1 if l1 > 0 else eta


def run(obj, x0, cfg=None):
    cfg = cfg or PgdConfig()
    eta0 = resolve_step(obj, cfg.step_size)
    x = np.array(x0, dtype=np.float64)
    project = obj.constraint.project
    value, g = obj.value_and_grad(x)
    traj = [value]
    times = []
    limit = cfg.steps if cfg.mode == "fixed_steps" else cfg.max_iter
    it = 0
    while it < limit:
        t0 = time.perf_counter()
        eta = _clamped(eta0, g, cfg.w2_clamp)
        for _ in range(MAX_HALVINGS + 1):
            x_new = project(x - eta * g)
            new_value, new_g = obj.value_and_grad(x_new)
            if math.isfinite(new_value):
                break
            eta *= 0.5
        else:
            raise StepFailure(f"{obj.kind}: objective stayed infinite after {MAX_HALVINGS} halvings", x)
        x, g = x_new, new_g
        traj.append(new_value)
        it += 1
        times.append(time.perf_counter() - t0)
        if cfg.mode == "to_convergence" and abs(traj[-1] - traj[-2]) <= cfg.tol * (1.0 + abs(traj[-1])):
            break
    return PgdResult(x, traj, it, times, eta0)


def oracle_solve(obj, x0, eta0=None, iters=100_000):
    """Reference solution: PGD with eta_t = eta0 / sqrt(t) for a fixed budget.

    Returns the best iterate seen. ``eta0`` defaults to 4/L for quadratic
    objectives and to four times the inverse curvature at ``x0`` for KLIEP:
    the schedule drops below 2/L after four iterations, and the larger start
    buys back the progress the 1/sqrt(t) decay gives up later. KMM lives on a
    bounded set, so it gets 64/L, which ill-conditioned Gram matrices need.
    """
    if obj.kind not in ("kmm", "kliep", "lsif"):
        raise ContractError("oracle_solve needs a convex objective (kmm, kliep, lsif)")
    if eta0 is None:
        boost = ORACLE_BOOST_BOUNDED if obj.kind == "kmm" else ORACLE_BOOST
        eta0 = boost * (resolve_step(obj, "auto") if obj.quadratic else _kliep_step(obj, x0))
    project = obj.constraint.project
    x = project(np.array(x0, dtype=np.float64))
    value, g = obj.value_and_grad(x)
    best, best_x = value, x
    for t in range(1, iters + 1):
        eta = eta0 / math.sqrt(t)
        for _ in range(MAX_HALVINGS + 1):
            x_new = project(x - eta * g)
            new_value, new_g = obj.value_and_grad(x_new)
            if math.isfinite(new_value):
                break
            eta *= 0.5
        else:
            break
        x, value, g = x_new, new_value, new_g
        if value < best:
            best, best_x = value, x
    return best_x


def _kliep_step(obj, x):
    # Hessian of -mean log(Psi beta) is Psi' diag(1/g^2) Psi / n_v
    g = obj.Psi_v @ x
    D = obj.Psi_v / g[:, None]
    L = np.linalg.eigvalsh(D.T @ D / D.shape[0])[-1]
    return 1.0 / L

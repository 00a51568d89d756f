"""Stand-alone density-ratio estimation on fixed representations.

Used by the ``oracle`` command and the ratio-recovery checks: each estimator is
solved to convergence on one train/validation pair and the per-sample training
weights are returned.
"""

from dataclasses import dataclass

import numpy as np

from . import pgd
from .critic import Critic
from .kernels import BasisSet, RbfKernel, as_points, median_heuristic
from .numerics import ContractError, Rng
from .objectives import KINDS, W1Objective, kliep_build, kmm_build, lsif_build, weights_from_params


@dataclass
class RatioConfig:
    sigma: object = "auto"
    epsilon: float = 0.1
    lam: float = 1e-5
    tol: float = 1e-8
    max_iter: int = 10_000
    # W1 game: critic steps per weight step, weight step size, rounds
    critic_hidden: int = 16
    critic_lr: float = 1e-2
    kappa: float = 10.0
    critic_steps: int = 5
    w1_eta: float = 5.0
    w1_rounds: int = 1000
    w1_warm: int = 50
    seed: int = 0


def _kernel(cfg, tr, v):
    return RbfKernel(median_heuristic(tr, v) if cfg.sigma == "auto" else float(cfg.sigma))


def solve_w1(tr, v, cfg):
    """Alternate critic ascent on the dual gap with projected descent on the weights.

    The plain last iterate of such a min-max game oscillates, so the weights
    returned are the average over the second half of the rounds.
    """
    rng = Rng(cfg.seed)
    c = Critic(tr.shape[1], cfg.critic_hidden, cfg.kappa, cfg.critic_lr, rng=rng.spawn("critic"))
    pairs = rng.spawn("pairs")
    w = np.ones(tr.shape[0])
    # the penalty alone can settle the critic on the wrong slope; fix the sign first
    for _ in range(cfg.w1_warm):
        c.train_step(tr, w, v, pairs, use_penalty=False)
    step = pgd.PgdConfig(steps=1, step_size=cfg.w1_eta)
    acc = np.zeros_like(w)
    half = cfg.w1_rounds // 2
    for r in range(cfg.w1_rounds):
        for _ in range(cfg.critic_steps):
            c.train_step(tr, w, v, pairs)
        obj = W1Objective(c.values(tr), c.values(v), cfg.epsilon)
        w = pgd.run(obj, w, step).x
        if r >= half:
            acc += w
    return acc / (cfg.w1_rounds - half)


def estimate_weights(kind, train_reps, val_reps, cfg=None):
    """Training-sample weights from one estimator solved to convergence."""
    if kind not in KINDS:
        raise ContractError(f"estimator: unknown value {kind!r}")
    cfg = cfg or RatioConfig()
    tr = as_points(train_reps)
    v = as_points(val_reps)
    if kind == "w1":
        return solve_w1(tr, v, cfg)
    k = _kernel(cfg, tr, v)
    conv = dict(mode="to_convergence", tol=cfg.tol, max_iter=cfg.max_iter)
    if kind == "kmm":
        obj = kmm_build(k, tr, v, cfg.epsilon)
        return pgd.run(obj, obj.constraint.project(np.ones(tr.shape[0])), pgd.PgdConfig(**conv)).x
    if kind == "kliep":
        obj = kliep_build(BasisSet(v), k, tr, v)
        b0 = obj.constraint.project(np.full(v.shape[0], 1.0 / obj.psibar.sum()))
        res = pgd.run(obj, b0, pgd.PgdConfig(step_size=pgd._kliep_step(obj, b0), **conv))
    else:
        obj = lsif_build(BasisSet(v), k, tr, v, cfg.lam)
        res = pgd.run(obj, np.zeros(v.shape[0]), pgd.PgdConfig(**conv))
    return weights_from_params(obj, res.x, tr)

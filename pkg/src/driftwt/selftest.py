"""Fast invariant checks bundled with the package (``driftwt selftest``)."""

import numpy as np

from . import pgd
from .constraints import NonnegMeanBand, NonnegOrthant, NonnegWeightedSumOne
from .critic import Critic
from .kernels import RbfKernel, gram
from .model import Classifier
from .numerics import Rng, check_gradient
from .objectives import KLIEPObjective, LSIFObjective, kmm_build
from .weights import WeightStore


def _projections(rng):
    worst_feas, worst_idem = 0.0, 0.0
    for _ in range(300):
        n = 2 + int(rng.integers(49))
        x = rng.normal(n) * 3
        for c in (NonnegMeanBand(0.1), NonnegOrthant(), NonnegWeightedSumOne(rng.uniform(n) + 0.01)):
            y = c.project(x)
            if not c.is_feasible(y, 1e-8):
                worst_feas += 1
            worst_idem = max(worst_idem, float(np.abs(c.project(y) - y).max()))
    return worst_feas == 0 and worst_idem <= 1e-12, f"infeasible={int(worst_feas)} idempotence={worst_idem:.1e}"


def _gradients(rng):
    errs = {}
    z_tr, z_v = rng.normal((12, 2)), rng.normal((6, 2))
    k = RbfKernel(1.0)
    kmm = kmm_build(k, z_tr, z_v)
    errs["kmm"] = check_gradient(kmm.value, kmm.grad, rng.uniform(12) + 0.5)
    Psi_tr, Psi_v = gram(k, z_tr, z_v), gram(k, z_v, z_v)
    kl = KLIEPObjective(None, k, Psi_v, Psi_tr.mean(0))
    errs["kliep"] = check_gradient(kl.value, kl.grad, rng.uniform(6) + 0.5)
    H = Psi_tr.T @ Psi_tr / 12
    ls = LSIFObjective(None, k, H, Psi_v.mean(0), 1e-5)
    errs["lsif"] = check_gradient(ls.value, ls.grad, rng.uniform(6))
    c = Critic(2, 4, rng=rng.spawn("critic"))
    interp = c.interpolates(z_tr, np.ones(12), z_v, rng)
    p0 = c.get_params()

    def f(p):
        c.set_params(p)
        return c.penalized_loss(z_tr, np.ones(12), z_v, interp=interp)[0]

    def g(p):
        c.set_params(p)
        return c.penalized_loss(z_tr, np.ones(12), z_v, interp=interp)[1]

    errs["critic"] = check_gradient(f, g, p0)
    m = Classifier(2, 3, 5, rng=rng.spawn("model"))
    xs, ys = rng.normal((4, 2)), np.array([0, 1, 2, 1])
    q0 = m.get_params()

    def fm(p):
        m.set_params(p)
        return float(m.forward_loss(xs, ys).losses.mean())

    def gm(p):
        m.set_params(p)
        return m.risk_grad(m.forward_loss(xs, ys))

    errs["classifier"] = check_gradient(fm, gm, q0)
    worst = max(errs.values())
    return worst < 1e-4, " ".join(f"{k}={v:.1e}" for k, v in errs.items())


def _monotone(rng):
    z_tr, z_v = rng.normal((20, 1)), rng.normal((8, 1)) + 0.5
    obj = kmm_build(RbfKernel(1.0), z_tr, z_v)
    res = pgd.run(obj, obj.constraint.project(np.ones(20)), pgd.PgdConfig(mode="to_convergence", tol=1e-12))
    d = np.diff(res.trajectory)
    return bool(np.all(d <= 1e-10)), f"{res.iterations} iterations, max increase {max(d.max(), 0.0):.1e}"


def _store(rng):
    ws = WeightStore(10)
    ws.scatter([3, 1], [0.5, 2.0])
    ok = list(ws.gather([1, 3, 0])) == [2.0, 0.5, 1.0]
    return ok, "gather/scatter round trip"


def _rng(_):
    a, b = Rng(7).next_u64(1000), Rng(7).next_u64(1000)
    return bool(np.array_equal(a, b)), "equal seeds give equal streams"


CHECKS = (("projections", _projections), ("gradients", _gradients), ("pgd monotone", _monotone),
          ("weight store", _store), ("rng", _rng))


def run_all(seed=0):
    rng = Rng(seed)
    out = []
    for name, fn in CHECKS:
        try:
            ok, detail = fn(rng.spawn(name))
        except Exception as e:  # report, do not abort the remaining checks
            ok, detail = False, f"{type(e).__name__}: {e}"
        out.append((name, bool(ok), detail))
    return out

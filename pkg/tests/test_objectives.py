import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from driftwt import ContractError, Rng
from driftwt import pgd
from driftwt.constraints import NonnegMeanBand, NonnegOrthant, NonnegWeightedSumOne
from driftwt.kernels import BasisSet, RbfKernel, gram
from driftwt.numerics import check_gradient
from driftwt.objectives import (KMMObjective, LSIFObjective, W1Objective, kliep_build, kmm_build, lsif_build,
                                w1_weight_gradient, weights_from_params)
from oracles import random_feasible

seeds = st.integers(0, 2**31)


def _instance(seed, n_tr=10, n_v=5, d=2):
    g = Rng(seed)
    return g.normal((n_tr, d)), g.normal((n_v, d)) + 0.3, RbfKernel(0.5 + g.uniform())


# --- KMM -----------------------------------------------------------------

def test_kmm_scalar():
    obj = KMMObjective([[1.0]], [1.0], epsilon=0.5)
    v, g = obj.value_and_grad(np.array([1.0]))
    assert v == -1.0 and g.tolist() == [0.0]
    res = pgd.run(obj, np.array([0.7]), pgd.PgdConfig(mode="to_convergence", tol=1e-14))
    assert res.x == pytest.approx([1.0], abs=1e-6)
    assert isinstance(obj.constraint, NonnegMeanBand)


def test_kmm_identical_sets_stationary_at_ones(rng):
    z = rng.normal((7, 2))
    obj = kmm_build(RbfKernel(1.1), z, z)
    assert np.abs(obj.grad(np.ones(7))).max() < 1e-12


def test_kmm_converged_matches_random_search():
    tr, va, k = _instance(3, n_tr=8, n_v=4)
    obj = kmm_build(k, tr, va, 0.1)
    res = pgd.run(obj, np.ones(8), pgd.PgdConfig(mode="to_convergence", tol=1e-13, max_iter=100_000))
    gen = np.random.default_rng(0)
    cands = []
    for _ in range(10):
        cands.append(random_feasible(obj.constraint, res.x, 100_000, gen))
    Y = np.concatenate(cands)
    vals = np.einsum("ij,jk,ik->i", Y, obj.K, Y) - 2 * Y @ obj.k
    assert res.value <= vals.min() + 1e-3


def test_kmm_matches_expanded_mmd_gradient(rng):
    # w'Kw - 2k'w = n_tr^2 * (MMD^2 expansion without the val-val term)
    tr, va = rng.normal((6, 1)), rng.normal((3, 1))
    k = RbfKernel(0.9)
    obj = kmm_build(k, tr, va)
    w = rng.uniform(6) + 0.5
    n_tr, n_v = 6, 3

    def mmd2(w):
        Ktt, Ktv, Kvv = gram(k, tr, tr), gram(k, tr, va), gram(k, va, va)
        return w @ Ktt @ w / n_tr**2 - 2 * w @ Ktv.sum(1) / (n_tr * n_v) + Kvv.sum() / n_v**2

    h = 1e-6
    fd = np.array([(mmd2(w + h * e) - mmd2(w - h * e)) / (2 * h) for e in np.eye(6)])
    assert obj.grad(w) / n_tr**2 == pytest.approx(fd, rel=1e-6, abs=1e-10)


def test_kmm_contracts():
    with pytest.raises(ContractError):
        KMMObjective([[1.0, 2.0], [0.0, 1.0]], [1.0, 1.0])
    with pytest.raises(ContractError):
        KMMObjective(np.eye(3), [1.0, 1.0])


@given(seeds)
def test_kmm_gradient(seed):
    tr, va, k = _instance(seed)
    obj = kmm_build(k, tr, va)
    assert check_gradient(obj.value, obj.grad, Rng(seed + 1).uniform(10) * 2) < 1e-4


# --- KLIEP ---------------------------------------------------------------

def test_kliep_single_basis():
    tr, va = np.array([[0.0], [1.0]]), np.array([[0.5], [0.2]])
    obj = kliep_build(BasisSet([[0.3]]), RbfKernel(1.0), tr, va)
    assert isinstance(obj.constraint, NonnegWeightedSumOne)
    beta = obj.constraint.project(np.array([5.0]))
    assert beta == pytest.approx([1.0 / obj.psibar[0]])
    # decreasing beta increases the objective
    assert obj.value(beta * 0.9) > obj.value(beta)
    assert obj.grad(beta)[0] < 0


def test_kliep_gradient_identical_sets(rng):
    z = rng.normal((6, 2))
    obj = kliep_build(BasisSet(z), RbfKernel(1.0), z, z)
    beta = obj.constraint.project(np.full(6, 1.0))
    assert math.isfinite(obj.value(beta))
    assert check_gradient(obj.value, obj.grad, beta) < 1e-5


def test_kliep_center_dominates():
    centers = np.array([[0.0], [50.0], [100.0]])
    obj = kliep_build(BasisSet(centers), RbfKernel(0.1), centers, np.array([[0.0]]))
    beta = np.array([0.3, 0.5, 0.2])
    assert obj.value(beta) == pytest.approx(-math.log(0.3), rel=1e-12)


def test_kliep_sentinel():
    centers = np.array([[0.0], [50.0]])
    obj = kliep_build(BasisSet(centers), RbfKernel(0.1), centers, np.array([[0.0]]))
    v, g = obj.value_and_grad(np.array([0.0, 1.0]))
    assert v == math.inf and np.all(np.isnan(g))


@given(seeds)
def test_kliep_gradient_interior(seed):
    tr, va, k = _instance(seed)
    obj = kliep_build(BasisSet(va), k, tr, va)
    beta = 0.2 + Rng(seed).uniform(5)
    assert check_gradient(obj.value, obj.grad, beta) < 1e-4


# --- LSIF ----------------------------------------------------------------

def test_lsif_diagonal():
    h = np.array([0.5, -0.2, 1.3])
    obj = LSIFObjective(None, None, np.eye(3), h, lam=0.0)
    assert isinstance(obj.constraint, NonnegOrthant)
    res = pgd.run(obj, np.zeros(3), pgd.PgdConfig(mode="to_convergence", tol=1e-14))
    assert res.x == pytest.approx(np.maximum(h, 0), abs=1e-6)


def test_lsif_large_lambda_gives_zero(rng):
    tr, va, k = _instance(11)
    obj = lsif_build(BasisSet(va), k, tr, va, lam=0.0)
    big = LSIFObjective(None, k, obj.H, obj.h, lam=float(obj.h.max()) + 0.1)
    res = pgd.run(big, np.ones(5), pgd.PgdConfig(mode="to_convergence", tol=1e-14, max_iter=100_000))
    assert np.abs(res.x).max() < 1e-6 and abs(res.value) < 1e-9


def test_lsif_matrices_brute_force(rng):
    tr, va, k = _instance(4, n_tr=5, n_v=3)
    obj = lsif_build(BasisSet(va), k, tr, va, lam=0.01)
    phi = lambda z, l: math.exp(-np.sum((z - va[l]) ** 2) / (2 * k.sigma**2))  # noqa: E731
    H = np.array([[np.mean([phi(z, l) * phi(z, m) for z in tr]) for m in range(3)] for l in range(3)])
    h = np.array([np.mean([phi(z, l) for z in va]) for l in range(3)])
    assert obj.H == pytest.approx(H, rel=1e-12)
    assert obj.h == pytest.approx(h, rel=1e-12)


def test_lsif_converged_matches_random_search():
    tr, va, k = _instance(21, n_tr=12, n_v=4)
    obj = lsif_build(BasisSet(va), k, tr, va)
    res = pgd.run(obj, np.zeros(4), pgd.PgdConfig(mode="to_convergence", tol=1e-14, max_iter=100_000))
    gen = np.random.default_rng(1)
    Y = random_feasible(obj.constraint, res.x, 1_000_000, gen)
    vals = 0.5 * np.einsum("ij,jk,ik->i", Y, obj.H, Y) - Y @ obj.h + obj.lam * Y.sum(1)
    assert res.value <= vals.min() + 1e-4


def test_lsif_identical_sets_wide_kernel_gives_unit_weights(rng):
    z = rng.normal((8, 1))
    obj = lsif_build(BasisSet(z), RbfKernel(1e3), z, z, lam=0.0)
    res = pgd.run(obj, np.zeros(8), pgd.PgdConfig(mode="to_convergence", tol=1e-14, max_iter=100_000))
    w = weights_from_params(obj, res.x, z)
    assert abs(w.mean() - 1) < 0.1


def test_lsif_negative_lambda():
    with pytest.raises(ContractError):
        LSIFObjective(None, None, np.eye(2), np.ones(2), lam=-1)


@given(seeds)
def test_lsif_gradient(seed):
    tr, va, k = _instance(seed)
    obj = lsif_build(BasisSet(va), k, tr, va, lam=1e-3)
    assert check_gradient(obj.value, obj.grad, Rng(seed).uniform(5)) < 1e-4


# --- weights from parameters -------------------------------------------

def test_weights_from_params():
    tr, va, k = _instance(2)
    obj = lsif_build(BasisSet(va), k, tr, va)
    assert np.array_equal(weights_from_params(obj, np.zeros(5), tr), np.zeros(10))
    one = lsif_build(BasisSet(va[:1]), RbfKernel(1e6), tr, va)
    assert weights_from_params(one, np.array([2.0]), tr) == pytest.approx(np.full(10, 2.0), rel=1e-9)
    beta = Rng(3).uniform(5)
    ref = [sum(beta[l] * math.exp(-np.sum((z - va[l]) ** 2) / (2 * k.sigma**2)) for l in range(5)) for z in tr]
    assert weights_from_params(obj, beta, tr) == pytest.approx(ref, rel=1e-12)
    with pytest.raises(ContractError):
        weights_from_params(kmm_build(k, tr, va), np.ones(10), tr)


# --- W1 ------------------------------------------------------------------

def test_w1_gradient_examples():
    assert np.array_equal(w1_weight_gradient(np.zeros(4)), np.zeros(4))
    assert w1_weight_gradient(np.full(4, 2.0)) == pytest.approx(np.full(4, -0.5))
    assert w1_weight_gradient([1.0, 2.0, 3.0]) == pytest.approx([-1 / 3, -2 / 3, -1.0])
    with pytest.raises(ContractError):
        w1_weight_gradient([np.nan])


def test_w1_constant_critic_keeps_band():
    obj = W1Objective(np.full(5, 3.0), np.zeros(2), epsilon=0.1)
    w = pgd.run(obj, np.ones(5), pgd.PgdConfig(steps=10, step_size=10.0)).x
    assert obj.constraint.is_feasible(w, 1e-12)
    assert w.mean() == pytest.approx(1.1)


def test_w1_zero_critic_no_move():
    obj = W1Objective(np.zeros(5), np.zeros(3))
    w0 = np.array([0.5, 1.5, 1.0, 1.0, 1.0])
    assert np.array_equal(pgd.run(obj, w0, pgd.PgdConfig(steps=5, step_size=1.0)).x, w0)


@given(seeds)
def test_w1_objective_gradient(seed):
    g = Rng(seed)
    obj = W1Objective(g.normal(6), g.normal(3))
    assert check_gradient(obj.value, obj.grad, g.uniform(6) * 2) < 1e-4

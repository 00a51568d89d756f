import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from driftwt import ContractError, Rng
from driftwt.critic import Critic
from driftwt.numerics import check_gradient

seeds = st.integers(0, 2**31)


def _zero_critic(dim=2, hidden=4):
    c = Critic(dim, hidden)
    c.set_params(np.zeros(c.n_params))
    return c


def test_zero_critic():
    c = _zero_critic()
    v, g = c.forward([0.3, -1.0])
    assert v == 0.0 and np.array_equal(g, [0.0, 0.0])


def test_small_weight_regime_is_linear():
    c = Critic(3, 4)
    a = np.array([0.5, -1.0, 2.0])
    W = np.zeros((4, 3))
    W[0] = 1e-4 * a
    v = np.zeros(4)
    v[0] = 1e4
    c.set_params(np.concatenate([W.ravel(), np.zeros(4), v, [0.0]]))
    _, g = c.forward([0.2, 0.1, -0.3])
    assert g == pytest.approx(a, abs=1e-3)


@given(seeds)
def test_input_gradient(seed):
    g = Rng(seed)
    c = Critic(3, 5, rng=g.spawn("c"))
    z = g.normal(3)
    err = check_gradient(lambda x: c.forward(x)[0], lambda x: c.forward(x)[1], z)
    assert err < 1e-5


def test_loss_zero_cases(rng):
    c = _zero_critic()
    z = rng.normal((5, 2))
    loss, grad = c.penalized_loss(z, np.ones(5), rng.normal((3, 2)), kappa=0.0)
    assert loss == 0.0 and not grad.any()
    c = Critic(2, 4, rng=rng.spawn("c"))
    loss, _ = c.penalized_loss(z, np.ones(5), z, kappa=0.0)
    assert abs(loss) < 1e-15


def test_penalized_loss_value_formula(rng):
    c = Critic(2, 4, kappa=3.0, rng=rng.spawn("c"))
    tr, va, w = rng.normal((6, 2)), rng.normal((4, 2)), rng.uniform(6)
    pts = rng.normal((4, 2))
    loss, _ = c.penalized_loss(tr, w, va, interp=pts)
    h = 1e-6
    norms = []
    for p in pts:
        fd = [(c.forward(p + h * e)[0] - c.forward(p - h * e)[0]) / (2 * h) for e in np.eye(2)]
        norms.append(np.linalg.norm(fd))
    ref = (w @ c.values(tr) / 6 - c.values(va).mean()) + 3.0 * np.mean((np.array(norms) - 1) ** 2)
    assert loss == pytest.approx(ref, rel=1e-7)


@given(seeds, st.sampled_from([0.0, 10.0]))
def test_parameter_gradient_with_penalty(seed, kappa):
    g = Rng(seed)
    c = Critic(2, 4, kappa=kappa, rng=g.spawn("c"))
    tr, va, w = g.normal((6, 2)), g.normal((4, 2)), g.uniform(6)
    pts = c.interpolates(tr, w, va, g)

    def f(p):
        c.set_params(p)
        return c.penalized_loss(tr, w, va, interp=pts)[0]

    def grad(p):
        c.set_params(p)
        return c.penalized_loss(tr, w, va, interp=pts)[1]

    assert check_gradient(f, grad, c.get_params()) < 1e-4


def test_interpolates_on_segments(rng):
    c = Critic(1, 3)
    tr = np.array([[0.0], [10.0]])
    va = np.array([[20.0], [30.0], [40.0]])
    pts = c.interpolates(tr, np.array([1.0, 0.0]), va, rng)
    assert pts.shape == (2, 1)
    # weight zero on the second train point: endpoints are 0 and a validation point
    assert np.all((pts >= 0) & (pts <= 40))
    allzero = c.interpolates(tr, np.zeros(2), va, rng)
    assert allzero.shape == (2, 1)


def test_contracts(rng):
    c = Critic(2, 3)
    with pytest.raises(ContractError):
        c.penalized_loss(np.zeros((0, 2)), np.zeros(0), np.ones((2, 2)))
    with pytest.raises(ContractError):
        c.penalized_loss(np.ones((2, 2)), [-1.0, 1.0], np.ones((2, 2)), rng)
    with pytest.raises(ContractError):
        c.forward([1.0, 2.0, 3.0])
    with pytest.raises(ContractError):
        c.train_step(np.ones((2, 2)), np.ones(2), np.ones((2, 2)), rng, lr=0.0)


def test_zero_gradient_step_keeps_params(rng):
    c = _zero_critic()
    p0 = c.get_params()
    z = rng.normal((4, 2))
    c.train_step(z, np.ones(4), z, rng, use_penalty=False)
    assert np.array_equal(c.get_params(), p0)
    assert c.steps == 1


def test_training_separates_clouds(rng):
    c = Critic(1, 16, lr=1e-2, rng=rng.spawn("c"))
    tr = -2 + 0.3 * rng.normal((64, 1))
    va = 2 + 0.3 * rng.normal((64, 1))
    for _ in range(200):
        c.train_step(tr, np.ones(64), va, rng, use_penalty=False)
    assert c.values(va).mean() - c.values(tr).mean() > 0


def test_penalty_drives_gradient_norm_to_one(rng):
    c = Critic(2, 16, lr=1e-2, rng=rng.spawn("c"))
    tr = rng.normal((64, 2))
    va = rng.normal((64, 2)) + 1.5
    for i in range(1500):
        c.train_step(tr, np.ones(64), va, rng, use_penalty=i >= 50)
    pts = c.interpolates(tr, np.ones(64), va, rng)
    norms = np.linalg.norm(c.input_grads(pts), axis=1)
    assert 0.5 <= norms.mean() <= 1.5


@pytest.mark.slow
def test_long_training_stays_finite(rng):
    c = Critic(2, 16, lr=1e-3, rng=rng.spawn("c"))
    tr = rng.uniform(200).reshape(100, 2)
    va = rng.uniform(200).reshape(100, 2) + 0.5
    for _ in range(10_000):
        c.train_step(tr, np.ones(100), va, rng)
    p = c.get_params()
    assert np.all(np.isfinite(p)) and np.abs(p).max() < 1e6

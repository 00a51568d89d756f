import hashlib
import math

import numpy as np
import pytest

from driftwt import ContractError
from driftwt.data import (ShiftDataset, Split, from_csv, inject_pair_flip, inject_symmetric_flip,
                          make_class_prior_shift, make_covariate_shift_1d, make_gaussian_mixture, make_two_gaussians,
                          to_csv)


def _digest(split):
    h = hashlib.sha256()
    for a in (split.x, split.y, split.clean_y, split.is_noisy):
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()


def test_no_shift_oracle_is_one():
    ds = make_gaussian_mixture(3, 2, np.eye(3, 2), [1.0, 2.0, 0.5], 300, 30, 100, seed=1)
    assert ds.ratio(ds.train.x, ds.train.y) == pytest.approx(np.ones(300), rel=1e-12)


def test_covariate_shift_ratio():
    ds = make_covariate_shift_1d(200, 20, 10, seed=0)
    x = ds.train.x[:, 0]
    assert ds.ratio(ds.train.x, ds.train.y) == pytest.approx(np.exp(x - 0.5), rel=1e-12)


def test_oracle_averages_to_one():
    ds = make_covariate_shift_1d(100_000, 10, 10, seed=2)
    assert abs(ds.ratio(ds.train.x, ds.train.y).mean() - 1) < 0.05


def test_class_frequencies_binomial():
    pri = np.array([0.2, 0.3, 0.5])
    n = 20_000
    ds = make_gaussian_mixture(3, 1, [[0.0], [1.0], [2.0]], [1.0] * 3, n, 10, 10, seed=4, priors=pri)
    counts = np.bincount(ds.train.y, minlength=3)
    assert np.all(np.abs(counts - n * pri) <= 3 * np.sqrt(n * pri * (1 - pri)))


def test_val_follows_test_distribution():
    ds = make_covariate_shift_1d(20_000, 2000, 2000, seed=3)
    assert abs(ds.val.x.mean() - 1) < 0.1 and abs(ds.train.x.mean()) < 0.05


def test_mixture_contracts():
    with pytest.raises(ContractError):
        make_gaussian_mixture(2, 2, np.zeros((2, 2)), [np.array([[1.0, 2.0], [2.0, 1.0]])] * 2, 100, 10, 10)
    with pytest.raises(ContractError):
        make_gaussian_mixture(2, 1, np.zeros((2, 1)), [-1.0, 1.0], 100, 10, 10)
    with pytest.raises(ContractError):
        make_gaussian_mixture(2, 1, np.zeros((2, 1)), [1.0, 1.0], 50, 10, 10)
    with pytest.raises(ContractError):
        make_gaussian_mixture(1, 1, np.zeros((1, 1)), [1.0], 100, 10, 10)
    with pytest.raises(ContractError):
        ShiftDataset(*[Split.clean(np.zeros((1, 1)), [0])] * 3, n_classes=2).ratio(np.zeros((1, 1)), [0])


def _four_class(n=10_000, seed=0):
    means = [[2, 0], [0, 2], [-2, 0], [0, -2]]
    return make_gaussian_mixture(4, 2, means, [1.0] * 4, n, 100, 200, seed=seed)


def test_pair_flip():
    ds = _four_class()
    assert np.array_equal(inject_pair_flip(ds, 0.0).train.y, ds.train.y)
    noisy = inject_pair_flip(ds, 0.3, seed=1)
    frac = noisy.train.is_noisy.mean()
    assert 0.28 <= frac <= 0.32
    f = noisy.train.is_noisy
    assert np.array_equal(noisy.train.y[f], (ds.train.y[f] + 1) % 4)
    assert np.array_equal(noisy.train.y[~f], ds.train.y[~f])
    assert _digest(noisy.val) == _digest(ds.val) and _digest(noisy.test) == _digest(ds.test)


def test_symmetric_flip():
    two = make_two_gaussians(2000, 100, 100, seed=0)
    n2 = inject_symmetric_flip(two, 0.4, seed=0)
    f = n2.train.is_noisy
    assert np.array_equal(n2.train.y[f], 1 - two.train.y[f])
    assert np.array_equal(inject_symmetric_flip(two, 0.0).train.y, two.train.y)

    ds = _four_class(30_000)
    noisy = inject_symmetric_flip(ds, 0.4, seed=0)
    f = noisy.train.is_noisy
    off = (noisy.train.y[f] - ds.train.y[f]) % 4
    assert set(np.unique(off)) == {1, 2, 3}
    counts = np.bincount(off, minlength=4)[1:]
    m = f.sum()
    assert np.all(np.abs(counts - m / 3) <= 3 * np.sqrt(m * (1 / 3) * (2 / 3)))
    assert _digest(noisy.val) == _digest(ds.val) and _digest(noisy.test) == _digest(ds.test)


def test_flip_contracts():
    ds = make_two_gaussians(200, 10, 10)
    for fn in (inject_pair_flip, inject_symmetric_flip):
        with pytest.raises(ContractError):
            fn(ds, 1.0)
        with pytest.raises(ContractError):
            fn(ds, -0.1)


def test_class_prior_shift_counts():
    base = _four_class(4000)
    ds, minority = make_class_prior_shift(base, 0.5, 50, n_val_per_class=10, seed=0, majority_per_class=200)
    assert len(minority) == math.ceil(0.5 * 4)
    counts = np.bincount(ds.train.y, minlength=4)
    for c in range(4):
        assert counts[c] == (4 if c in minority else 200)
    assert np.all(np.bincount(ds.val.y, minlength=4) == 10)
    assert _digest(ds.test) == _digest(base.test)


def test_class_prior_shift_rho_one_is_balanced():
    ds, _ = make_class_prior_shift(_four_class(4000), 0.5, 1, 10, seed=3, majority_per_class=150)
    assert np.all(np.bincount(ds.train.y, minlength=4) == 150)


def test_class_prior_shift_minority_count_rule():
    base = make_gaussian_mixture(10, 1, np.arange(10.0)[:, None], [1.0] * 10, 20_000, 10, 10)
    _, minority = make_class_prior_shift(base, 0.3, 5, 10, seed=0, majority_per_class=1000)
    assert len(minority) == 3


def test_class_prior_shift_contracts():
    base = _four_class(4000)
    with pytest.raises(ContractError):
        make_class_prior_shift(base, 0.0, 10)
    with pytest.raises(ContractError):
        make_class_prior_shift(base, 0.5, 0.5)
    with pytest.raises(ContractError):
        make_class_prior_shift(base, 0.5, 10, 10, majority_per_class=10_000)


def test_csv_round_trip(tmp_path):
    ds = inject_pair_flip(make_two_gaussians(200, 20, 30, seed=5, d=3), 0.2, seed=5)
    to_csv(ds, tmp_path / "d.csv")
    back = from_csv(tmp_path / "d.csv")
    for name in ("train", "val", "test"):
        assert _digest(getattr(back, name)) == _digest(getattr(ds, name))
    assert back.n_classes == 2

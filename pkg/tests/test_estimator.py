import numpy as np
import pytest
from sklearn.base import clone

from stochch import StochasticCahnHilliard
from stochch.config import SolverConfig
from stochch.exceptions import ConfigError
from stochch.harness import RunOptions, run_trajectory
from stochch.spectral import Field
from stochch.stepper import random_meanzero


def rows(n=16, k=2):
    from stochch.spectral import make_grid

    g = make_grid(2, n)
    return np.stack([random_meanzero(g, s, 0.5).values.ravel() for s in range(k)])


def test_fit_transform_matches_harness():
    X = rows()
    est = StochasticCahnHilliard(eps=0.2, n=16, T=0.02, seed=4)
    out = est.fit_transform(X)
    assert out.shape == X.shape and len(est.records_) == 2
    cfg = SolverConfig(eps=0.2, n=16, T=0.02, seed=4)
    rec = run_trajectory(cfg, 4, path=1, X0=Field(cfg.grid, X[1].reshape(16, 16)))
    assert np.array_equal(out[1], rec.final.ravel())
    assert np.allclose(out.mean(axis=1), X.mean(axis=1), atol=1e-10)


def test_zero_noise_and_params():
    est = StochasticCahnHilliard(eps=0.2, n=16, T=0.02, zero_noise=True)
    assert est.get_params()["zero_noise"] is True
    c = clone(est)
    X = rows(k=1)
    a, b = est.fit_transform(X), c.fit_transform(X)
    assert np.array_equal(a, b)
    cfg = SolverConfig(eps=0.2, n=16, T=0.02)
    rec = run_trajectory(cfg, 0, RunOptions(zero_noise=True), X0=Field(cfg.grid, X[0].reshape(16, 16)))
    assert np.array_equal(a[0], rec.final.ravel())


def test_validation():
    with pytest.raises(ValueError):
        StochasticCahnHilliard(n=16).fit(np.zeros((1, 100)))
    with pytest.raises(ConfigError):
        StochasticCahnHilliard(eps=0.1, tau=1e-2).fit(rows())
    est = StochasticCahnHilliard(n=16).fit(rows())
    with pytest.raises(ValueError):
        est.transform(np.zeros((1, 10)))
    from sklearn.exceptions import NotFittedError

    with pytest.raises(NotFittedError):
        StochasticCahnHilliard().transform(rows())

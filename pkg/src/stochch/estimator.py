"""scikit-learn style wrapper: initial fields in, fields at time ``T`` out."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .config import SolverConfig
from .harness import RunOptions, run_trajectory
from .spectral import Field


class StochasticCahnHilliard(TransformerMixin, BaseEstimator):
    """Evolve flattened initial fields with the stochastic scheme.

    Each row of ``X`` is one initial field with ``n**d`` values in C order.
    ``fit`` only validates the parameters and builds the grid; ``transform``
    runs one path per row (path id = row index) and returns the final fields.

    Parameters
    ----------
    eps, gamma, T, eta : float
        Interface width, noise exponent, final time and noise-mesh exponent.
    tau : float or None
        Time step; ``None`` uses ``eps**3 / 2``.
    n, d : int
        Grid points per axis and dimension.
    seed : int
        Base seed of the noise streams.
    zero_noise : bool
        Run the deterministic scheme instead.
    newton_tol : float
        H^-1 residual tolerance of every implicit step.
    """

    def __init__(self, eps=0.1, gamma=3.0, tau=None, T=0.0, eta=1.0, n=32, d=2, seed=0, zero_noise=False, newton_tol=1e-10):
        self.eps = eps
        self.gamma = gamma
        self.tau = tau
        self.T = T
        self.eta = eta
        self.n = n
        self.d = d
        self.seed = seed
        self.zero_noise = zero_noise
        self.newton_tol = newton_tol

    def _config(self):
        return SolverConfig(
            eps=self.eps,
            gamma=self.gamma,
            tau=self.tau,
            T=self.T,
            eta=self.eta,
            n=self.n,
            d=self.d,
            seed=self.seed,
            newton_tol=self.newton_tol,
        )

    def fit(self, X, y=None):
        X = check_array(X)
        self.config_ = self._config()
        self.grid_ = self.config_.grid
        self.noise_mesh_ = self.config_.noise_mesh
        if X.shape[1] != self.grid_.size:
            raise ValueError(f"expected {self.grid_.size} values per row, got {X.shape[1]}")
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "config_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} values per row, got {X.shape[1]}")
        opt = RunOptions(zero_noise=self.zero_noise)
        self.records_ = []
        out = np.empty_like(X, dtype=float)
        for i, row in enumerate(X):
            rec = run_trajectory(self.config_, self.seed, opt, path=i, X0=Field(self.grid_, row))
            self.records_.append(rec)
            out[i] = rec.final.ravel()
        return out

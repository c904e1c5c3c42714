"""Small Monte-Carlo and regression helpers shared by the noise and harness layers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    n: int

    def as_dict(self):
        return {"mean": self.mean, "stderr": self.stderr, "n": self.n}


def estimate(samples):
    """Sample mean with standard error ``std / sqrt(n)`` (ddof=1; zero for n == 1)."""
    x = np.asarray(samples, dtype=float)
    n = x.size
    if n == 0:
        return Estimate(float("nan"), float("nan"), 0)
    sd = float(np.std(x, ddof=1)) if n > 1 else 0.0
    return Estimate(float(np.mean(x)), float(sd / np.sqrt(n)), n)


@dataclass(frozen=True)
class PowerFit:
    """Least-squares fit of ``log y = slope * log x + intercept``."""

    slope: float
    intercept: float
    slope_stderr: float
    npoints: int

    def interval(self, z=1.96):
        return (self.slope - z * self.slope_stderr, self.slope + z * self.slope_stderr)

    def as_dict(self):
        lo, hi = self.interval()
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "slope_stderr": self.slope_stderr,
            "ci95": [lo, hi],
            "npoints": self.npoints,
        }


def fit_power_law(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two points to fit an exponent")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("power-law fit needs positive data")
    lx, ly = np.log(x), np.log(y)
    A = np.column_stack([lx, np.ones_like(lx)])
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    slope, intercept = float(coef[0]), float(coef[1])
    if x.size > 2:
        resid = ly - A @ coef
        s2 = float(resid @ resid) / (x.size - 2)
        cov = s2 * np.linalg.inv(A.T @ A)
        se = float(np.sqrt(cov[0, 0]))
    else:
        se = 0.0
    return PowerFit(slope, intercept, se, int(x.size))

"""Exception types raised by the solver and diagnostics."""


class NotMeanZero(ValueError):
    """An operation defined on mean-zero fields received a field with nonzero mean."""

    def __init__(self, mean, tol):
        super().__init__(f"field mean {mean:.3e} exceeds mean-zero tolerance {tol:.1e}")
        self.mean = mean
        self.tol = tol


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


class NewtonDiverged(RuntimeError):
    """The implicit solve hit its iteration cap without reaching tolerance."""

    def __init__(self, message, residual=float("nan"), trace=(), step=None):
        super().__init__(message)
        self.residual = residual
        self.trace = list(trace)
        self.step = step


class ConvexityViolated(NewtonDiverged):
    """A direction of non-positive curvature was met inside the Newton solve."""


class EmptyLevelSet(ValueError):
    """A level-set operation needs a nonempty set."""

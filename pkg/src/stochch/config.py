"""Run configuration: model, discretization, solver and event-set parameters."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from functools import cached_property

from .exceptions import ConfigError
from .noise import NoiseMesh, make_noise_mesh
from .spectral import make_grid

INIT_KINDS = ("tanh_circle", "constant", "cosine", "random")
POTENTIALS = ("double_well", "none")
TAU_RULES = ("half-eps-cubed",)


@dataclass(frozen=True)
class SolverConfig:
    """All parameters of one run.

    ``tau`` may be omitted (``None``) together with ``tau_rule="half-eps-cubed"``;
    ``T`` must be an integer multiple of ``tau``.
    """

    # model
    eps: float = 0.1
    gamma: float = 3.0
    T: float = 0.0
    potential: str = "double_well"
    # discretization
    d: int = 2
    n: int = 64
    tau: float | None = None
    tau_rule: str | None = "half-eps-cubed"
    eta: float = 1.0
    noise_m: int | None = None
    variant: str = "exact"
    noise_transfer: str = "pointwise"
    # initial data
    init_kind: str = "tanh_circle"
    init_radius: float = 0.25
    init_center: tuple = ()
    init_value: float = 0.0
    init_mode: int = 1
    init_amplitude: float = 1.0
    init_seed: int = 0
    # solver
    newton_tol: float = 1e-10
    newton_max_iter: int = 30
    linear_tol: float = 1e-12
    linear_max_iter: int = 500
    warm_start: bool = True
    allow_nonconvex: bool = False
    meanzero_tol: float = 1e-10
    split_tol: float = 1e-8
    energy_tol: float = 1e-10
    # event-set knobs
    sigma0: float = 1.0
    kappa0: float = 0.5
    theta: float = 1.0
    c_omega2: float = 1.0
    c_rem: float = 1.0
    c_w: float = 1.0
    c_energy: float = 1.0
    # bookkeeping
    seed: int = 0
    extra: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if self.tau is None:
            if self.tau_rule not in TAU_RULES:
                raise ConfigError("tau is missing and no tau_rule is given")
            object.__setattr__(self, "tau", 0.5 * self.eps**3)
        c = self.init_center
        object.__setattr__(self, "init_center", tuple(float(x) for x in c) if c else ())
        self.validate()

    # -- validation -------------------------------------------------------

    def validate(self):
        e = self.eps
        if not 0 < e < 1:
            raise ConfigError(f"eps must lie in (0, 1), got {e}")
        if self.gamma <= 0:
            raise ConfigError(f"gamma must be positive, got {self.gamma}")
        if not self.tau > 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if self.T < 0:
            raise ConfigError(f"T must be nonnegative, got {self.T}")
        if self.eta <= 0:
            raise ConfigError(f"eta must be positive, got {self.eta}")
        if self.d not in (2, 3):
            raise ConfigError(f"d must be 2 or 3, got {self.d}")
        if self.n < 4:
            raise ConfigError(f"n must be at least 4, got {self.n}")
        if self.potential not in POTENTIALS:
            raise ConfigError(f"unknown potential {self.potential!r}")
        if self.init_kind not in INIT_KINDS:
            raise ConfigError(f"unknown init_kind {self.init_kind!r}; choose from {INIT_KINDS}")
        if self.variant not in ("exact", "discrete"):
            raise ConfigError(f"unknown eigenvalue variant {self.variant!r}")
        if self.noise_transfer not in ("pointwise", "projection"):
            raise ConfigError(f"unknown noise_transfer {self.noise_transfer!r}")
        if self.init_center and len(self.init_center) != self.d:
            raise ConfigError("init_center must have d coordinates")
        limit = 0.5 * e**3
        if self.tau > limit * (1 + 1e-12) and not self.allow_nonconvex:
            raise ConfigError(
                f"tau = {self.tau:.6g} exceeds eps^3/2 = {limit:.6g}; the implicit step is only "
                "guaranteed convex for tau <= eps^3/2 (set allow_nonconvex to override)"
            )
        J = self.T / self.tau
        if abs(J - round(J)) > 1e-9 * max(1.0, J):
            raise ConfigError(f"T = {self.T} is not an integer multiple of tau = {self.tau}")
        for name in ("newton_tol", "linear_tol", "meanzero_tol", "split_tol"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.newton_max_iter < 1 or self.linear_max_iter < 1:
            raise ConfigError("iteration caps must be at least 1")
        if self.noise_m is not None and self.noise_m < 2:
            raise ConfigError(f"noise_m must be at least 2, got {self.noise_m}")
        try:
            make_noise_mesh(self.d, self.eta, self.eps)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def assumption_notes(self):
        """Soft parameter relations from the error analysis (reported, never enforced)."""
        notes = []
        if self.gamma <= self.eta + 1:
            notes.append("gamma <= eta + 1: the linear part is not expected to stay bounded as eps -> 0")
        if self.kappa0 >= self.sigma0:
            notes.append("kappa0 >= sigma0: the remainder threshold is looser than the stopping threshold")
        return notes

    # -- derived ----------------------------------------------------------

    @property
    def steps(self):
        return int(round(self.T / self.tau))

    @cached_property
    def grid(self):
        return make_grid(self.d, self.n, self.variant, self.meanzero_tol)

    @cached_property
    def noise_mesh(self):
        """Hat mesh with ``h ~ eps**eta``, or ``noise_m`` nodes per axis when set."""
        if self.noise_m is not None:
            return NoiseMesh(d=self.d, m=int(self.noise_m))
        return make_noise_mesh(self.d, self.eta, self.eps)

    @property
    def noise_amplitude(self):
        return self.eps**self.gamma

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)

    def to_dict(self):
        out = {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.name != "extra"}
        out["init_center"] = list(self.init_center)
        return out

    def canonical(self):
        """Canonical JSON text: sorted keys, full float precision."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw = dict(data)
        if "init_center" in kw and kw["init_center"] is not None:
            kw["init_center"] = tuple(kw["init_center"])
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_canonical(cls, text):
        return cls.from_dict(json.loads(text))


def steps_for(T, tau_max):
    """Largest ``tau <= tau_max`` that divides ``T`` evenly, and the step count."""
    if T == 0:
        return tau_max, 0
    J = math.ceil(T / tau_max * (1 - 1e-12))
    return T / J, J

"""Discrete space-time white noise built from nodal hat functions.

Each increment is

    dW(x) = sum_l phi_l(x) / sqrt(|(phi_l, 1)| / (d + 1)) * dbeta_l,   dbeta_l ~ N(0, tau)

on a uniform tensor-product hat mesh with ``m`` nodes per axis (boundary nodes
included), followed by removal of the spatial mean so the scheme keeps its mass.

Random numbers come from Philox streams keyed by ``(seed, path, step)``; node
``l`` is the ``l``-th draw of its stream in C order. Any increment can therefore
be regenerated on its own, independent of how many other increments were drawn
before it or on which worker.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np

from .stats import estimate, fit_power_law

SCHN_MAGIC = b"SCHN"
SCHN_VERSION = 1
_SCHN_HEADER = struct.Struct("<4sIIIIdQQ")


def rng_stream(seed, path, step):
    """Counter-based generator for one ``(seed, path, step)`` key."""
    ss = np.random.SeedSequence([int(seed), int(path), int(step)])
    return np.random.Generator(np.random.Philox(ss))


def _apply_axes(mats, a):
    """Apply ``mats[k]`` along axis ``k`` of the trailing ``len(mats)`` axes of ``a``."""
    d = len(mats)
    lead = a.ndim - d
    out = a
    for k, M in enumerate(mats):
        out = np.moveaxis(np.tensordot(M, out, axes=([1], [lead + k])), 0, lead + k)
    return out


@dataclass(frozen=True)
class NoiseMesh:
    """Uniform hat-function mesh with ``m`` nodes per axis on ``[0, 1]^d``."""

    d: int
    m: int
    target_h: float = float("nan")

    def __post_init__(self):
        if self.d not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.d}")
        if self.m < 2:
            raise ValueError(f"noise mesh needs at least 2 nodes per axis, got {self.m}")

    @property
    def h(self):
        return 1.0 / (self.m - 1)

    @property
    def shape(self):
        return (self.m,) * self.d

    @property
    def num_nodes(self):
        return self.m**self.d

    @cached_property
    def nodes(self):
        return np.arange(self.m) * self.h

    @cached_property
    def integrals_1d(self):
        """``(phi_l, 1)`` per axis: ``h`` inside, ``h/2`` at the two ends."""
        c = np.full(self.m, self.h)
        c[[0, -1]] = self.h / 2
        return c

    @cached_property
    def mass_1d(self):
        """1-D hat mass matrix ``(phi_k, phi_l)``."""
        h = self.h
        M = np.zeros((self.m, self.m))
        idx = np.arange(self.m)
        M[idx, idx] = 2 * h / 3
        M[0, 0] = M[-1, -1] = h / 3
        M[idx[:-1], idx[1:]] = h / 6
        M[idx[1:], idx[:-1]] = h / 6
        return M

    def _outer(self, v):
        out = v
        for _ in range(self.d - 1):
            out = np.multiply.outer(out, v)
        return out

    @cached_property
    def integrals(self):
        """``(phi_l, 1)`` on the full node lattice."""
        return self._outer(self.integrals_1d)

    @cached_property
    def l2_norms(self):
        """``||phi_l||_{L2}`` on the full node lattice."""
        return np.sqrt(self._outer(np.diag(self.mass_1d)))

    @cached_property
    def scale(self):
        """Per-node amplitude ``1 / sqrt(|(phi_l, 1)| / (d + 1))``."""
        return 1.0 / np.sqrt(self.integrals / (self.d + 1))

    def hat_1d(self, x):
        """Matrix ``B[i, l] = phi_l(x_i)`` of 1-D hats at points ``x``."""
        x = np.asarray(x, dtype=float)
        return np.maximum(0.0, 1.0 - np.abs(x[:, None] - self.nodes[None, :]) / self.h)

    def evaluate(self, coeffs, points_1d):
        """Pointwise value of ``sum_l coeffs_l phi_l`` on the tensor grid ``points_1d^d``."""
        B = self.hat_1d(points_1d)
        return _apply_axes([B] * self.d, coeffs)

    def projection_1d(self, n):
        """Exact L2 projection of 1-D hats onto the first ``n`` orthonormal cosines."""
        k = np.arange(n, dtype=float)
        h = self.h
        g = np.empty(n)
        g[0] = h
        kk = k[1:]
        g[1:] = 2.0 * (1.0 - np.cos(np.pi * kk * h)) / (np.pi**2 * kk**2 * h)
        w = np.ones(self.m)
        w[[0, -1]] = 0.5
        norm = np.sqrt(np.where(k == 0, 1.0, 2.0))
        return (norm * g)[:, None] * np.cos(np.pi * k[:, None] * self.nodes[None, :]) * w[None, :]

    def fe_mean(self, coeffs):
        """Exact spatial mean of ``sum_l coeffs_l phi_l`` (trailing axes are nodes)."""
        axes = tuple(range(-self.d, 0))
        return np.sum(coeffs * self.integrals, axis=axes)

    def fe_norm2(self, coeffs):
        """Exact ``||sum_l coeffs_l phi_l||^2`` via the tensor mass matrix."""
        Ma = _apply_axes([self.mass_1d] * self.d, coeffs)
        axes = tuple(range(-self.d, 0))
        return np.sum(coeffs * Ma, axis=axes)


def make_noise_mesh(d, eta, eps):
    """Noise mesh with ``h`` as close as realizable to ``eps**eta``."""
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if eta <= 0:
        raise ValueError(f"eta must be positive, got {eta}")
    m = int(round(eps ** (-eta))) + 1
    if m < 2:
        raise ValueError(f"noise mesh would have {m} nodes per axis")
    return NoiseMesh(d=int(d), m=m, target_h=float(eps**eta))


@dataclass(frozen=True)
class NoiseIncrement:
    """One increment ``dW`` and its mean-corrected version on a solver grid.

    ``raw_field``/``corrected_field`` are ``None`` when the increment was drawn
    without a grid (moment studies only need the draws).
    """

    mesh: NoiseMesh
    tau: float
    draws: np.ndarray = field(repr=False)
    step: int = 0
    path: int = 0
    seed: int = 0
    raw_field: np.ndarray | None = field(default=None, repr=False)
    corrected_field: np.ndarray | None = field(default=None, repr=False)

    @property
    def coeffs(self):
        return self.draws * self.mesh.scale

    @property
    def fe_mean(self):
        return float(self.mesh.fe_mean(self.coeffs))

    @property
    def fe_norm2(self):
        return float(self.mesh.fe_norm2(self.coeffs))


def transfer_to_grid(mesh, grid, coeffs, transfer="pointwise"):
    """Hat expansion -> nodal values on ``grid``.

    ``pointwise`` evaluates the hats at the collocation nodes; ``projection``
    takes the exact L2 projection onto the grid's cosine space.
    """
    if transfer == "pointwise":
        return mesh.evaluate(coeffs, grid.coords)
    if transfer == "projection":
        P = mesh.projection_1d(grid.n)
        spectrum = _apply_axes([P] * mesh.d, coeffs) * np.sqrt(grid.size)
        return grid.inverse(spectrum)
    raise ValueError(f"unknown noise transfer {transfer!r}")


def mean_correct(inc: NoiseIncrement, grid=None) -> NoiseIncrement:
    """Subtract the grid mean so the corrected field integrates to zero."""
    if inc.raw_field is None:
        raise ValueError("increment has no raw field to correct")
    raw = inc.raw_field
    corrected = raw - np.mean(raw)
    # one more pass removes the rounding residue of the first subtraction
    corrected = corrected - np.mean(corrected)
    return replace(inc, corrected_field=corrected)


def sample_increment(mesh, grid, tau, key=(0, 0, 0), draws=None, transfer="pointwise"):
    """Draw one increment for ``key = (seed, path, step)``.

    ``draws`` overrides the Gaussian sample (shape ``mesh.shape``), e.g. to test
    single-node responses. With ``grid=None`` only the draws are produced.
    """
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    seed, path, step = key
    if draws is None:
        draws = rng_stream(seed, path, step).standard_normal(mesh.num_nodes)
        draws = draws.reshape(mesh.shape) * np.sqrt(tau)
    else:
        draws = np.asarray(draws, dtype=float).reshape(mesh.shape)
    inc = NoiseIncrement(mesh, float(tau), draws, int(step), int(path), int(seed))
    if grid is None:
        return inc
    raw = transfer_to_grid(mesh, grid, draws * mesh.scale, transfer)
    return mean_correct(replace(inc, raw_field=raw))


def sample_draws(mesh, tau, seed, path, steps):
    """Draw arrays for several steps of one path, shape ``(len(steps),) + mesh.shape``."""
    out = np.empty((len(steps),) + mesh.shape)
    for i, j in enumerate(steps):
        out[i] = rng_stream(seed, path, j).standard_normal(mesh.num_nodes).reshape(mesh.shape)
    return out * np.sqrt(tau)


# -- moments ------------------------------------------------------------------


def expected_moments(mesh, tau):
    """Closed-form expectations for the exact (finite-element) mean and norm.

    Uses independence of the draws: ``E[m^2] = tau * sum_l (phi_l,1)^2 s_l^2`` and
    ``E||dW||^2 = tau * sum_l ||phi_l||^2 s_l^2``; ``E[m^4] = 3 E[m^2]^2``.
    """
    s2 = mesh.scale**2
    m2 = tau * float(np.sum(mesh.integrals**2 * s2))
    w2 = tau * float(np.sum(mesh.l2_norms**2 * s2))
    return {"mean_sq": m2, "raw_norm_sq": w2, "corrected_norm_sq": w2 - m2, "mean_4th": 3 * m2**2}


@dataclass
class MomentReport:
    """Monte-Carlo estimates of the three noise moments for one ``(h, tau)`` batch."""

    h: float
    tau: float
    nsamples: int
    mean_sq: object
    corrected_norm_sq: object
    mean_4th: object
    fits: dict = field(default_factory=dict)

    def as_dict(self):
        return {
            "h": self.h,
            "tau": self.tau,
            "nsamples": self.nsamples,
            "mean_sq": self.mean_sq.as_dict(),
            "corrected_norm_sq": self.corrected_norm_sq.as_dict(),
            "mean_4th": self.mean_4th.as_dict(),
            "fits": {k: v.as_dict() for k, v in self.fits.items()},
        }


MIN_MOMENT_SAMPLES = 100


def moment_stats_from_draws(mesh, tau, draws):
    """Moment report from an array of draws with shape ``(S,) + mesh.shape``."""
    draws = np.asarray(draws, dtype=float)
    if draws.shape[0] < MIN_MOMENT_SAMPLES:
        raise ValueError(f"need at least {MIN_MOMENT_SAMPLES} samples, got {draws.shape[0]}")
    coeffs = draws * mesh.scale
    m = mesh.fe_mean(coeffs)
    norm2 = mesh.fe_norm2(coeffs) - m**2
    return MomentReport(
        h=mesh.h,
        tau=float(tau),
        nsamples=int(draws.shape[0]),
        mean_sq=estimate(m**2),
        corrected_norm_sq=estimate(norm2),
        mean_4th=estimate(m**4),
    )


def moment_stats(samples):
    """Moment report for a list of increments sharing one mesh and ``tau``.

    Given a list of such lists (one per ``(h, tau)`` batch) a list of reports is
    returned, with power-law fits of each moment against ``h`` and ``tau``
    attached to every report.
    """
    if samples and isinstance(samples[0], (list, tuple)):
        reports = [moment_stats(batch) for batch in samples]
        attach_scaling_fits(reports)
        return reports
    if len(samples) < MIN_MOMENT_SAMPLES:
        raise ValueError(f"need at least {MIN_MOMENT_SAMPLES} samples, got {len(samples)}")
    mesh, tau = samples[0].mesh, samples[0].tau
    if any(s.mesh != mesh or s.tau != tau for s in samples):
        raise ValueError("all samples must share one noise mesh and tau")
    return moment_stats_from_draws(mesh, tau, np.stack([s.draws for s in samples]))


def attach_scaling_fits(reports):
    """Fit ``log E`` against ``log h`` and ``log tau`` wherever a parameter varies."""
    for var in ("h", "tau"):
        xs = np.array([getattr(r, var) for r in reports])
        if np.unique(xs).size < 2:
            continue
        for name in ("mean_sq", "corrected_norm_sq", "mean_4th"):
            ys = np.array([getattr(r, name).mean for r in reports])
            if np.all(ys > 0):
                fit = fit_power_law(xs, ys)
                for r in reports:
                    r.fits[f"{name}_vs_{var}"] = fit
    return reports


# -- persistence --------------------------------------------------------------


@dataclass
class NoisePath:
    """Draw arrays for steps ``1..J`` of one path, replayable on any grid."""

    mesh: NoiseMesh
    tau: float
    draws: np.ndarray
    seed: int = 0
    path: int = 0

    @classmethod
    def sample(cls, mesh, tau, seed, path, nsteps):
        return cls(mesh, tau, sample_draws(mesh, tau, seed, path, range(1, nsteps + 1)), seed, path)

    def __len__(self):
        return self.draws.shape[0]

    def increment(self, j, grid=None, transfer="pointwise"):
        """Increment for step ``j`` (1-based)."""
        return sample_increment(
            self.mesh, grid, self.tau, key=(self.seed, self.path, j), draws=self.draws[j - 1], transfer=transfer
        )

    def increments(self, grid, transfer="pointwise"):
        return [self.increment(j, grid, transfer) for j in range(1, len(self) + 1)]


def write_noise_path(path, noise: NoisePath):
    d = noise.mesh.d
    with open(path, "wb") as fh:
        fh.write(
            _SCHN_HEADER.pack(
                SCHN_MAGIC, SCHN_VERSION, d, noise.mesh.m, len(noise), float(noise.tau), noise.seed, noise.path
            )
        )
        fh.write(np.ascontiguousarray(noise.draws, dtype="<f8").tobytes(order="C"))


def read_noise_path(path) -> NoisePath:
    raw = Path(path).read_bytes()
    magic, version, d, m, J, tau, seed, pid = _SCHN_HEADER.unpack_from(raw)
    if magic != SCHN_MAGIC:
        raise ValueError(f"{path}: not an SCHN noise path")
    if version != SCHN_VERSION:
        raise ValueError(f"{path}: unsupported SCHN version {version}")
    body = np.frombuffer(raw, dtype="<f8", offset=_SCHN_HEADER.size)
    if body.size != J * m**d:
        raise ValueError(f"{path}: expected {J * m**d} draws, found {body.size}")
    mesh = NoiseMesh(d=d, m=m)
    return NoisePath(mesh, tau, body.reshape((J,) + mesh.shape).astype(float), int(seed), int(pid))

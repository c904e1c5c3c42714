"""Cell-centred grids on the unit cube and the Neumann Laplacian in its cosine basis.

Nodes sit at ``x_i = (i + 1/2) / n`` on every axis. On these nodes the orthonormal
DCT-II diagonalises the Neumann Laplacian: sampled cosines ``cos(pi k x)`` are
exact eigenvectors, with eigenvalue ``pi^2 |k|^2`` ("exact" variant) or the
five-point finite-difference symbol ``sum (2n sin(pi k / 2n))^2`` ("discrete").

All transforms run with a single scipy.fft worker, so results are bitwise
reproducible on a given machine and library build.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.fft

from .exceptions import NotMeanZero

EIGEN_VARIANTS = ("exact", "discrete")
NORM_KINDS = ("L2", "L4", "Lp", "Linf", "H1_semi", "Hminus1", "Halpha")

SCHF_MAGIC = b"SCHF"
SCHF_VERSION = 1
_SCHF_HEADER = struct.Struct("<4sIIId")


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centred collocation grid on ``[0, 1]^d``.

    Parameters
    ----------
    d : int
        Spatial dimension, 2 or 3.
    n : int
        Points per axis (at least 4). Powers of two give the fastest transforms.
    variant : {"exact", "discrete"}
        Which eigenvalue table the operators use.
    meanzero_tol : float
        Largest |mean| accepted by operators that need mean-zero input.
    """

    d: int
    n: int
    variant: str = "exact"
    meanzero_tol: float = 1e-10

    def __post_init__(self):
        if self.d not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.d}")
        if int(self.n) != self.n or self.n < 4:
            raise ValueError(f"need at least 4 points per axis, got {self.n}")
        if self.variant not in EIGEN_VARIANTS:
            raise ValueError(f"unknown eigenvalue variant {self.variant!r}")

    @property
    def shape(self):
        return (self.n,) * self.d

    @property
    def size(self):
        return self.n**self.d

    @property
    def spacing(self):
        return 1.0 / self.n

    @cached_property
    def coords(self):
        """1-D node coordinates, shared by every axis."""
        return (np.arange(self.n) + 0.5) / self.n

    @cached_property
    def mesh(self):
        """Tuple of ``d`` coordinate arrays, ``indexing="ij"``."""
        return tuple(np.meshgrid(*([self.coords] * self.d), indexing="ij"))

    @cached_property
    def eigenvalues(self):
        """``lambda_k`` on the full mode lattice; ``lambda_0 == 0`` exactly."""
        k = np.arange(self.n, dtype=float)
        if self.variant == "exact":
            lam1 = (np.pi * k) ** 2
        else:
            lam1 = (2.0 * self.n * np.sin(np.pi * k / (2.0 * self.n))) ** 2
        lam = np.zeros(self.shape)
        for axis in range(self.d):
            shape = [1] * self.d
            shape[axis] = self.n
            lam = lam + lam1.reshape(shape)
        lam[(0,) * self.d] = 0.0
        return lam

    @cached_property
    def _inv_eigenvalues(self):
        lam = self.eigenvalues
        out = np.zeros_like(lam)
        np.divide(1.0, lam, out=out, where=lam > 0)
        return out

    # -- transforms -------------------------------------------------------

    def forward(self, v):
        """Orthonormal cosine coefficients of nodal values ``v``."""
        return scipy.fft.dctn(np.asarray(v, dtype=float), type=2, norm="ortho", workers=1)

    def inverse(self, c):
        """Nodal values from orthonormal cosine coefficients."""
        return scipy.fft.idctn(c, type=2, norm="ortho", workers=1)

    def apply_multiplier(self, v, mult):
        return self.inverse(mult * self.forward(v))

    # -- basic functionals ------------------------------------------------

    def mean(self, v):
        return float(np.mean(v))

    def check_mean_zero(self, v):
        m = self.mean(v)
        if abs(m) > self.meanzero_tol:
            raise NotMeanZero(m, self.meanzero_tol)

    def inner(self, u, v, kind="L2"):
        """L2 (midpoint rule) or H^-1 inner product of two nodal arrays."""
        if kind == "L2":
            return float(np.sum(np.asarray(u) * np.asarray(v)) / self.size)
        if kind == "Hminus1":
            self.check_mean_zero(u)
            self.check_mean_zero(v)
            cu, cv = self.forward(u), self.forward(v)
            return float(np.sum(cu * cv * self._inv_eigenvalues) / self.size)
        raise ValueError(f"unknown inner-product kind {kind!r}")

    # -- operators --------------------------------------------------------

    def laplacian(self, v):
        return self.apply_multiplier(v, -self.eigenvalues)

    def inv_laplacian(self, v):
        """Mean-zero solution ``w`` of ``-lap w = v`` with Neumann conditions."""
        self.check_mean_zero(v)
        return self.apply_multiplier(v, self._inv_eigenvalues)

    def frac_multiplier(self, s):
        lam = self.eigenvalues
        if s == 0:
            return np.ones_like(lam)
        out = np.zeros_like(lam)
        pos = lam > 0
        out[pos] = lam[pos] ** s
        return out

    def frac_laplacian(self, v, s):
        """``(-lap)^s v``; the constant mode is kept for s == 0 and dropped otherwise."""
        if s < 0:
            self.check_mean_zero(v)
        return self.apply_multiplier(v, self.frac_multiplier(s))

    def norm(self, v, kind="L2", p=None, alpha=None, with_mean=False):
        """Norms of a nodal array.

        ``kind`` is one of ``L2``, ``L4``, ``Lp`` (needs ``p``), ``Linf``,
        ``H1_semi``, ``Hminus1`` or ``Halpha`` (needs ``alpha``). ``Halpha`` is the
        seminorm ``||(-lap)^(alpha/2) v||``; pass ``with_mean=True`` to add the
        squared mean, giving ``(|v|_alpha^2 + m(v)^2)^(1/2)``.
        """
        v = np.asarray(v, dtype=float)
        if kind == "L2":
            return float(np.sqrt(np.sum(v * v) / self.size))
        if kind == "L4":
            return float(np.mean(v**4) ** 0.25)
        if kind == "Lp":
            if p is None or p < 1:
                raise ValueError("Lp norm needs p >= 1")
            return float(np.mean(np.abs(v) ** p) ** (1.0 / p))
        if kind == "Linf":
            return float(np.max(np.abs(v)))
        if kind == "H1_semi":
            c = self.forward(v)
            return float(np.sqrt(np.sum(self.eigenvalues * c * c) / self.size))
        if kind == "Hminus1":
            self.check_mean_zero(v)
            c = self.forward(v)
            return float(np.sqrt(np.sum(self._inv_eigenvalues * c * c) / self.size))
        if kind == "Halpha":
            if alpha is None:
                raise ValueError("Halpha norm needs alpha")
            if alpha < 0:
                self.check_mean_zero(v)
            c = self.forward(v)
            mult = self.frac_multiplier(alpha)
            sq = float(np.sum(mult * c * c) / self.size)
            if with_mean:
                sq += self.mean(v) ** 2
            return float(np.sqrt(sq))
        raise ValueError(f"unknown norm kind {kind!r}")


def make_grid(d, n, variant="exact", meanzero_tol=1e-10):
    return Grid(d=int(d), n=int(n), variant=variant, meanzero_tol=meanzero_tol)


@dataclass(frozen=True)
class Field:
    """Real scalar field sampled on a :class:`Grid`.

    The nodal array is stored read-only; ``coeffs`` is computed once on demand.
    """

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float, copy=True).reshape(self.grid.shape)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @cached_property
    def coeffs(self):
        c = self.grid.forward(self.values)
        c.setflags(write=False)
        return c

    @property
    def mean(self):
        return self.grid.mean(self.values)

    @classmethod
    def from_function(cls, grid, func):
        return cls(grid, func(*grid.mesh))

    @classmethod
    def from_coeffs(cls, grid, coeffs):
        return cls(grid, grid.inverse(coeffs))

    def __add__(self, other):
        return Field(self.grid, self.values + _values(other))

    def __sub__(self, other):
        return Field(self.grid, self.values - _values(other))

    def __mul__(self, a):
        return Field(self.grid, self.values * _values(a))

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.grid, -self.values)


def _values(x):
    return x.values if isinstance(x, Field) else x


def laplacian(v: Field) -> Field:
    return Field(v.grid, v.grid.laplacian(v.values))


def inv_laplacian(v: Field) -> Field:
    return Field(v.grid, v.grid.inv_laplacian(v.values))


def frac_laplacian(v: Field, s: float) -> Field:
    return Field(v.grid, v.grid.frac_laplacian(v.values, s))


def norm(v: Field, kind="L2", **kw) -> float:
    return v.grid.norm(v.values, kind, **kw)


def inner(u: Field, v: Field, kind="L2") -> float:
    return u.grid.inner(u.values, v.values, kind)


# -- snapshot I/O -------------------------------------------------------------


def write_schf(path, values, eps, d=None):
    """Write a field snapshot: header ``SCHF``/version/d/n/eps then little-endian f64."""
    values = np.asarray(values, dtype="<f8")
    d = values.ndim if d is None else d
    n = values.shape[0]
    if values.shape != (n,) * d:
        raise ValueError(f"snapshot must be a cube of side n, got shape {values.shape}")
    with open(path, "wb") as fh:
        fh.write(_SCHF_HEADER.pack(SCHF_MAGIC, SCHF_VERSION, d, n, float(eps)))
        fh.write(np.ascontiguousarray(values).tobytes(order="C"))


def read_schf(path):
    """Return ``(values, eps)`` from an ``SCHF`` snapshot."""
    raw = Path(path).read_bytes()
    magic, version, d, n, eps = _SCHF_HEADER.unpack_from(raw)
    if magic != SCHF_MAGIC:
        raise ValueError(f"{path}: not an SCHF snapshot")
    if version != SCHF_VERSION:
        raise ValueError(f"{path}: unsupported SCHF version {version}")
    body = np.frombuffer(raw, dtype="<f8", offset=_SCHF_HEADER.size)
    if body.size != n**d:
        raise ValueError(f"{path}: expected {n**d} values, found {body.size}")
    return body.reshape((n,) * d).astype(float), eps


def write_field_csv(path, grid, values):
    """CSV with one row per node: ``x1,...,xd,value``."""
    cols = [m.ravel() for m in grid.mesh] + [np.asarray(values).ravel()]
    header = ",".join([f"x{i + 1}" for i in range(grid.d)] + ["value"])
    np.savetxt(path, np.column_stack(cols), delimiter=",", header=header, comments="", fmt="%.17g")

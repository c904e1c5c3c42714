"""Energy, error functionals, stopping index, event sets and interface geometry."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import directed_hausdorff
from skimage import measure

from .exceptions import EmptyLevelSet
from .profiles import SURFACE_TENSION, Sphere, tanh_profile  # noqa: F401
from .spectral import Field

# -- energy -------------------------------------------------------------------


@dataclass(frozen=True)
class EnergyReport:
    step: int
    E: float
    gradient: float
    potential: float
    mass: float
    well_norm2: float

    def as_dict(self):
        return dict(self.__dict__)


def energy(X, eps, step=0) -> EnergyReport:
    """Ginzburg-Landau energy ``eps/2 |grad X|^2 + (1/eps) int F(X)``."""
    if isinstance(X, Field):
        grid, v = X.grid, X.values
    else:
        grid, v = X
    grad = 0.5 * eps * grid.norm(v, "H1_semi") ** 2
    w = v * v - 1.0
    well2 = float(np.mean(w * w))
    pot = float(np.mean(0.25 * w * w)) / eps
    return EnergyReport(int(step), grad + pot, grad, pot, float(np.mean(v)), well2)


# -- error series -------------------------------------------------------------


_SERIES_KEYS = ("hm1", "l4", "l3", "linf", "grad", "acc3", "acc4", "accgrad", "mart", "noise_norm2")


class ErrorSeries:
    """Streamed norms and accumulators of ``Z^j = X^j - X_CH^j`` for ``j = 1..J``.

    The martingale term pairs ``(-lap)^{-1} Z^{j-1}`` with the increment used
    in step ``j``; ``Z^0`` defaults to zero.
    """

    def __init__(self, grid, eps, tau, Z0=None):
        self.grid = grid
        self.eps = eps
        self.tau = tau
        self._prev = np.zeros(grid.shape) if Z0 is None else np.asarray(Z0, dtype=float)
        self.data = {k: [] for k in _SERIES_KEYS}
        self.hat = {k: [] for k in ("hm1", "l4", "l3", "linf", "grad")}
        self._m = 0.0

    def __len__(self):
        return len(self.data["hm1"])

    def record(self, Z, noise=None, Z_hat=None):
        g, eps, tau = self.grid, self.eps, self.tau
        Z = np.asarray(Z, dtype=float)
        Zc = Z - np.mean(Z)
        d = self.data
        l3 = float(np.mean(np.abs(Z) ** 3) ** (1 / 3))
        l4 = float(np.mean(Z**4) ** 0.25)
        gr = g.norm(Z, "H1_semi")
        prev3 = d["acc3"][-1] if d["acc3"] else 0.0
        prev4 = d["acc4"][-1] if d["acc4"] else 0.0
        prevg = d["accgrad"][-1] if d["accgrad"] else 0.0
        d["hm1"].append(g.norm(Zc, "Hminus1"))
        d["l4"].append(l4)
        d["l3"].append(l3)
        d["linf"].append(float(np.max(np.abs(Z))))
        d["grad"].append(gr)
        d["acc3"].append(prev3 + tau / eps * l3**3)
        d["acc4"].append(prev4 + tau / eps * l4**4)
        d["accgrad"].append(prevg + eps**4 * tau * gr**2)
        if noise is not None:
            zp = self._prev - np.mean(self._prev)
            self._m += g.inner(g.inv_laplacian(zp), noise, "L2")
            d["noise_norm2"].append(float(np.mean(noise * noise)))
        else:
            d["noise_norm2"].append(0.0)
        d["mart"].append(self._m)
        self._prev = Z
        if Z_hat is not None:
            Zh = np.asarray(Z_hat, dtype=float)
            self.hat["hm1"].append(g.norm(Zh - np.mean(Zh), "Hminus1"))
            self.hat["l4"].append(float(np.mean(Zh**4) ** 0.25))
            self.hat["l3"].append(float(np.mean(np.abs(Zh) ** 3) ** (1 / 3)))
            self.hat["linf"].append(float(np.max(np.abs(Zh))))
            self.hat["grad"].append(g.norm(Zh, "H1_semi"))

    def array(self, key):
        return np.asarray(self.data[key], dtype=float)

    @classmethod
    def from_fields(cls, grid, eps, tau, Z_list, noise_list=None, Z0=None):
        """Post-hoc series from stored ``Z^1..Z^J`` and increments ``dW_1..dW_J``."""
        s = cls(grid, eps, tau, Z0)
        for i, Z in enumerate(Z_list):
            s.record(Z, None if noise_list is None else noise_list[i])
        return s

    def rows(self):
        keys = list(_SERIES_KEYS)
        return [{"j": i + 1, **{k: self.data[k][i] for k in keys}} for i in range(len(self))]


def stopping_index(series, eps, sigma0):
    """First ``j`` with cubic accumulator above ``eps**sigma0``, else ``J``."""
    acc = series.array("acc3") if isinstance(series, ErrorSeries) else np.asarray(series, dtype=float)
    J = acc.size
    hit = np.nonzero(acc > eps**sigma0)[0]
    return int(hit[0]) + 1 if hit.size else J


def remainder_tilde(series, cfg, J_eps=None, noise_norm2=None):
    """Remainder at the stopping index: cubic term at ``J_eps``, martingale max and noise sum."""
    if J_eps is None:
        J_eps = stopping_index(series, cfg.eps, cfg.sigma0)
    if J_eps == 0:
        return 0.0
    eps, tau, gam = cfg.eps, cfg.tau, cfg.gamma
    l3 = series.array("l3")[J_eps - 1]
    mart = np.abs(series.array("mart")[:J_eps])
    nn = series.array("noise_norm2") if noise_norm2 is None else np.asarray(noise_norm2, dtype=float)
    return tau / eps * l3**3 + eps**gam * float(np.max(mart)) + cfg.c_rem * eps ** (2 * gam) * float(np.sum(nn[:J_eps]))


@dataclass
class EventFlags:
    omega2: bool | None
    omega_w: bool | None
    omega_E: bool | None
    omega_inf: bool | None
    omega_kJ: bool | None
    values: dict = field(default_factory=dict)

    def as_dict(self):
        return {
            "omega2": self.omega2,
            "omega_w": self.omega_w,
            "omega_E": self.omega_E,
            "omega_inf": self.omega_inf,
            "omega_kJ": self.omega_kJ,
            **{f"value_{k}": v for k, v in self.values.items()},
        }


class MissingSeries(ValueError):
    pass


def _norm2(x):
    """Squared L2 norm of an increment, a field array, or an already squared norm."""
    if hasattr(x, "corrected_field"):
        x = x.corrected_field
    x = np.asarray(x, dtype=float)
    return float(np.mean(x * x)) if x.ndim else float(x)


def event_flags(series, noise_path, trajectory, cfg, partial=False) -> EventFlags:
    """Event-set indicators of one path.

    ``trajectory`` exposes a ``scalars`` mapping with ``E`` and ``linf`` (full
    scheme, steps 0..J) and optionally ``linf_lin`` (linear part).
    ``noise_path`` may be ``None`` (the series' own increment norms are used),
    a list of increments or an array of squared increment norms. Without an
    error series :class:`MissingSeries` is raised unless ``partial`` is set, in
    which case the flags that need it are ``None``.
    """
    if series is None and not partial:
        raise MissingSeries("event flags need the error series of a deterministic twin")
    sc = getattr(trajectory, "scalars", trajectory) or {}
    eps = cfg.eps
    vals = {}
    omega2 = None
    if series is not None:
        nn = None
        if noise_path is not None:
            nn = [_norm2(x) for x in noise_path]
        Je = stopping_index(series, eps, cfg.sigma0)
        R = remainder_tilde(series, cfg, Je, nn)
        vals.update(J_eps=Je, R_tilde=R)
        omega2 = bool(R <= cfg.c_omega2 * eps**cfg.kappa0)
    omega_w = None
    if sc.get("linf_lin") is not None and len(sc["linf_lin"]):
        m = float(np.max(sc["linf_lin"]))
        vals["max_linf_lin"] = m
        omega_w = bool(m <= cfg.c_w * eps ** (cfg.gamma - cfg.eta - 1))
    omega_E = omega_inf = omega_kJ = None
    if sc.get("E") is not None and len(sc["E"]):
        mE = float(np.max(sc["E"]))
        vals["max_E"] = mE
        omega_E = bool(mE <= cfg.c_energy * eps ** (-cfg.theta))
    if sc.get("linf") is not None and len(sc["linf"]) and omega_E is not None:
        linf = np.asarray(sc["linf"], dtype=float)
        m = float(np.max(linf[1:])) if linf.size > 1 else 0.0
        vals["max_linf"] = m
        bounded = m <= eps ** (-cfg.theta - 4)
        omega_inf = bool((not omega_E) or bounded)
        omega_kJ = bool(omega_inf and omega_E)
    return EventFlags(omega2, omega_w, omega_E, omega_inf, omega_kJ, vals)


# -- interfaces ---------------------------------------------------------------


@dataclass
class LevelSet:
    """Polyline pieces (d = 2), a triangle soup (d = 3) or a bare point cloud.

    ``cells`` holds vertex indices: pairs for segments, triples for triangles,
    ``None`` for a point cloud.
    """

    d: int
    vertices: np.ndarray
    cells: np.ndarray | None
    spacing: float

    @property
    def empty(self):
        return self.vertices.shape[0] == 0

    def points(self, density=None):
        """Vertices plus interior samples at most ``density`` apart."""
        h = self.spacing / 2 if density is None else density
        V = self.vertices
        if self.empty or self.cells is None or len(self.cells) == 0:
            return V
        C = np.asarray(self.cells)
        if C.shape[1] == 2:
            a, b = V[C[:, 0]], V[C[:, 1]]
            k = np.maximum(1, np.ceil(np.linalg.norm(b - a, axis=1) / h).astype(int))
            out = [V]
            for kk in np.unique(k):
                sel = k == kk
                t = (np.arange(1, kk) / kk)[None, :, None]
                out.append((a[sel, None, :] + t * (b[sel] - a[sel])[:, None, :]).reshape(-1, self.d))
            return np.concatenate(out)
        a, b, c = V[C[:, 0]], V[C[:, 1]], V[C[:, 2]]
        edge = np.max(
            np.stack([np.linalg.norm(b - a, axis=1), np.linalg.norm(c - b, axis=1), np.linalg.norm(a - c, axis=1)]),
            axis=0,
        )
        k = np.maximum(1, np.ceil(edge / h).astype(int))
        out = [V]
        for kk in np.unique(k):
            sel = k == kk
            i, j = np.meshgrid(np.arange(kk + 1), np.arange(kk + 1), indexing="ij")
            keep = i + j <= kk
            u, v = (i[keep] / kk)[None, :, None], (j[keep] / kk)[None, :, None]
            A, B, Cc = a[sel][:, None], b[sel][:, None], c[sel][:, None]
            out.append((A + u * (B - A) + v * (Cc - A)).reshape(-1, self.d))
        return np.concatenate(out)


def zero_level_set(X: Field) -> LevelSet:
    """Zero contour by marching squares (d = 2) or marching cubes (d = 3).

    Both come from scikit-image; edges are interpolated linearly. In 3-D the
    Lewiner case table fixes the ambiguous configurations.
    """
    g = X.grid
    v = X.values
    h = g.spacing
    if not (np.min(v) < 0 < np.max(v)):
        return LevelSet(g.d, np.zeros((0, g.d)), np.zeros((0, g.d), dtype=int), h)
    if g.d == 2:
        verts, segs, off = [], [], 0
        for c in measure.find_contours(v, 0.0):
            k = c.shape[0]
            verts.append((c + 0.5) * h)
            idx = np.arange(off, off + k)
            segs.append(np.column_stack([idx[:-1], idx[1:]]))
            off += k
        V = np.concatenate(verts) if verts else np.zeros((0, 2))
        S = np.concatenate(segs) if segs else np.zeros((0, 2), dtype=int)
        return LevelSet(2, V, S, h)
    verts, faces, _, _ = measure.marching_cubes(v, level=0.0, spacing=(h, h, h), method="lewiner")
    return LevelSet(3, verts + 0.5 * h, faces, h)


def sphere_level_set(center, radius, d=2, spacing=1e-3):
    """Dense point cloud on the circle / sphere, for reference distances."""
    c = np.asarray(center, dtype=float)
    if d == 2:
        k = max(8, int(math.ceil(2 * np.pi * radius / spacing)))
        t = np.linspace(0, 2 * np.pi, k, endpoint=False)
        P = c + radius * np.column_stack([np.cos(t), np.sin(t)])
    else:
        k = max(32, int(math.ceil(4 * np.pi * radius**2 / spacing**2)))
        i = np.arange(k) + 0.5
        phi = np.arccos(1 - 2 * i / k)
        th = np.pi * (1 + 5**0.5) * i
        P = c + radius * np.column_stack([np.cos(th) * np.sin(phi), np.sin(th) * np.sin(phi), np.cos(phi)])
    return LevelSet(d, P, None, spacing)


def hausdorff(a: LevelSet, b: LevelSet, density=None) -> float:
    """Symmetric Hausdorff distance of densely sampled level sets."""
    if a.empty or b.empty:
        raise EmptyLevelSet("Hausdorff distance needs two nonempty level sets")
    h = density if density is not None else min(a.spacing, b.spacing) / 2
    pa, pb = a.points(h), b.points(h)
    return float(max(directed_hausdorff(pa, pb)[0], directed_hausdorff(pb, pa)[0]))


def write_level_set_csv(path, ls: LevelSet, step, eps):
    header = f"# step={step} eps={eps!r}\n" + ",".join(f"x{i + 1}" for i in range(ls.d))
    np.savetxt(path, ls.vertices, delimiter=",", header=header, comments="", fmt="%.17g")

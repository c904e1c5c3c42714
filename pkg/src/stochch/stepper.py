"""Time steppers for the stochastic Cahn-Hilliard equation.

Every implicit step solves the strong form

    (I + eps tau lap^2) X - (tau/eps) lap f(X + shift) = prev + forcing

for ``X``. In the full scheme ``shift = 0`` and ``forcing`` is the scaled noise
increment; in the random-PDE half of the splitting ``shift`` is the current
linear part and ``forcing = 0``. The mean of ``X`` is fixed by the mean of
``prev``, so the solve lives on mean-zero corrections.

Applying ``(-lap)^{-1}`` to the mean-free residual turns it into the gradient of
a functional which is strictly convex for ``tau <= eps^3/2``. Newton's method on
that gradient has a symmetric Hessian

    H = (-lap)^{-1} + eps tau (-lap) + (tau/eps) P f'(X + shift) P

(``P`` removes the mean), so the inner solves use conjugate gradients with the
diagonal preconditioner ``lambda / (1 + eps tau lambda^2)``, the exact inverse
of the linear part. A non-positive curvature ``p.Hp`` means convexity has been
lost and is reported as :class:`ConvexityViolated`. All vectors are kept as
orthonormal cosine coefficients, where the grid L2 product is the plain dot
product.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import ConvexityViolated, NewtonDiverged
from .profiles import Sphere, default_center, tanh_profile
from .spectral import Field


def f_nonlin(u):
    """``f(u) = u^3 - u``, for a Field or array."""
    if isinstance(u, Field):
        return Field(u.grid, f_nonlin(u.values))
    u = np.asarray(u, dtype=float)
    return u * u * u - u


def f_prime(u):
    u = np.asarray(u, dtype=float)
    return 3.0 * u * u - 1.0


def F_potential(u):
    """``F(u) = (u^2 - 1)^2 / 4``, for a Field or array."""
    if isinstance(u, Field):
        return Field(u.grid, F_potential(u.values))
    u = np.asarray(u, dtype=float)
    return 0.25 * (u * u - 1.0) ** 2


def chemical_potential(X: Field, eps) -> Field:
    """``w = -eps lap X + f(X) / eps``."""
    g = X.grid
    return Field(g, -eps * g.laplacian(X.values) + f_nonlin(X.values) / eps)


# -- implicit solve -----------------------------------------------------------


@dataclass
class SolveStats:
    iterations: int = 0
    residual: float = 0.0
    trace: list = field(default_factory=list)
    linear_iterations: list = field(default_factory=list)
    min_curvature: float = float("inf")


@dataclass
class ImplicitProblem:
    """One implicit step; see the module docstring for the equation."""

    grid: object
    eps: float
    tau: float
    prev: np.ndarray
    forcing: np.ndarray | None = None
    shift: np.ndarray | None = None
    potential: str = "double_well"

    def __post_init__(self):
        g = self.grid
        lam = g.eigenvalues
        self.lam = lam
        self.inv_lam = g._inv_eigenvalues
        self.linear_symbol = 1.0 + self.eps * self.tau * lam * lam
        rhs = np.asarray(self.prev, dtype=float)
        if self.forcing is not None:
            rhs = rhs + self.forcing
        self.rhs_hat = g.forward(rhs)
        # (-lap)^{-1} + eps tau (-lap) restricted to mean-free modes, and its inverse
        self.h_lin = self.inv_lam + self.eps * self.tau * lam
        self.precond = np.zeros_like(lam)
        pos = lam > 0
        self.precond[pos] = lam[pos] / self.linear_symbol[pos]
        self.zero = (0,) * g.d
        self.nl_scale = self.tau / self.eps

    def _f(self, X):
        if self.potential == "none":
            return np.zeros_like(X)
        return f_nonlin(X if self.shift is None else X + self.shift)

    def _fp(self, X):
        if self.potential == "none":
            return np.zeros_like(X)
        return f_prime(X if self.shift is None else X + self.shift)

    def residual_hat(self, Xh):
        """Cosine coefficients of the strong residual."""
        X = self.grid.inverse(Xh)
        fh = self.grid.forward(self._f(X))
        return self.linear_symbol * Xh + self.nl_scale * self.lam * fh - self.rhs_hat

    def residual_norm(self, Rh):
        """H^-1 norm of the mean-free residual plus |mean residual|."""
        N = self.grid.size
        mf = float(np.sqrt(np.sum(Rh * Rh * self.inv_lam) / N))
        return mf + abs(float(Rh[self.zero])) / np.sqrt(N)

    def hessian(self, Xh):
        """Hessian action on mean-free coefficient arrays at ``Xh``."""
        g = self.grid
        a = self.nl_scale * self._fp(g.inverse(Xh))
        h_lin = self.h_lin
        zero = self.zero
        nonlinear = self.potential != "none"

        def apply(ph):
            out = h_lin * ph
            if nonlinear:
                out = out + g.forward(a * g.inverse(ph))
            out[zero] = 0.0
            return out

        return apply

    def linear_predictor(self):
        return self.rhs_hat / self.linear_symbol


def _pcg(apply_H, b, precond, tol, maxiter, stats):
    """Preconditioned CG for ``H x = b``; raises on non-positive curvature."""
    x = np.zeros_like(b)
    r = b.copy()
    z = precond * r
    p = z.copy()
    rz = float(np.vdot(r, z))
    b_norm = np.sqrt(rz)
    if b_norm == 0.0:
        return x, 0
    for it in range(1, maxiter + 1):
        Hp = apply_H(p)
        curv = float(np.vdot(p, Hp))
        pp = float(np.vdot(p, p))
        if pp > 0:
            stats.min_curvature = min(stats.min_curvature, curv / pp)
        if curv <= 0.0:
            raise ConvexityViolated(
                f"non-positive curvature {curv:.3e} in the inner solve", residual=float("nan"), trace=stats.trace
            )
        alpha = rz / curv
        x += alpha * p
        r -= alpha * Hp
        z = precond * r
        rz_new = float(np.vdot(r, z))
        if np.sqrt(max(rz_new, 0.0)) <= tol * b_norm:
            return x, it
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, maxiter


def solve_implicit(problem: ImplicitProblem, guess, cfg, max_halvings=30):
    """Damped Newton solve; returns ``(X values, SolveStats)``.

    ``guess`` is an array of nodal values or ``None`` for the configured warm or
    cold start. The mean of the iterate is reset to the mean of ``prev``.
    """
    g = problem.grid
    zero = problem.zero
    if guess is None:
        Xh = problem.linear_predictor() if cfg.warm_start else g.forward(problem.prev)
    else:
        Xh = g.forward(guess)
    Xh = np.array(Xh, copy=True)
    Xh[zero] = problem.rhs_hat[zero]
    stats = SolveStats()
    Rh = problem.residual_hat(Xh)
    res = problem.residual_norm(Rh)
    stats.trace.append(res)
    while res > cfg.newton_tol:
        if stats.iterations >= cfg.newton_max_iter:
            raise NewtonDiverged(
                f"Newton did not reach {cfg.newton_tol:g} in {cfg.newton_max_iter} iterations",
                residual=res,
                trace=stats.trace,
            )
        grad = Rh * problem.inv_lam
        H = problem.hessian(Xh)
        delta, lin_it = _pcg(H, -grad, problem.precond, cfg.linear_tol, cfg.linear_max_iter, stats)
        stats.linear_iterations.append(lin_it)
        step = 1.0
        for _ in range(max_halvings + 1):
            cand = Xh + step * delta
            Rc = problem.residual_hat(cand)
            rc = problem.residual_norm(Rc)
            if np.isfinite(rc) and rc < res:
                break
            step *= 0.5
        else:
            raise NewtonDiverged("line search failed to reduce the residual", residual=res, trace=stats.trace)
        Xh, Rh, res = cand, Rc, rc
        stats.iterations += 1
        stats.trace.append(res)
    stats.residual = res
    if stats.iterations == 0 and guess is not None:
        return np.array(guess, dtype=float), stats
    return g.inverse(Xh), stats


# -- schemes ------------------------------------------------------------------


@dataclass(frozen=True)
class StepperState:
    """State of one pipeline after step ``j``.

    ``X`` is the full-scheme iterate. Split pipelines also hold ``X_lin``
    (linear part) and ``X_rand`` (random-PDE part), with ``X = X_lin + X_rand``.
    """

    j: int
    X: Field
    w: Field | None = None
    X_lin: Field | None = None
    X_rand: Field | None = None
    stats: SolveStats | None = None

    @property
    def grid(self):
        return self.X.grid


def initial_state(X0: Field, split=False, eps=None):
    w = chemical_potential(X0, eps) if eps is not None else None
    if not split:
        return StepperState(0, X0, w)
    zero = Field(X0.grid, np.zeros(X0.grid.shape))
    return StepperState(0, X0, w, X_lin=zero, X_rand=X0)


def _implicit_step(state, forcing, cfg):
    g = state.grid
    prob = ImplicitProblem(g, cfg.eps, cfg.tau, state.X.values, forcing=forcing, potential=cfg.potential)
    try:
        X, stats = solve_implicit(prob, None, cfg)
    except NewtonDiverged as exc:
        exc.step = state.j + 1
        raise
    Xf = Field(g, X)
    return replace(state, j=state.j + 1, X=Xf, w=chemical_potential(Xf, cfg.eps), stats=stats)


def step_full(state: StepperState, inc, cfg) -> StepperState:
    """One step of the full stochastic scheme."""
    noise = inc.corrected_field
    state.grid.check_mean_zero(noise)
    return _implicit_step(state, cfg.noise_amplitude * noise, cfg)


def step_deterministic(state: StepperState, cfg) -> StepperState:
    """One step of the noise-free scheme."""
    return _implicit_step(state, None, cfg)


def linear_resolvent(grid, X_prev, noise, cfg):
    """``(I + eps tau lap^2)^{-1} (X_prev + eps^gamma noise)`` as nodal values."""
    sym = 1.0 + cfg.eps * cfg.tau * grid.eigenvalues**2
    rhs = grid.forward(X_prev)
    if noise is not None:
        rhs = rhs + cfg.noise_amplitude * grid.forward(noise)
    return grid.inverse(rhs / sym)


def step_linear(state: StepperState, inc, cfg) -> StepperState:
    """Advance the linear part; ``inc=None`` means a zero increment."""
    g = state.grid
    prev = state.X_lin.values if state.X_lin is not None else np.zeros(g.shape)
    noise = None if inc is None else inc.corrected_field
    Xl = Field(g, linear_resolvent(g, prev, noise, cfg))
    return replace(state, j=state.j + 1, X_lin=Xl, stats=None)


def step_random(state: StepperState, X_lin_j: Field, cfg) -> StepperState:
    """Advance the random-PDE part given the new linear part ``X_lin_j``."""
    g = state.grid
    prev = state.X_rand.values if state.X_rand is not None else state.X.values
    prob = ImplicitProblem(g, cfg.eps, cfg.tau, prev, shift=X_lin_j.values, potential=cfg.potential)
    try:
        Xr, stats = solve_implicit(prob, None, cfg)
    except NewtonDiverged as exc:
        exc.step = state.j + 1
        raise
    Xr = Field(g, Xr)
    return replace(state, j=state.j + 1, X=X_lin_j + Xr, X_lin=X_lin_j, X_rand=Xr, stats=stats, w=None)


def step_split(state: StepperState, inc, cfg) -> StepperState:
    """Linear step followed by the random-PDE step on the same increment."""
    g = state.grid
    Xl = Field(g, linear_resolvent(g, state.X_lin.values, inc.corrected_field, cfg))
    return step_random(state, Xl, cfg)


def convolution_direct(noise_path, cfg, j, grid=None) -> Field:
    """Direct sum ``eps^gamma sum_{i<j} R^{j-i} dW_{i+1}`` with ``R = (I + eps tau lap^2)^{-1}``."""
    if j > len(noise_path):
        raise ValueError(f"path has {len(noise_path)} increments, need {j}")
    g = grid if grid is not None else cfg.grid
    R = 1.0 / (1.0 + cfg.eps * cfg.tau * g.eigenvalues**2)
    acc = np.zeros(g.shape)
    for i in range(j):
        acc += R ** (j - i) * g.forward(noise_path[i].corrected_field)
    return Field(g, cfg.noise_amplitude * g.inverse(acc))


# -- convex functional of the random-PDE step -----------------------------------


def convex_functional(grid, eps, tau, v, prev, shift):
    """``1/2|v-prev|_{-1}^2 + tau/(4eps)|v+s|_4^4 + eps tau/2 |grad v|^2 - tau/(2eps)|v+s|^2``."""
    dv = v - prev
    dv = dv - np.mean(dv)
    vs = v + shift
    return (
        0.5 * grid.norm(dv, "Hminus1") ** 2
        + tau / (4 * eps) * float(np.mean(vs**4))
        + 0.5 * eps * tau * grid.norm(v, "H1_semi") ** 2
        - tau / (2 * eps) * float(np.mean(vs**2))
    )


def second_variation(grid, eps, tau, v_shifted, psi):
    """``|psi|_{-1}^2 + eps tau |grad psi|^2 + 3tau/eps ((v+s)^2, psi^2) - tau/eps |psi|^2``."""
    return (
        grid.norm(psi, "Hminus1") ** 2
        + eps * tau * grid.norm(psi, "H1_semi") ** 2
        + 3 * tau / eps * float(np.mean(v_shifted**2 * psi**2))
        - tau / eps * float(np.mean(psi**2))
    )


def second_variation_bound(grid, eps, tau, psi):
    """Coercivity floor ``1/2|psi|_{-1}^2 + tau (eps - tau/(2 eps^2)) |grad psi|^2``."""
    return 0.5 * grid.norm(psi, "Hminus1") ** 2 + tau * (eps - tau / (2 * eps**2)) * grid.norm(psi, "H1_semi") ** 2


# -- initial data -------------------------------------------------------------


def random_meanzero(grid, seed=0, amplitude=1.0, modes=8):
    """Smooth random mean-zero field from the lowest ``modes`` cosines per axis."""
    rng = np.random.default_rng(seed)
    c = np.zeros(grid.shape)
    k = min(modes, grid.n)
    sl = (slice(0, k),) * grid.d
    c[sl] = rng.standard_normal((k,) * grid.d)
    c[(0,) * grid.d] = 0.0
    v = grid.inverse(c)
    v *= amplitude / max(np.max(np.abs(v)), 1e-300)
    return Field(grid, v - np.mean(v))


def initial_field(cfg, grid=None) -> Field:
    g = grid if grid is not None else cfg.grid
    kind = cfg.init_kind
    if kind == "constant":
        return Field(g, np.full(g.shape, float(cfg.init_value)))
    if kind == "cosine":
        return Field(g, cfg.init_value + cfg.init_amplitude * np.cos(np.pi * cfg.init_mode * g.mesh[0]))
    if kind == "random":
        v = random_meanzero(g, cfg.init_seed, cfg.init_amplitude)
        return Field(g, v.values + cfg.init_value)
    center = cfg.init_center or default_center(g.d)
    return tanh_profile(g, Sphere(tuple(center), cfg.init_radius), cfg.eps)

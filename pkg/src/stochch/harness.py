"""Trajectories, ensembles and the parameter studies built on them."""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from .config import SolverConfig, steps_for
from .diagnostics import (
    ErrorSeries,
    energy,
    event_flags,
    hausdorff,
    sphere_level_set,
    zero_level_set,
)
from .exceptions import ConfigError, EmptyLevelSet, NewtonDiverged
from .noise import (
    NoiseMesh,
    NoisePath,
    attach_scaling_fits,
    expected_moments,
    moment_stats_from_draws,
    rng_stream,
    sample_increment,
)
from .spectral import Field
from .stats import estimate, fit_power_law
from .stepper import (
    StepperState,
    initial_field,
    initial_state,
    step_deterministic,
    step_full,
    step_linear,
    step_split,
)

CHECKPOINT_VERSION = 1


@dataclass
class RunOptions:
    track_split: bool = False
    track_deterministic_twin: bool = False
    snapshot_steps: tuple = ()
    noise_path: NoisePath | None = None
    zero_noise: bool = False
    linear_only: bool = False
    keep_fields: bool = False
    checkpoint_path: str | None = None
    checkpoint_every: int = 0
    resume: bool = False
    stop_after: int | None = None


@dataclass
class TrajectoryRecord:
    """Per-step scalars, optional snapshots and event flags of one path."""

    config: SolverConfig
    seed: int
    path: int
    energies: list = field(default_factory=list)
    series: ErrorSeries | None = None
    scalars: dict = field(default_factory=dict)
    snapshots: dict = field(default_factory=dict)
    flags: object = None
    stats: dict = field(default_factory=dict)
    fields: dict = field(default_factory=dict)
    final: np.ndarray | None = None
    complete: bool = True

    @property
    def steps(self):
        return len(self.scalars.get("t", [])) - 1

    def rows(self):
        """Per-step diagnostics rows (``j = 0..J``)."""
        sc = self.scalars
        series = self.series
        out = []
        for j in range(len(sc["t"])):
            row = {"j": j}
            for k, v in sc.items():
                row[k] = v[j]
            if series is not None:
                for k in ("hm1", "l4", "l3", "linf", "grad", "acc3", "acc4", "accgrad", "mart"):
                    row[f"Z_{k}"] = series.data[k][j - 1] if j >= 1 else 0.0
            out.append(row)
        if self.flags is not None and out:
            for k, v in self.flags.as_dict().items():
                out[-1][f"flag_{k}"] = v
        return out

    def summary(self):
        """Scalar summary used for ensemble aggregation."""
        sc = self.scalars
        out = {}
        if sc.get("E"):
            out["E_final"] = sc["E"][-1]
            out["E_max"] = max(sc["E"])
        if sc.get("mass"):
            m = np.asarray(sc["mass"])
            out["mass_drift_max"] = float(np.max(np.abs(m - m[0])))
        if sc.get("linf"):
            out["linf_max"] = max(sc["linf"])
        if sc.get("linf_lin"):
            out["linf_lin_max"] = max(sc["linf_lin"])
            out["lin_norm2_final"] = sc["lin_norm2"][-1]
        if sc.get("split_defect"):
            out["split_defect_max"] = max(sc["split_defect"])
        if sc.get("newton_iters"):
            out["newton_iters_max"] = max(sc["newton_iters"])
        s = self.series
        if s is not None and len(s):
            out["Z_hm1_max"] = float(np.max(s.array("hm1")))
            out["Z_hm1_sq_max"] = float(np.max(s.array("hm1") ** 2))
            out["Z_linf_max"] = float(np.max(s.array("linf")))
            out["acc3_final"] = s.data["acc3"][-1]
            out["mart_absmax"] = float(np.max(np.abs(s.array("mart"))))
        if self.flags is not None:
            for k in ("J_eps", "R_tilde"):
                if k in self.flags.values:
                    out[k] = float(self.flags.values[k])
        return out


def _noise_source(cfg, seed, path, options):
    mesh = cfg.noise_mesh if options.noise_path is None else options.noise_path.mesh
    grid = cfg.grid

    def increment(j):
        if options.zero_noise:
            return sample_increment(mesh, grid, cfg.tau, (seed, path, j), draws=np.zeros(mesh.shape))
        if options.noise_path is not None:
            return options.noise_path.increment(j, grid, cfg.noise_transfer)
        return sample_increment(mesh, grid, cfg.tau, (seed, path, j), transfer=cfg.noise_transfer)

    return increment


class _Run:
    """Mutable bookkeeping of one trajectory; checkpointable."""

    SCALARS = ("t", "E", "mass", "linf", "newton_iters", "residual")

    def __init__(self, cfg, seed, path, options, X0):
        self.cfg, self.seed, self.path, self.opt = cfg, seed, path, options
        g = cfg.grid
        lin = options.linear_only
        self.full = None if lin else initial_state(X0, eps=cfg.eps)
        self.twin = initial_state(X0) if options.track_deterministic_twin and not lin else None
        if options.track_split or lin:
            zero = Field(g, np.zeros(g.shape))
            self.split = StepperState(0, X0, X_lin=zero, X_rand=X0)
        else:
            self.split = None
        self.series = ErrorSeries(g, cfg.eps, cfg.tau) if self.twin is not None else None
        self.scalars = {}
        self.energies = []
        self.snapshots = {}
        self.kept = {"Z": [], "noise": []} if options.keep_fields else {}
        self.j = 0
        self._observe(0, None)

    def _push(self, key, v):
        self.scalars.setdefault(key, []).append(float(v))

    def _observe(self, j, stats):
        cfg, g = self.cfg, self.cfg.grid
        self._push("t", j * cfg.tau)
        if self.full is not None:
            X = self.full.X.values
            rep = energy(self.full.X, cfg.eps, j)
            self.energies.append(rep)
            self._push("E", rep.E)
            self._push("mass", rep.mass)
            self._push("linf", np.max(np.abs(X)))
            self._push("newton_iters", 0 if stats is None else stats.iterations)
            self._push("residual", 0.0 if stats is None else stats.residual)
        if self.twin is not None:
            self._push("E_det", energy(self.twin.X, cfg.eps).E)
        if self.split is not None:
            Xl = self.split.X_lin.values
            self._push("linf_lin", np.max(np.abs(Xl)))
            self._push("lin_norm2", np.mean(Xl * Xl))
            if self.full is not None:
                diff = self.full.X.values - (Xl + self.split.X_rand.values)
                self._push("split_defect", g.norm(diff, "L2"))
        if j in self.opt.snapshot_steps:
            snap = {}
            if self.full is not None:
                snap["X"] = self.full.X.values.copy()
            if self.split is not None:
                snap["X_lin"] = self.split.X_lin.values.copy()
                snap["X_rand"] = self.split.X_rand.values.copy()
            if self.twin is not None:
                snap["X_det"] = self.twin.X.values.copy()
            self.snapshots[j] = snap

    def advance(self, inc):
        cfg = self.cfg
        j = self.j + 1
        stats = None
        if self.full is not None:
            self.full = step_full(self.full, inc, cfg)
            stats = self.full.stats
        if self.twin is not None:
            self.twin = step_deterministic(self.twin, cfg)
        if self.split is not None:
            if self.opt.linear_only:
                self.split = step_linear(self.split, inc, cfg)
            else:
                self.split = step_split(self.split, inc, cfg)
        if self.series is not None:
            Z = self.full.X.values - self.twin.X.values
            Zh = None if self.split is None else self.split.X_rand.values - self.twin.X.values
            self.series.record(Z, inc.corrected_field, Zh)
            if self.opt.keep_fields:
                self.kept["Z"].append(Z)
                self.kept["noise"].append(inc.corrected_field.copy())
        self.j = j
        self._observe(j, stats)

    # -- checkpointing ------------------------------------------------------

    def save(self, path):
        arrays = {}
        if self.full is not None:
            arrays["X"] = self.full.X.values
        if self.twin is not None:
            arrays["X_det"] = self.twin.X.values
        if self.split is not None:
            arrays["X_lin"] = self.split.X_lin.values
            arrays["X_rand"] = self.split.X_rand.values
        for j, snap in self.snapshots.items():
            for k, v in snap.items():
                arrays[f"snap_{j}_{k}"] = v
        meta = {
            "version": CHECKPOINT_VERSION,
            "config": self.cfg.canonical(),
            "j": self.j,
            "rng_key": [self.seed, self.path, self.j + 1],
            "scalars": self.scalars,
            "energies": [e.as_dict() for e in self.energies],
        }
        if self.series is not None:
            arrays["Z_prev"] = self.series._prev
            meta["series"] = {"data": self.series.data, "hat": self.series.hat, "m": self.series._m}
        tmp = Path(str(path) + ".tmp.npz")
        np.savez(tmp, meta=np.array(json.dumps(meta)), **arrays)
        tmp.replace(path)

    def load(self, path):
        from .diagnostics import EnergyReport

        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            arrays = {k: z[k].copy() for k in z.files if k != "meta"}
        if meta["config"] != self.cfg.canonical():
            raise ConfigError("checkpoint was written for a different configuration")
        if meta["rng_key"][:2] != [self.seed, self.path]:
            raise ConfigError("checkpoint belongs to a different (seed, path)")
        g = self.cfg.grid
        j = meta["j"]
        if self.full is not None:
            X = Field(g, arrays["X"])
            from .stepper import chemical_potential

            self.full = StepperState(j, X, chemical_potential(X, self.cfg.eps))
        if self.twin is not None:
            self.twin = StepperState(j, Field(g, arrays["X_det"]))
        if self.split is not None:
            Xl, Xr = Field(g, arrays["X_lin"]), Field(g, arrays["X_rand"])
            self.split = StepperState(j, Xl + Xr, X_lin=Xl, X_rand=Xr)
        self.scalars = meta["scalars"]
        self.energies = [EnergyReport(**e) for e in meta["energies"]]
        self.snapshots = {}
        for k, v in arrays.items():
            if k.startswith("snap_"):
                _, step, name = k.split("_", 2)
                self.snapshots.setdefault(int(step), {})[name] = v
        if self.series is not None:
            s = meta["series"]
            self.series.data = s["data"]
            self.series.hat = s["hat"]
            self.series._m = s["m"]
            self.series._prev = arrays["Z_prev"]
        self.j = j


def run_trajectory(cfg: SolverConfig, seed=None, options: RunOptions | None = None, path=0, X0=None):
    """Advance one path for ``J = T / tau`` steps and collect its diagnostics.

    The full scheme, the deterministic twin and the split pipeline all consume
    the same increments. ``NewtonDiverged`` propagates with its ``step`` set.
    """
    opt = options or RunOptions()
    seed = cfg.seed if seed is None else int(seed)
    X0 = initial_field(cfg) if X0 is None else X0
    t0 = time.perf_counter()
    run = _Run(cfg, seed, path, opt, X0)
    if opt.resume and opt.checkpoint_path and Path(opt.checkpoint_path).exists():
        run.load(opt.checkpoint_path)
    noise = _noise_source(cfg, seed, path, opt)
    J = cfg.steps
    last = J if opt.stop_after is None else min(J, opt.stop_after)
    while run.j < last:
        run.advance(noise(run.j + 1))
        if opt.checkpoint_path and opt.checkpoint_every and run.j % opt.checkpoint_every == 0:
            run.save(opt.checkpoint_path)
    if opt.checkpoint_path and opt.stop_after is not None:
        run.save(opt.checkpoint_path)
    rec = TrajectoryRecord(cfg, seed, path, run.energies, run.series, run.scalars, run.snapshots)
    rec.complete = run.j == J
    if run.full is not None:
        rec.final = run.full.X.values.copy()
    elif run.split is not None:
        rec.final = run.split.X_lin.values.copy()
    if opt.keep_fields:
        rec.fields = run.kept
    if rec.complete:
        need_series = run.series is not None
        if need_series or "E" in run.scalars or "linf_lin" in run.scalars:
            rec.flags = event_flags(run.series, None, rec, cfg, partial=True)
    rec.stats = {
        "wall_seconds": time.perf_counter() - t0,
        "newton_iterations": int(sum(run.scalars.get("newton_iters", []))),
    }
    return rec


# -- ensembles ----------------------------------------------------------------


@dataclass
class EnsembleStats:
    M: int
    n_failed: int
    failures: list
    mean: dict
    var: dict
    stderr: dict
    max: dict
    probabilities: dict
    fits: dict = field(default_factory=dict)
    records: list = field(default_factory=list, repr=False)

    def as_dict(self):
        return {
            "M": self.M,
            "n_failed": self.n_failed,
            "failures": self.failures,
            "mean": self.mean,
            "var": self.var,
            "stderr": self.stderr,
            "max": self.max,
            "probabilities": self.probabilities,
            "fits": {k: (v.as_dict() if hasattr(v, "as_dict") else v) for k, v in self.fits.items()},
        }


def _path_job(cfg, seed, path, options, keep_record):
    try:
        rec = run_trajectory(cfg, seed, options, path=path)
    except NewtonDiverged as exc:
        return {"path": path, "failed": True, "step": exc.step, "residual": exc.residual, "error": str(exc)}
    out = {"path": path, "failed": False, "summary": rec.summary()}
    out["flags"] = {} if rec.flags is None else {
        k: v for k, v in rec.flags.as_dict().items() if isinstance(v, bool) or v is None
    }
    if keep_record:
        out["record"] = rec
    return out


def _fsum_stats(values):
    x = [float(v) for v in values]
    n = len(x)
    mean = math.fsum(x) / n
    var = math.fsum((v - mean) ** 2 for v in x) / (n - 1) if n > 1 else 0.0
    return mean, var, math.sqrt(var / n), max(x)


def aggregate(results, M):
    """Deterministic reduction over per-path results sorted by path id."""
    results = sorted(results, key=lambda r: r["path"])
    ok = [r for r in results if not r["failed"]]
    failures = [{k: r[k] for k in ("path", "step", "residual", "error")} for r in results if r["failed"]]
    keys = sorted({k for r in ok for k in r["summary"]})
    mean, var, se, mx = {}, {}, {}, {}
    for k in keys:
        vals = [r["summary"][k] for r in ok if k in r["summary"]]
        if vals:
            mean[k], var[k], se[k], mx[k] = _fsum_stats(vals)
    probs = {}
    for k in sorted({k for r in ok for k in r["flags"]}):
        vals = [r["flags"][k] for r in ok if r["flags"].get(k) is not None]
        if vals:
            probs[k] = sum(bool(v) for v in vals) / len(vals)
    return EnsembleStats(M, len(failures), failures, mean, var, se, mx, probs, records=[r.get("record") for r in ok])


def run_ensemble(
    cfg,
    M,
    base_seed=0,
    n_jobs=1,
    options=None,
    on_failure="record",
    keep_records=False,
    kind="trajectory",
):
    """``M`` independent paths keyed by ``(base_seed, path id)``.

    ``kind="noise"`` runs a noise-only ensemble: one increment per path,
    reduced to the noise moment estimators. Failed paths are recorded and left
    out of the means (``on_failure="raise"`` re-raises instead).
    """
    if M < 1:
        raise ValueError("an ensemble needs at least one path")
    if kind == "noise":
        return noise_ensemble(cfg, M, base_seed, n_jobs)
    opt = options or RunOptions()
    jobs = (delayed(_path_job)(cfg, base_seed, p, opt, keep_records) for p in range(M))
    results = Parallel(n_jobs=n_jobs)(jobs) if n_jobs != 1 else [_path_job(cfg, base_seed, p, opt, keep_records) for p in range(M)]
    if on_failure == "raise":
        for r in results:
            if r["failed"]:
                raise NewtonDiverged(r["error"], residual=r["residual"], step=r["step"])
    return aggregate(results, M)


def _draw_block(mesh, tau, seed, paths, step):
    out = np.empty((len(paths),) + mesh.shape)
    for i, p in enumerate(paths):
        out[i] = rng_stream(seed, p, step).standard_normal(mesh.num_nodes).reshape(mesh.shape)
    return out * math.sqrt(tau)


def noise_ensemble(cfg, M, base_seed=0, n_jobs=1, step=1, mesh=None, tau=None):
    """Moment report for the first increment of ``M`` paths."""
    mesh = cfg.noise_mesh if mesh is None else mesh
    tau = cfg.tau if tau is None else tau
    blocks = np.array_split(np.arange(M), max(1, min(M, 8 * max(1, abs(n_jobs)))))
    if n_jobs == 1:
        parts = [_draw_block(mesh, tau, base_seed, b, step) for b in blocks]
    else:
        parts = Parallel(n_jobs=n_jobs)(delayed(_draw_block)(mesh, tau, base_seed, b, step) for b in blocks)
    rep = moment_stats_from_draws(mesh, tau, np.concatenate(parts))
    rep.fits["expected"] = _Expected(expected_moments(mesh, tau))
    return rep


@dataclass
class _Expected:
    values: dict

    def as_dict(self):
        return dict(self.values)


def noise_moment_study(d, h_list, tau_list, M, base_seed=0, n_jobs=1):
    """Moment reports over an ``(h, tau)`` sweep with the power-law fits attached."""
    cfg = SolverConfig(eps=0.5, d=d, n=8)
    reports = []
    for h in h_list:
        m = int(round(1.0 / h)) + 1
        for tau in tau_list:
            reports.append(noise_ensemble(cfg, M, base_seed, n_jobs, mesh=NoiseMesh(d, m), tau=tau))
    attach_scaling_fits(reports)
    return reports


# -- convergence in tau ---------------------------------------------------------


@dataclass
class OrderReport:
    taus: list
    errors: list
    order: float | None
    fit: object
    reference: str
    config: dict

    def as_dict(self):
        return {
            "taus": self.taus,
            "errors": self.errors,
            "order": self.order,
            "fit": None if self.fit is None else self.fit.as_dict(),
            "reference": self.reference,
            "config": self.config,
        }


def _deterministic_final(cfg, X0):
    st = initial_state(X0)
    for _ in range(cfg.steps):
        st = step_deterministic(st, cfg)
    return st.X.values


def exact_linear_solution(cfg, X0):
    """``exp(-eps T lap^2) X0``: exact time evolution when ``f = 0``."""
    g = cfg.grid
    return g.apply_multiplier(X0.values, np.exp(-cfg.eps * cfg.T * g.eigenvalues**2))


def convergence_study_tau(cfg, halvings, reference="self"):
    """H^-1 errors at ``T`` for ``tau, tau/2, ..., tau/2^halvings``.

    The reference is the run at ``tau / 2^(halvings+2)`` (``"self"``), the exact
    linear evolution (``"exact_linear"``, only with ``potential="none"``) or an
    explicit array.
    """
    if halvings < 1:
        raise ConfigError("a convergence study needs at least one halving (two points to fit an order)")
    if cfg.steps < 1:
        raise ConfigError("a convergence study needs T > 0")
    X0 = initial_field(cfg)
    J = cfg.steps

    def run(k):
        c = cfg.replace(tau=cfg.tau / 2**k, tau_rule=None)
        if c.steps != J * 2**k:
            raise ConfigError("halved steps do not divide T")
        return _deterministic_final(c, X0)

    if isinstance(reference, np.ndarray):
        ref, label = reference, "external"
    elif reference == "exact_linear":
        if cfg.potential != "none":
            raise ConfigError("the exact linear reference needs potential='none'")
        ref, label = exact_linear_solution(cfg, X0), "exact_linear"
    else:
        ref, label = run(halvings + 2), f"tau/{2 ** (halvings + 2)}"
    g = cfg.grid
    taus, errs = [], []
    for k in range(halvings + 1):
        diff = run(k) - ref
        diff -= np.mean(diff)
        taus.append(cfg.tau / 2**k)
        errs.append(g.norm(diff, "Hminus1"))
    fit = order = None
    if all(e > 0 for e in errs):
        fit = fit_power_law(taus, errs)
        order = fit.slope
    return OrderReport(taus, errs, order, fit, label, cfg.to_dict())


# -- sharp-interface limit ------------------------------------------------------


@dataclass(frozen=True)
class CompactSets:
    """Inner disk ``r <= r0 - margin`` and outer region ``r >= r0 + margin``."""

    radius: float = 0.25
    margin: float = 0.125
    center: tuple = ()

    def masks(self, grid):
        c = self.center or (0.5,) * grid.d
        r = np.sqrt(sum((x - ci) ** 2 for x, ci in zip(grid.mesh, c)))
        return r <= self.radius - self.margin, r >= self.radius + self.margin

    def validate(self, grid, eps):
        """List of problems; empty when both sets are usable at this ``eps``."""
        issues = []
        if self.margin <= 0:
            issues.append("margin must be positive")
        elif self.margin <= eps:
            issues.append(f"margin {self.margin} lies inside the interface band of width eps = {eps}")
        inner, outer = self.masks(grid)
        if not inner.any():
            issues.append("inner set is empty on this grid")
        if not outer.any():
            issues.append("outer set is empty on this grid")
        return issues


def _limit_path(cfg, seed, path, sets, sample_steps, zero_noise):
    opt = RunOptions(snapshot_steps=tuple(sample_steps), zero_noise=zero_noise)
    try:
        rec = run_trajectory(cfg, seed, opt, path=path)
    except NewtonDiverged as exc:
        return {"path": path, "failed": True, "step": exc.step, "residual": exc.residual, "error": str(exc)}
    g = cfg.grid
    inner, outer = sets.masks(g)
    dev = 0.0
    for j in sample_steps:
        X = rec.snapshots[j]["X"]
        dev = max(dev, float(np.max(np.abs(X[inner] + 1.0))), float(np.max(np.abs(X[outer] - 1.0))))
    XT = Field(g, rec.snapshots[cfg.steps]["X"])
    c = sets.center or (0.5,) * g.d
    try:
        hd = hausdorff(zero_level_set(XT), sphere_level_set(c, sets.radius, g.d, g.spacing / 2))
    except EmptyLevelSet:
        hd = float("inf")
    summary = {"bulk_deviation": dev, "hausdorff": hd, "E_final": rec.scalars["E"][-1]}
    return {"path": path, "failed": False, "summary": summary, "flags": {}}


def _trend(values, kind="nonincreasing"):
    if len(values) < 2:
        return "insufficient points"
    v = list(values)
    if kind == "nonincreasing":
        return all(b <= a for a, b in zip(v, v[1:]))
    return all(b >= a for a, b in zip(v, v[1:]))


@dataclass
class LimitReport:
    eps: list
    per_eps: list
    trends: dict
    config: dict

    def as_dict(self):
        return {"eps": self.eps, "per_eps": self.per_eps, "trends": self.trends, "config": self.config}


def limit_study_epsilon(
    template,
    eps_list,
    sets=None,
    M=16,
    base_seed=0,
    tau_cap=None,
    n_samples=4,
    zero_noise=False,
    n_jobs=1,
):
    """Bulk deviation on compact sets and interface distance along decreasing ``eps``.

    Per ``eps`` the step is ``tau = min(eps^3/2, tau_cap)`` shrunk to divide ``T``,
    and the noise mesh follows ``h = eps**eta``. Deviations are maxima over the
    sets at ``n_samples`` equispaced steps ending at ``T``; the Hausdorff
    distance is taken at ``T``.
    """
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ConfigError("eps list must be strictly decreasing")
    if template.T <= 0:
        raise ConfigError("limit study needs T > 0")
    sets = sets or CompactSets(radius=template.init_radius, center=template.init_center)
    per = []
    for eps in eps_list:
        tmax = 0.5 * eps**3 if tau_cap is None else min(0.5 * eps**3, tau_cap)
        tau, J = steps_for(template.T, tmax)
        cfg = template.replace(eps=eps, tau=tau, tau_rule=None)
        issues = sets.validate(cfg.grid, eps)
        entry = {"eps": eps, "tau": tau, "steps": J, "h": cfg.noise_mesh.h, "valid": not issues, "issues": issues}
        if not issues:
            samples = sorted({max(1, round(J * (i + 1) / n_samples)) for i in range(n_samples)})
            jobs = [(cfg, base_seed, p, sets, samples, zero_noise) for p in range(M)]
            if n_jobs == 1:
                res = [_limit_path(*a) for a in jobs]
            else:
                res = Parallel(n_jobs=n_jobs)(delayed(_limit_path)(*a) for a in jobs)
            st = aggregate(res, M)
            entry.update(
                n_failed=st.n_failed,
                bulk_deviation=st.mean.get("bulk_deviation"),
                bulk_deviation_stderr=st.stderr.get("bulk_deviation"),
                hausdorff=st.mean.get("hausdorff"),
                hausdorff_max=st.max.get("hausdorff"),
                hausdorff_over_eps=None if "hausdorff" not in st.max else st.max["hausdorff"] / eps,
                per_path=[r["summary"] for r in sorted(res, key=lambda r: r["path"]) if not r["failed"]],
            )
        per.append(entry)
    valid = [e for e in per if e["valid"] and e.get("bulk_deviation") is not None]
    trends = {
        "bulk_deviation_nonincreasing": _trend([e["bulk_deviation"] for e in valid]),
        "hausdorff_over_eps_nonincreasing": _trend([e["hausdorff_over_eps"] for e in valid]),
    }
    return LimitReport(eps_list, per, trends, template.to_dict())


# -- noise regularity ---------------------------------------------------------


@dataclass
class ScalingReport:
    table: list
    fits: dict
    config: dict

    def as_dict(self):
        return {
            "table": self.table,
            "fits": {k: v.as_dict() for k, v in self.fits.items()},
            "config": self.config,
        }


def _linear_norms(cfg, seed, path, alphas, zero_noise=False):
    opt = RunOptions(linear_only=True, zero_noise=zero_noise)
    rec = run_trajectory(cfg, seed, opt, path=path, X0=Field(cfg.grid, np.zeros(cfg.grid.shape)))
    g = cfg.grid
    X = rec.final
    return [g.norm(X, "L2") ** 2 if a == 0 else g.norm(X, "Halpha", alpha=a) ** 2 for a in alphas]


def _linear_ensemble(cfg, M, base_seed, alphas, n_jobs, zero_noise=False):
    if n_jobs == 1:
        rows = [_linear_norms(cfg, base_seed, p, alphas, zero_noise) for p in range(M)]
    else:
        rows = Parallel(n_jobs=n_jobs)(
            delayed(_linear_norms)(cfg, base_seed, p, alphas, zero_noise) for p in range(M)
        )
    rows = np.asarray(rows)
    return [estimate(rows[:, i]) for i in range(len(alphas))]


def regularity_study_noise(
    template, h_list, alpha_list=(0.0,), M=50, base_seed=0, eps_list=(), gamma_list=(), zero_noise=False, n_jobs=1
):
    """Mean ``||X_lin^J||_{H^alpha}^2`` of the linear scheme over sweeps in h, eps and gamma.

    Exponents are fitted on log-log scales and reported with 95% intervals; the
    eps sweep keeps ``tau`` and the noise mesh of the template.
    """
    alphas = [float(a) for a in alpha_list]
    table, fits = [], {}

    def add(kind, value, cfg):
        ests = _linear_ensemble(cfg, M, base_seed, alphas, n_jobs, zero_noise)
        for a, e in zip(alphas, ests):
            table.append({"sweep": kind, "value": value, "alpha": a, "mean": e.mean, "stderr": e.stderr, "M": e.n})

    for h in h_list:
        add("h", float(h), template.replace(noise_m=int(round(1.0 / h)) + 1))
    for eps in eps_list:
        add("eps", float(eps), template.replace(eps=float(eps), allow_nonconvex=True))
    for gam in gamma_list:
        add("amplitude", template.eps**gam, template.replace(gamma=float(gam)))
    for kind in ("h", "eps", "amplitude"):
        for a in alphas:
            pts = [(r["value"], r["mean"]) for r in table if r["sweep"] == kind and r["alpha"] == a]
            if len(pts) >= 2 and all(m > 0 for _, m in pts):
                x, y = zip(*pts)
                fits[f"{kind}_alpha{a:g}"] = fit_power_law(x, y)
    return ScalingReport(table, fits, template.to_dict())


# -- event probabilities --------------------------------------------------------


def event_study(template, eps_list, M=200, base_seed=0, flags=("omega_w",), T=None, knob_values=(), n_jobs=1):
    """Empirical event probabilities per ``eps`` with their monotone trend.

    When only Omega_W is requested just the linear scheme is run. ``knob_values``
    additionally reports ``P[Omega_W]`` as a function of its threshold constant.
    """
    T = template.T if T is None else T
    linear = set(flags) <= {"omega_w"}
    per = []
    for eps in eps_list:
        tau, J = steps_for(T, 0.5 * eps**3)
        cfg = template.replace(eps=float(eps), tau=tau, T=T, tau_rule=None)
        opt = RunOptions(linear_only=True) if linear else RunOptions(track_split=True, track_deterministic_twin=True)
        res = []
        for p in range(M):
            r = _path_job(cfg, base_seed, p, opt, True)
            res.append(r)
        st = aggregate(res, M)
        entry = {"eps": float(eps), "tau": tau, "steps": J, "probabilities": {k: st.probabilities.get(k) for k in flags}}
        if knob_values and linear:
            maxes = np.array([r["record"].scalars["linf_lin"] for r in res if not r["failed"]], dtype=object)
            thr = float(eps) ** (cfg.gamma - cfg.eta - 1)
            mx = np.array([max(m) for m in maxes])
            entry["omega_w_vs_knob"] = {f"{c:g}": float(np.mean(mx <= c * thr)) for c in knob_values}
        per.append(entry)
    trends = {k: _trend([e["probabilities"][k] for e in per], "nondecreasing") for k in flags}
    return {"eps": [float(e) for e in eps_list], "per_eps": per, "trends": trends, "config": template.to_dict()}


# -- output -------------------------------------------------------------------


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    if hasattr(x, "as_dict"):
        return _jsonable(x.as_dict())
    return x


def write_json(path, obj):
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def write_csv(path, rows):
    rows = list(rows)
    keys = []
    for r in rows:
        for k in r:
            if k not in keys:
                keys.append(k)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for r in rows:
            w.writerow({k: _jsonable(r.get(k, "")) for k in keys})

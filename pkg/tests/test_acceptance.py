"""Acceptance criteria 1-10; each test prints one PASS/FAIL line."""

import time

import numpy as np
import pytest

from stochch.config import SolverConfig
from stochch.harness import (
    RunOptions,
    convergence_study_tau,
    event_study,
    limit_study_epsilon,
    noise_moment_study,
    run_trajectory,
)
from stochch.noise import NoisePath, read_noise_path, write_noise_path
from stochch.spectral import Field, make_grid, norm
from stochch.stepper import (
    ImplicitProblem,
    convolution_direct,
    f_nonlin,
    initial_field,
    initial_state,
    random_meanzero,
    second_variation,
    second_variation_bound,
    solve_implicit,
    step_linear,
)
from stochch.stats import fit_power_law

from oracles import expected_corrected_norm_sq


@pytest.fixture
def report(capsys):
    def emit(k, ok, detail, elapsed, budget):
        ok = bool(ok) and elapsed < budget
        with capsys.disabled():
            print(f"\nCRITERION {k}: {'PASS' if ok else 'FAIL'} ({detail}; {elapsed:.1f}s of {budget:g}s)")
        return ok

    return emit


def test_criterion_1_mass_conservation(report):
    t0 = time.perf_counter()
    cfg = SolverConfig(eps=0.1, gamma=3.0, n=64, T=200 * 0.5 * 0.1**3)
    assert cfg.steps == 200
    drift = 0.0
    for p in range(8):
        m = np.asarray(run_trajectory(cfg, 0, path=p).scalars["mass"])
        drift = max(drift, float(np.max(np.abs(m - m[0]))))
    assert report(1, drift <= 1e-10, f"max mass drift {drift:.2e} over 8 paths x 200 steps", time.perf_counter() - t0, 60)


def test_criterion_2_energy_stability(report):
    t0 = time.perf_counter()
    cfg = SolverConfig(eps=0.1, n=64, T=200 * 0.5 * 0.1**3)
    E = np.asarray(run_trajectory(cfg, 0, RunOptions(zero_noise=True)).scalars["E"])
    rise = float(np.max(np.diff(E)))
    ok = rise <= 1e-10 and E[1:].max() <= E[0]
    assert report(2, ok, f"largest step increase {rise:.2e}, E0 = {E[0]:.6f}, E200 = {E[-1]:.6f}", time.perf_counter() - t0, 60)


def test_criterion_3_splitting_identity(report, tmp_path):
    t0 = time.perf_counter()
    cfg = SolverConfig(eps=0.2, n=32, T=50 * 0.5 * 0.2**3)
    p = tmp_path / "path.schn"
    write_noise_path(p, NoisePath.sample(cfg.noise_mesh, cfg.tau, 11, 0, cfg.steps))
    rec = run_trajectory(cfg, 11, RunOptions(track_split=True, noise_path=read_noise_path(p)))
    defect = max(rec.scalars["split_defect"])
    assert report(3, defect <= 1e-8 and rec.steps == 50, f"max L2 split defect {defect:.2e}", time.perf_counter() - t0, 30)


def test_criterion_4_convolution_equivalence(report):
    t0 = time.perf_counter()
    cfg = SolverConfig(eps=0.2, n=32)
    g = cfg.grid
    incs = NoisePath.sample(cfg.noise_mesh, cfg.tau, 12, 0, 50).increments(g)
    st = initial_state(Field(g, np.zeros(g.shape)), split=True)
    worst = 0.0
    for j, inc in enumerate(incs, start=1):
        st = step_linear(st, inc, cfg)
        worst = max(worst, norm(st.X_lin - convolution_direct(incs, cfg, j), "L2"))
    assert report(4, worst <= 1e-11, f"max L2 gap {worst:.2e} over 50 steps", time.perf_counter() - t0, 10)


def test_criterion_5_noise_moments(report):
    t0 = time.perf_counter()
    hs, tau = [1 / 8, 1 / 16, 1 / 32], 1e-4
    reps = noise_moment_study(2, hs, [tau], 10_000, base_seed=5)
    lines, ok = [], True
    for h, r in zip(hs, reps):
        oracle = expected_corrected_norm_sq(int(round(1 / h)) + 1, 2, tau, fine=8000)
        z = (r.corrected_norm_sq.mean - oracle) / r.corrected_norm_sq.stderr
        ok &= abs(z) <= 5
        lines.append(f"h=1/{round(1 / h)} z={z:+.2f}")
    slope = reps[0].fits["corrected_norm_sq_vs_h"].slope
    ok &= abs(slope + 2) <= 0.2
    assert report(5, ok, f"{', '.join(lines)}, h-exponent {slope:.3f}", time.perf_counter() - t0, 120)


def test_criterion_6_convex_solvability(report):
    t0 = time.perf_counter()
    worst_it, worst_res, worst_margin = 0, 0.0, np.inf
    rng = np.random.default_rng(6)
    for eps in (0.05, 0.1, 0.2):
        cfg = SolverConfig(eps=eps, n=64)
        g, tau = cfg.grid, cfg.tau
        for s in range(20):
            prev = random_meanzero(g, 100 * s + 1, 1.0).values + rng.uniform(-0.5, 0.5)
            shift = random_meanzero(g, 100 * s + 2, 0.1, modes=16).values
            prob = ImplicitProblem(g, eps, tau, prev, shift=shift)
            v, stats = solve_implicit(prob, None, cfg)
            worst_it = max(worst_it, stats.iterations)
            worst_res = max(worst_res, stats.residual)
            for _ in range(100):
                psi = random_meanzero(g, int(rng.integers(1 << 30)), 1.0, modes=32).values
                gap = second_variation(g, eps, tau, v + shift, psi) - second_variation_bound(g, eps, tau, psi)
                worst_margin = min(worst_margin, gap)
    ok = worst_it <= 20 and worst_res <= 1e-10 and worst_margin >= -1e-12
    detail = f"max Newton iterations {worst_it}, max residual {worst_res:.1e}, min second-variation margin {worst_margin:.2e}"
    assert report(6, ok, detail, time.perf_counter() - t0, 120)


def test_criterion_7_temporal_order(report):
    t0 = time.perf_counter()
    cfg = SolverConfig(eps=0.1, n=64, T=0.02)
    rep = convergence_study_tau(cfg, 4)
    errs = ", ".join(f"{e:.2e}" for e in rep.errors)
    ok = rep.order is not None and rep.order >= 0.8
    assert report(7, ok, f"order {rep.order:.3f} (reference {rep.reference}), errors {errs}", time.perf_counter() - t0, 300)


def test_criterion_8_sharp_interface(report):
    t0 = time.perf_counter()
    tmpl = SolverConfig(eps=0.1, n=128, T=0.005, gamma=3.0, eta=1.0, init_radius=0.25)
    rep = limit_study_epsilon(tmpl, [0.1, 0.06, 0.04], M=16, base_seed=8)
    dev = [e["bulk_deviation"] for e in rep.per_eps]
    hd = [e["hausdorff_max"] / e["eps"] for e in rep.per_eps]
    ok = rep.trends["bulk_deviation_nonincreasing"] is True and dev[-1] <= 0.1 and all(h <= 5 for h in hd)
    ok &= all(e["n_failed"] == 0 for e in rep.per_eps)
    detail = "bulk deviation " + ", ".join(f"{d:.3f}" for d in dev) + "; max Hausdorff/eps " + ", ".join(f"{h:.2f}" for h in hd)
    assert report(8, ok, detail, time.perf_counter() - t0, 1800)


def test_criterion_9_event_probabilities(report):
    t0 = time.perf_counter()
    tmpl = SolverConfig(eps=0.2, n=64, gamma=3.0)
    out = event_study(tmpl, [0.2, 0.1, 0.05], M=200, base_seed=9, T=0.02, knob_values=(0.01,))
    probs = [e["probabilities"]["omega_w"] for e in out["per_eps"]]
    knob = [e["omega_w_vs_knob"]["0.01"] for e in out["per_eps"]]
    ok = out["trends"]["omega_w"] is True
    detail = "P[Omega_W] " + ", ".join(f"{p:.3f}" for p in probs) + " (C = 0.01: " + ", ".join(f"{p:.3f}" for p in knob) + ")"
    assert report(9, ok, detail, time.perf_counter() - t0, 600)


def test_criterion_10_analytic_oracles(report):
    t0 = time.perf_counter()
    g = make_grid(2, 64)
    c = Field.from_function(g, lambda x, y: np.cos(np.pi * x))
    e1 = abs(norm(c, "Hminus1") - 1 / (np.pi * np.sqrt(2)))
    cfg = SolverConfig(eps=0.1, n=64)
    st = initial_state(Field(g, np.zeros(g.shape)), split=True)
    from dataclasses import replace

    st = step_linear(replace(st, X_lin=c), None, cfg)
    e2 = float(np.max(np.abs(st.X_lin.values - c.values / (1 + cfg.eps * cfg.tau * np.pi**4))))
    rng = np.random.default_rng(10)
    e3 = 0.0
    for _ in range(100):
        a, b = rng.uniform(-2, 2, (2, 32, 32))
        d = a - b
        e3 = max(e3, float(np.max(np.abs(f_nonlin(a) - f_nonlin(b) - (3 * d * a**2 - d + d**3 - 3 * d**2 * a)))))
    ok = e1 <= 1e-10 and e2 <= 1e-12 and e3 <= 1e-12
    assert report(10, ok, f"H^-1 gap {e1:.1e}, resolvent gap {e2:.1e}, identity gap {e3:.1e}", time.perf_counter() - t0, 10)

"""Frozen values, computed once from the reviewed implementation."""

import pytest

from stochch.config import SolverConfig
from stochch.diagnostics import energy
from stochch.harness import RunOptions, run_trajectory
from stochch.noise import NoiseMesh, expected_moments, rng_stream
from stochch.stepper import initial_field


def test_expected_moments_h_tenth():
    exp = expected_moments(NoiseMesh(2, 11), 1e-4)
    # per-axis sum of ||phi||^2 / (phi, 1) is 22/3, so the raw value is 3 (22/3)^2 tau
    assert exp["raw_norm_sq"] == pytest.approx(484 / 3 * 1e-4, rel=1e-14)
    assert exp["mean_sq"] == pytest.approx(3e-4, rel=1e-14)
    assert exp["corrected_norm_sq"] == pytest.approx(0.015833333333333328, rel=1e-14)


def test_rng_stream_values():
    assert rng_stream(0, 0, 1).standard_normal(3).tolist() == pytest.approx(
        [0.9122056479976584, -0.040930018306660654, -1.52499637323733], rel=1e-15
    )


def test_initial_energy_tanh_circle():
    cfg = SolverConfig(eps=0.1, n=64)
    assert energy(initial_field(cfg), 0.1).E == pytest.approx(1.4780294276544361, rel=1e-12)


def test_small_trajectory_summary():
    cfg = SolverConfig(eps=0.2, n=32, T=0.04)
    s = run_trajectory(cfg, 0, RunOptions(track_deterministic_twin=True)).summary()
    assert s["E_final"] == pytest.approx(0.9277546570151959, rel=1e-9)
    assert s["linf_max"] == pytest.approx(0.911782253020732, rel=1e-9)
    assert s["Z_hm1_max"] == pytest.approx(0.0011917494413615241, rel=1e-7)
    assert s["mart_absmax"] == pytest.approx(9.97781087332894e-05, rel=1e-7)

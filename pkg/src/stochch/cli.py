"""Command-line entry point: ``stochch <command> CONFIG [flags]``.

Exit codes: 0 success, 1 configuration or usage error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .config import SolverConfig
from .diagnostics import write_level_set_csv, zero_level_set
from .exceptions import ConfigError, NewtonDiverged
from .harness import (
    CompactSets,
    RunOptions,
    _path_job,
    aggregate,
    convergence_study_tau,
    limit_study_epsilon,
    noise_ensemble,
    noise_moment_study,
    run_trajectory,
    write_csv,
    write_json,
)
from .spectral import Field, write_schf

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2

# key -> (symbol, meaning)
KEYS = {
    "model": {
        "eps": ("ε", "interface width, in (0, 1)"),
        "gamma": ("γ", "noise amplitude exponent, noise scaled by eps^gamma"),
        "T": ("T", "final time, an integer multiple of tau"),
        "potential": ("F", "'double_well' or 'none' (linear test problem)"),
        "init_kind": ("u0", "tanh_circle | constant | cosine | random"),
        "init_radius": ("r0", "radius of the initial circle/sphere"),
        "init_center": ("c", "center of the initial circle/sphere"),
        "init_value": ("m", "constant value or mean offset"),
        "init_mode": ("k", "cosine mode along x1"),
        "init_amplitude": ("a", "amplitude of cosine/random data"),
        "init_seed": ("", "seed of random initial data"),
    },
    "discretization": {
        "d": ("d", "dimension, 2 or 3"),
        "n": ("n", "grid points per axis"),
        "tau": ("τ", "time step, at most eps^3/2"),
        "tau_rule": ("τ", "'half-eps-cubed' sets tau = eps^3/2 when tau is absent"),
        "eta": ("η", "noise mesh exponent, h = eps^eta"),
        "noise_m": ("", "explicit noise nodes per axis (overrides eta)"),
        "variant": ("λ_k", "'exact' (pi^2|k|^2) or 'discrete' eigenvalues"),
        "noise_transfer": ("", "'pointwise' or 'projection'"),
    },
    "noise": {
        "seed": ("", "base seed of the noise streams"),
        "M": ("M", "number of paths"),
    },
    "solver": {
        "newton_tol": ("", "H^-1 residual tolerance"),
        "newton_max_iter": ("", "Newton iteration cap"),
        "linear_tol": ("", "relative tolerance of the inner CG solves"),
        "linear_max_iter": ("", "CG iteration cap"),
        "warm_start": ("", "start Newton from the linear predictor"),
        "allow_nonconvex": ("", "permit tau > eps^3/2"),
        "meanzero_tol": ("", "tolerance for mean-zero checks"),
        "split_tol": ("", "tolerance of the splitting identity"),
        "energy_tol": ("", "tolerance of the energy decay check"),
    },
    "study": {
        "kind": ("", "informational label of the study"),
        "sigma0": ("σ₀", "stopping-index exponent"),
        "kappa0": ("κ₀", "remainder threshold exponent"),
        "theta": ("θ", "energy threshold exponent"),
        "c_omega2": ("C", "remainder threshold constant"),
        "c_rem": ("C", "noise-sum constant in the remainder"),
        "c_w": ("C", "linear-part sup-norm threshold constant"),
        "c_energy": ("C", "energy threshold constant"),
        "track_split": ("", "co-evolve the linear/random-PDE splitting"),
        "track_twin": ("", "co-evolve the noise-free twin and error series"),
        "zero_noise": ("", "replace every increment by zero"),
        "halvings": ("", "convergence: number of tau halvings"),
        "reference": ("", "convergence: 'self' or 'exact_linear'"),
        "eps_list": ("ε", "limit: decreasing list of eps values"),
        "margin": ("", "limit: distance of the compact sets from the interface"),
        "tau_cap": ("τ", "limit: upper bound on tau"),
        "samples": ("", "noise-stats: number of increments"),
        "h_list": ("h", "noise-stats: noise mesh sizes"),
        "tau_list": ("τ", "noise-stats: time steps"),
    },
    "output": {
        "directory": ("", "output directory"),
        "snapshot_steps": ("", "steps written as SCHF snapshots (default [0, J])"),
        "checkpoint_every": ("", "simulate: checkpoint period in steps"),
    },
}

SOLVER_SECTIONS = ("model", "discretization", "solver")
STUDY_KNOBS = ("sigma0", "kappa0", "theta", "c_omega2", "c_rem", "c_w", "c_energy")


def load_config(path):
    """Parse a TOML run file into ``(SolverConfig, raw sections)``."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = tomllib.loads(p.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    for sec, body in raw.items():
        if sec not in KEYS:
            raise ConfigError(f"unknown section [{sec}]")
        if not isinstance(body, dict):
            raise ConfigError(f"[{sec}] must be a table")
        unknown = set(body) - set(KEYS[sec])
        if unknown:
            raise ConfigError(f"unknown keys in [{sec}]: {sorted(unknown)}")
    kw = {}
    for sec in SOLVER_SECTIONS:
        kw.update(raw.get(sec, {}))
    study = raw.get("study", {})
    kw.update({k: study[k] for k in STUDY_KNOBS if k in study})
    if "seed" in raw.get("noise", {}):
        kw["seed"] = raw["noise"]["seed"]
    if "tau" in kw and "tau_rule" not in kw:
        kw["tau_rule"] = None
    return SolverConfig.from_dict(kw), raw


def _out_dir(args, raw, force, resume=False):
    d = args.out or os.environ.get("STOCHCH_OUT") or raw.get("output", {}).get("directory") or "stochch_out"
    path = Path(d)
    if path.exists() and any(path.iterdir()) and not (force or resume):
        raise ConfigError(f"output directory {path} is not empty (use --force)")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _threads(args):
    if args.threads is not None:
        return int(args.threads)
    env = os.environ.get("STOCHCH_THREADS")
    return int(env) if env else (os.cpu_count() or 1)


def _echo(out, cfg, raw, extra=None):
    doc = {"config": json.loads(cfg.canonical()), "sections": raw, "notes": cfg.assumption_notes()}
    if extra:
        doc.update(extra)
    write_json(out / "config.json", doc)
    return doc["config"]


def _seed(args, cfg):
    return cfg.seed if args.seed is None else int(args.seed)


def cmd_simulate(args):
    cfg, raw = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=int(args.seed))
    out = _out_dir(args, raw, args.force, args.resume)
    study, output = raw.get("study", {}), raw.get("output", {})
    J = cfg.steps
    snaps = tuple(int(s) for s in output.get("snapshot_steps", [0, J]))
    if any(s < 0 or s > J for s in snaps):
        raise ConfigError(f"snapshot steps must lie in [0, {J}]")
    opt = RunOptions(
        track_split=bool(study.get("track_split", False)),
        track_deterministic_twin=bool(study.get("track_twin", False)),
        snapshot_steps=snaps,
        zero_noise=bool(study.get("zero_noise", False)),
        checkpoint_path=str(out / "checkpoint.npz"),
        checkpoint_every=int(output.get("checkpoint_every", 0)),
        resume=args.resume,
    )
    conf = _echo(out, cfg, raw)
    rec = run_trajectory(cfg, cfg.seed, opt)
    write_csv(out / "diagnostics.csv", rec.rows())
    for j, snap in sorted(rec.snapshots.items()):
        for name, values in snap.items():
            write_schf(out / f"{name}_{j:06d}.schf", values, cfg.eps)
    X = rec.snapshots.get(J, {}).get("X")
    if X is not None:
        ls = zero_level_set(Field(cfg.grid, X))
        write_level_set_csv(out / f"levelset_{J:06d}.csv", ls, J, cfg.eps)
    write_json(out / "summary.json", {"config": conf, "summary": rec.summary(), "flags": rec.flags, "stats": rec.stats})
    return EXIT_OK


def cmd_ensemble(args):
    cfg, raw = load_config(args.config)
    out = _out_dir(args, raw, args.force, args.resume)
    M = args.paths if args.paths is not None else int(raw.get("noise", {}).get("M", 1))
    if M < 1:
        raise ConfigError("M must be at least 1")
    study = raw.get("study", {})
    opt = RunOptions(
        track_split=bool(study.get("track_split", False)),
        track_deterministic_twin=bool(study.get("track_twin", False)),
        zero_noise=bool(study.get("zero_noise", False)),
    )
    seed = _seed(args, cfg)
    conf = _echo(out, cfg, raw, {"M": M, "base_seed": seed})
    pdir = out / "paths"
    pdir.mkdir(exist_ok=True)
    todo = [p for p in range(M) if not (args.resume and (pdir / f"path_{p:05d}.json").exists())]
    from joblib import Parallel, delayed

    n_jobs = _threads(args)
    fresh = Parallel(n_jobs=n_jobs)(delayed(_path_job)(cfg, seed, p, opt, False) for p in todo)
    for r in fresh:
        write_json(pdir / f"path_{r['path']:05d}.json", r)
    results = [json.loads((pdir / f"path_{p:05d}.json").read_text()) for p in range(M)]
    st = aggregate(results, M)
    write_csv(out / "paths.csv", [{"path": r["path"], "failed": r["failed"], **r.get("summary", {})} for r in results])
    write_json(out / "summary.json", {"config": conf, "ensemble": st})
    return EXIT_OK if st.n_failed == 0 else EXIT_NUMERIC


def cmd_convergence(args):
    cfg, raw = load_config(args.config)
    study = raw.get("study", {})
    halvings = int(study.get("halvings", 4))
    if halvings < 1:
        raise ConfigError("halvings must be at least 1: an order needs two or more points")
    out = _out_dir(args, raw, args.force)
    conf = _echo(out, cfg, raw)
    rep = convergence_study_tau(cfg, halvings, reference=study.get("reference", "self"))
    write_csv(out / "errors.csv", [{"tau": t, "error_hminus1": e} for t, e in zip(rep.taus, rep.errors)])
    write_json(out / "summary.json", {"config": conf, "order": rep})
    return EXIT_OK


def cmd_limit(args):
    cfg, raw = load_config(args.config)
    study = raw.get("study", {})
    eps_list = study.get("eps_list")
    if not eps_list:
        raise ConfigError("[study] eps_list is required for the limit study")
    out = _out_dir(args, raw, args.force)
    M = args.paths if args.paths is not None else int(raw.get("noise", {}).get("M", 1))
    sets = CompactSets(radius=cfg.init_radius, margin=float(study.get("margin", 0.125)), center=cfg.init_center)
    conf = _echo(out, cfg, raw)
    rep = limit_study_epsilon(
        cfg,
        eps_list,
        sets,
        M=M,
        base_seed=_seed(args, cfg),
        tau_cap=study.get("tau_cap"),
        zero_noise=bool(study.get("zero_noise", False)),
        n_jobs=_threads(args),
    )
    write_csv(out / "per_eps.csv", [{k: v for k, v in e.items() if k != "per_path"} for e in rep.per_eps])
    write_json(out / "summary.json", {"config": conf, "limit": rep})
    return EXIT_OK


def cmd_noise_stats(args):
    cfg, raw = load_config(args.config)
    study = raw.get("study", {})
    out = _out_dir(args, raw, args.force)
    M = args.paths if args.paths is not None else int(study.get("samples", 10000))
    conf = _echo(out, cfg, raw)
    seed = _seed(args, cfg)
    n_jobs = _threads(args)
    if "h_list" in study or "tau_list" in study:
        reports = noise_moment_study(
            cfg.d, study.get("h_list", [cfg.noise_mesh.h]), study.get("tau_list", [cfg.tau]), M, seed, n_jobs
        )
    else:
        reports = [noise_ensemble(cfg, M, seed, n_jobs)]
    write_csv(
        out / "moments.csv",
        [
            {
                "h": r.h,
                "tau": r.tau,
                "samples": r.nsamples,
                **{f"{k}_{s}": getattr(getattr(r, k), s) for k in ("mean_sq", "corrected_norm_sq", "mean_4th") for s in ("mean", "stderr")},
            }
            for r in reports
        ],
    )
    write_json(out / "summary.json", {"config": conf, "moments": reports})
    return EXIT_OK


COMMANDS = {
    "simulate": (cmd_simulate, "run one trajectory"),
    "ensemble": (cmd_ensemble, "run M independent paths and aggregate"),
    "convergence": (cmd_convergence, "deterministic order study in tau"),
    "limit": (cmd_limit, "sharp-interface study along decreasing eps"),
    "noise-stats": (cmd_noise_stats, "Monte-Carlo moments of the noise increments"),
}


def _keys_help():
    lines = ["configuration keys (TOML sections):"]
    for sec, keys in KEYS.items():
        lines.append(f"  [{sec}]")
        for k, (sym, doc) in keys.items():
            tag = f" ({sym})" if sym else ""
            lines.append(f"    {k}{tag}: {doc}")
    lines.append("")
    lines.append("environment: STOCHCH_OUT (output directory), STOCHCH_THREADS (worker count)")
    lines.append("exit codes: 0 ok, 1 config/usage error, 2 numerical failure")
    return "\n".join(lines)


def build_parser():
    epilog = _keys_help()
    parser = argparse.ArgumentParser(
        prog="stochch",
        description="Stochastic Cahn-Hilliard simulations and studies.",
        epilog=epilog,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, doc) in COMMANDS.items():
        p = sub.add_parser(name, help=doc, description=doc, epilog=epilog, formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("config", help="TOML run file")
        p.add_argument("--seed", type=int, default=None, help="override [noise] seed")
        p.add_argument("--out", default=None, help="output directory (overrides STOCHCH_OUT and [output] directory)")
        p.add_argument("--force", action="store_true", help="allow writing into a non-empty directory")
        p.add_argument("--paths", type=int, default=None, help="override [noise] M")
        p.add_argument("--resume", action="store_true", help="continue from checkpoints in the output directory")
        p.add_argument("--threads", type=int, default=None, help="worker count (overrides STOCHCH_THREADS)")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else EXIT_CONFIG
        return EXIT_OK if code == 0 else EXIT_CONFIG
    func = COMMANDS[args.command][0]
    try:
        with np.errstate(over="raise", invalid="raise"):
            return func(args)
    except (NewtonDiverged, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()

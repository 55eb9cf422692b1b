"""``gsqg-lab`` command-line front end.

Exit codes: 0 success, 1 a checked invariant failed, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .commutators import LemmaParams, convexity_sweep, estimate_constant
from .evolution import (ClawProblem, ConstantPath, PiecewiseLinearPath, SimConfig, run_claw, run_gsqg)
from .experiments import (continuity_experiment, is_monotone_decreasing, stability_experiment,
                          viscosity_continuation)
from .io import write_json, write_snapshot, write_table_csv, write_trajectory_csv
from .spectral import SpectralField, random_field
from .verify import SUITES, run_suite

SUBCOMMANDS = ("simulate", "claw", "verify", "constants", "stability", "continuity", "viscosity")

# flag name -> (type, default)
OPTIONS = {
    "beta": (float, 1.5),
    "mu": (float, 0.6),
    "n": (int, 256),
    "length": (float, 2 * math.pi),
    "tfinal": (float, 1.0),
    "cfl": (float, 0.5),
    "nu": (float, 0.0),
    "sigma_list": (str, None),
    "seed": (int, 0),
    "trials": (int, None),
    "lemma": (str, "3.1"),
    "suite": (str, "flux-identity"),
    "levels": (str, None),
}


class UsageError(Exception):
    pass


class InvariantFailure(Exception):
    pass


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("GSQG_LAB_THREADS", "1")))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gsqg-lab", description="gSQG simulation and verification lab")
    p.add_argument("--version", action="version", version=f"gsqg-lab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", type=str, help="TOML file or a previous run's manifest.json")
        s.add_argument("--out", type=str, help="output directory")
        s.add_argument("--beta", type=float)
        s.add_argument("--mu", type=float)
        s.add_argument("--n", type=int)
        s.add_argument("--length", type=float)
        s.add_argument("--tfinal", type=float)
        s.add_argument("--cfl", type=float)
        s.add_argument("--nu", type=float)
        s.add_argument("--sigma-list", dest="sigma_list", type=str, help="comma-separated Sobolev exponents")
        s.add_argument("--seed", type=int)
        s.add_argument("--trials", type=int)
        s.add_argument("--lemma", type=str, choices=["2.3", "3.1", "3.2", "3.3", "3.4"])
        s.add_argument("--suite", type=str, choices=sorted(SUITES))
        s.add_argument("--levels", type=str, help="comma-separated mollifier levels, viscosities or amplitudes")
    return p


def _load_config(path: str) -> dict:
    fp = Path(path)
    if not fp.is_file():
        raise UsageError(f"cannot read config file {path}")
    text = fp.read_text()
    if fp.suffix == ".json":
        data = json.loads(text)
        data = data.get("config", data)
    else:
        try:
            import tomllib as toml  # Python >= 3.11
        except ModuleNotFoundError:
            import tomli as toml
        try:
            data = toml.loads(text)
        except toml.TOMLDecodeError as e:
            raise UsageError(f"malformed config {path}: {e}") from e
    out = {}
    for k, v in data.items():
        key = k.replace("-", "_")
        if key not in OPTIONS:
            raise UsageError(f"unknown config key {k!r}")
        if key in ("sigma_list", "levels") and isinstance(v, list):
            v = ",".join(repr(float(x)) for x in v)
        out[key] = v
    return out


def resolve(args: argparse.Namespace) -> dict:
    """Defaults < config file < explicit flags."""
    cfg = {k: d for k, (_, d) in OPTIONS.items()}
    if args.config:
        cfg.update(_load_config(args.config))
    for k in OPTIONS:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    for k, (typ, _) in OPTIONS.items():
        if cfg[k] is not None:
            try:
                cfg[k] = typ(cfg[k])
            except (TypeError, ValueError) as e:
                raise UsageError(f"{k} must be of type {typ.__name__}") from e
    _validate(cfg)
    return cfg


def _floats(text: Optional[str], name: str) -> Optional[list]:
    if text is None:
        return None
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise UsageError(f"{name} must be a comma-separated list of numbers") from e


def _validate(c: dict):
    if not 1 < c["beta"] < 2:
        raise UsageError(f"--beta {c['beta']}: beta must lie in (1, 2), the range of the local well-posedness theorem")
    if not c["mu"] > 0.5:
        raise UsageError(f"--mu {c['mu']}: mu must exceed 1/2 for the logarithmic regularization to apply")
    n = c["n"]
    if n < 8 or n & (n - 1):
        raise UsageError(f"--n {n}: grid size must be a power of two, at least 8")
    if not c["length"] > 0:
        raise UsageError("--length must be positive")
    if not c["tfinal"] > 0:
        raise UsageError("--tfinal must be positive")
    if not 0 < c["cfl"] <= 1:
        raise UsageError("--cfl must lie in (0, 1]")
    if not c["nu"] >= 0:
        raise UsageError("--nu must be nonnegative")
    if c["trials"] is not None and c["trials"] < 1:
        raise UsageError("--trials must be positive")
    _floats(c["sigma_list"], "--sigma-list")
    _floats(c["levels"], "--levels")


def _sim_config(c: dict, **over) -> SimConfig:
    sig = _floats(c["sigma_list"], "--sigma-list")
    kw = dict(beta=c["beta"], mu=c["mu"], n_points=c["n"], side_length=c["length"], time_horizon=c["tfinal"],
              cfl_factor=c["cfl"], viscosity=c["nu"], norm_exponents=tuple(sig) if sig else None)
    kw.update(over)
    return SimConfig(**kw)


def _two_mode(grid) -> SpectralField:
    b = grid.base_wavenumber
    return SpectralField.from_function(grid, lambda x, y: np.cos(b * x) + np.cos(2 * b * y))


# --------------------------------------------------------------------------
# Subcommands; each returns (outputs, extra manifest entries) and raises InvariantFailure


def cmd_simulate(c: dict, out: Path):
    cfg = _sim_config(c)
    grid = cfg.grid()
    th0 = _two_mode(grid)
    traj = run_gsqg(th0, cfg)
    write_trajectory_csv(out / "trajectory.csv", traj)
    snaps = out / "snapshots"
    snaps.mkdir(exist_ok=True)
    write_snapshot(snaps / "initial.gsqg", traj.field_at(0))
    write_snapshot(snaps / "final.gsqg", traj.final)
    summary = {"l2_drift": traj.l2_drift(), "mean_drift": max(abs(m - traj.mean[0]) for m in traj.mean),
               "max_flux_residual": max(traj.flux_residual), "t_star": traj.t_star, "aborted": traj.aborted,
               "abort_reason": traj.abort_reason, "steps": traj.steps}
    write_json(out / "summary.json", summary)
    failures = []
    if traj.aborted:
        failures.append(traj.abort_reason)
    if cfg.viscosity == 0 and summary["l2_drift"] > 1e-10:
        failures.append(f"L2 drift {summary['l2_drift']:.3e} exceeds 1e-10")
    if summary["mean_drift"] != 0:
        failures.append(f"mean drift {summary['mean_drift']:.3e} is not zero")
    if summary["max_flux_residual"] > 1e-11:
        failures.append(f"flux identity residual {summary['max_flux_residual']:.3e} exceeds 1e-11")
    return ["trajectory.csv", "summary.json", "snapshots/initial.gsqg", "snapshots/final.gsqg"], \
        {"steps": traj.steps}, failures


def cmd_claw(c: dict, out: Path):
    cfg = _sim_config(c)
    grid = cfg.grid()
    rng = np.random.default_rng([c["seed"], 0])
    q = random_field(grid, rng, 1.0, 4.0)
    th = random_field(grid, rng, 1.0, 6.0)
    traj = run_claw(ClawProblem(th, ConstantPath(q), None, cfg.viscosity), cfg)
    write_trajectory_csv(out / "trajectory.csv", traj)
    bounds = {f"{s:g}": traj.max_gronwall(s) for s in cfg.sigmas}
    write_json(out / "gronwall.json", {"max_ratio": bounds, "steps": traj.steps})
    failures = [f"Gronwall ratio for sigma={k} is not finite" for k, v in bounds.items() if not math.isfinite(v)]
    return ["trajectory.csv", "gronwall.json"], {"steps": traj.steps}, failures


def cmd_verify(c: dict, out: Path):
    trials = c["trials"] or 200
    kw = {}
    if c["suite"] in ("flux-identity", "skew-adjoint", "oracle", "steady-state"):
        kw = {"beta": c["beta"], "mu": c["mu"]}
    rep = run_suite(c["suite"], trials, c["seed"], **kw)
    write_json(out / "report.json", rep)
    failures = [] if rep.passed else [f"{rep.suite}: max residual {rep.max_residual:.3e} exceeds {rep.tolerance:g}"]
    return ["report.json"], {}, failures


def cmd_constants(c: dict, out: Path):
    trials = c["trials"] or 500
    lemma = c["lemma"]
    if lemma == "3.2":
        sweeps = {}
        failures = []
        for s in (0.1, 0.5, 0.9):
            d = convexity_sweep(s, trials, c["seed"])
            sweeps[f"{s:g}"] = {k: d[k] for k in ("envelope", "envelope_far", "bound")}
            if not d["envelope"] <= d["bound"]:
                failures.append(f"s={s}: envelope {d['envelope']:.4g} exceeds {d['bound']:.4g}")
        write_json(out / "constants.json", {"lemma": "3.2", "trials": trials, "sweeps": sweeps})
        return ["constants.json"], {}, failures
    params = LemmaParams.defaults(lemma)
    rep = estimate_constant(params, trials, c["seed"], threads=_threads())
    write_json(out / "constants.json", rep)
    failures = []
    if not all(math.isfinite(r) and r >= 0 for r in rep.ratios):
        failures.append("non-finite ratio")
    if not -0.15 <= rep.scaling_slope <= 0.15:
        failures.append(f"scaling slope {rep.scaling_slope:.4f} outside [-0.15, 0.15]")
    return ["constants.json"], {}, failures


def _emit_table(out: Path, table) -> list:
    write_table_csv(out / f"{table.name}.csv", table.columns, table.rows)
    write_json(out / f"{table.name}.json", table)
    return [f"{table.name}.csv", f"{table.name}.json"]


def cmd_stability(c: dict, out: Path):
    levels = [int(v) for v in (_floats(c["levels"], "--levels") or [4, 8, 16, 32])]
    T = c["tfinal"]
    knots = np.linspace(0.0, T, 17)
    steps = 8 * (len(knots) - 1)
    cfg = _sim_config(c, dt=T / steps)
    grid = cfg.grid()
    rng = np.random.default_rng([c["seed"], 0])
    th = random_field(grid, rng, 1.0, 4.0)
    qa, qb = random_field(grid, rng, 1.0, 3.0), random_field(grid, rng, 1.0, 3.0)
    path = PiecewiseLinearPath(knots, [qa * math.cos(4 * t) + qb * math.sin(6 * t) for t in knots])
    table = stability_experiment(path, th, cfg, levels)
    sol, ratio = table.column("solution_error"), table.column("ratio")
    failures = []
    if not is_monotone_decreasing(sol):
        failures.append("solution error is not monotonically decreasing")
    if max(ratio) > 4 * min(ratio):
        failures.append(f"error ratio varies by {max(ratio) / min(ratio):.3g} > 4")
    return _emit_table(out, table), {}, failures


def cmd_continuity(c: dict, out: Path):
    amps = _floats(c["levels"], "--levels") or [1e-1, 1e-2, 1e-3]
    cfg = _sim_config(c)
    grid = cfg.grid()
    rng = np.random.default_rng([c["seed"], 0])
    th = random_field(grid, rng, 1.0, 4.0)
    perts = [SpectralField.mode(grid, 5, 3, a) for a in amps]
    table = continuity_experiment(th, perts, cfg)
    failures = []
    for col in ("theta_h_beta", "omega_h_beta", "zeta_h_beta", "theta_h_beta1"):
        if not is_monotone_decreasing(table.column(col)):
            failures.append(f"{col} is not monotonically decreasing")
    return _emit_table(out, table), {}, failures


def cmd_viscosity(c: dict, out: Path):
    nus = _floats(c["levels"], "--levels") or [1e-2, 5e-3, 2.5e-3]
    cfg = _sim_config(c)
    grid = cfg.grid()
    rng = np.random.default_rng([c["seed"], 0])
    th = random_field(grid, rng, 1.0, 4.0)
    table = viscosity_continuation(th, cfg, nus, nu_ref=0.0)
    dev = table.column("deviation_h_beta")
    failures = [] if is_monotone_decreasing(dev) else ["deviation is not monotonically decreasing"]
    return _emit_table(out, table), {}, failures


COMMANDS = {
    "simulate": cmd_simulate,
    "claw": cmd_claw,
    "verify": cmd_verify,
    "constants": cmd_constants,
    "stability": cmd_stability,
    "continuity": cmd_continuity,
    "viscosity": cmd_viscosity,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 2
    try:
        conf = resolve(args)
    except (UsageError, json.JSONDecodeError) as e:
        print(f"gsqg-lab: error: {e}", file=sys.stderr)
        return 2
    out = Path(args.out or f"runs/{args.command}")
    out.mkdir(parents=True, exist_ok=True)
    start = time.time()
    try:
        outputs, extra, failures = COMMANDS[args.command](conf, out)
    except ValueError as e:
        print(f"gsqg-lab: error: {e}", file=sys.stderr)
        return 2
    manifest = {"subcommand": args.command, "config": conf, "seed": conf["seed"], "version": __version__,
                "outputs": outputs, "wall_clock_seconds": time.time() - start,
                "threads": _threads(), "invariant_failures": failures}
    manifest.update(extra)
    write_json(out / "manifest.json", manifest)
    for f in failures:
        print(f"gsqg-lab: invariant violated: {f}", file=sys.stderr)
    if not failures:
        print(f"gsqg-lab: {args.command} ok; outputs in {out}")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())

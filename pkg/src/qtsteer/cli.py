"""Reproduction driver: seeded runs with machine-readable outputs.

Subcommands
    curve      stationary purity curve of one scheme over an eta grid
               (CSV eta,value,mc_error,method; analytic oracle rows are
               emitted alongside Monte Carlo ones where a closed form exists)
    surface    steering sum S over an (eta_A, eta_B) grid for a scheme pair
               (CSV eta_A,eta_B,S,mc_error plus a JSON summary of S>1 cells)
    critical   efficiency where S(eta, eta) crosses 1 (JSON)
    validate   invariant suite (JSON report)

Configuration comes from an optional JSON file (--config) with flag
overrides; every command is a pure function of (config, seed) and writes
byte-identical results on reruns.  Exit codes: 0 success, 1 validation
failure, 2 usage error, 3 statistics inconclusive within budget.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time

import numpy as np

from . import __version__
from .manifest import RunManifest, write_result_csv, write_result_json, \
    write_manifest, manifest_path
from .said import said_ex2_analytic, said_ex2_mc
from .beta_stationary import expected_beta
from .homodyne import x_homodyne, y_homodyne, y_secular, \
    homodyne_stationary_samples
from .steering import (pair_steering_sum, critical_eta, InconclusiveStatistics,
                       PAIR_SCHEMES)
from .seeding import substream
from . import validate as validate_mod

USAGE_ERROR = 2
INCONCLUSIVE = 3

SCHEMES = ("said", "y_secular", "x_lab", "y_lab")


def _parse_grid(text: str):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty grid")
    return vals


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="qtsteer",
        description="Trajectory unravellings of a driven two-level atom and "
                    "their detector-dependence (steering) tests.")
    ap.add_argument("--config", help="JSON file with default option values")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--omega", type=float, default=5.0,
                       help="Rabi frequency in units of gamma")
        p.add_argument("--dt", type=float, default=None,
                       help="integrator step in units of 1/gamma")
        p.add_argument("--t-final", type=float, default=40.0)
        p.add_argument("--n-traj", type=int, default=1000)
        p.add_argument("--seed", type=int, default=2024)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--out", required=True, help="output file path")

    pc = sub.add_parser("curve", help="purity curve over an eta grid")
    pc.add_argument("--scheme", choices=SCHEMES, required=True)
    pc.add_argument("--eta-grid", type=_parse_grid, required=True)
    common(pc)

    ps = sub.add_parser("surface", help="steering sum over an eta grid")
    ps.add_argument("--pair", choices=tuple(PAIR_SCHEMES), required=True)
    ps.add_argument("--eta-grid", type=_parse_grid, required=True,
                    help="grid used for eta_A (and eta_B unless --eta-b-grid)")
    ps.add_argument("--eta-b-grid", type=_parse_grid, default=None)
    common(ps)

    pk = sub.add_parser("critical", help="critical efficiency of a pair")
    pk.add_argument("--pair", choices=tuple(PAIR_SCHEMES), required=True)
    pk.add_argument("--tol", type=float, default=0.02)
    pk.add_argument("--budget", type=int, default=4_000_000,
                    help="maximum total records across the search")
    common(pk)

    pv = sub.add_parser("validate", help="run the invariant suite")
    pv.add_argument("--checks", default=None,
                    help="comma-separated subset of check names")
    common(pv)
    return ap


def _apply_config(args, parser):
    if not args.config:
        return args
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"cannot read config: {exc}")
    # flags win: only fill values the user left at their defaults
    defaults = {a.dest: a.default for a in parser._actions}
    for key, val in cfg.items():
        dest = key.replace("-", "_")
        if hasattr(args, dest) and getattr(args, dest) == defaults.get(dest, None):
            setattr(args, dest, val)
    return args


def _config_dict(args, skip=("config", "command", "out")) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _check_grid(grid):
    for e in grid:
        if not 0.0 < e <= 1.0:
            raise SystemExit((f"qtsteer: eta grid value {e} outside (0, 1]",
                              USAGE_ERROR)[0] or USAGE_ERROR)


def _curve_point(scheme, eta, omega, n_traj, seed, dt, workers):
    """(value, mc_error) of the scheme's stationary purity functional."""
    if scheme == "said":
        return said_ex2_mc(eta, n_cycles=40 * n_traj, rng=substream(seed, 1))
    spec = {"y_secular": y_secular(eta), "x_lab": x_homodyne(eta),
            "y_lab": y_homodyne(eta)}[scheme]
    s, _ = homodyne_stationary_samples(spec, omega, n_traj, seed, dt=dt,
                                       workers=workers)
    f = s[:, 0] ** 2 if scheme == "x_lab" else s[:, 1] ** 2 + s[:, 2] ** 2
    per_traj = f.reshape(n_traj, -1).mean(axis=1)
    return float(f.mean()), float(per_traj.std(ddof=1) / math.sqrt(n_traj))


def cmd_curve(args) -> int:
    grid = args.eta_grid
    for e in grid:
        if not 0.0 < e <= 1.0:
            print(f"qtsteer: eta grid value {e} outside (0, 1]", file=sys.stderr)
            return USAGE_ERROR
    rows = []
    for i, eta in enumerate(grid):
        val, err = _curve_point(args.scheme, eta, args.omega, args.n_traj,
                                args.seed + 13 * i, args.dt, args.workers)
        rows.append((eta, val, err, "mc"))
        if args.scheme == "said":
            rows.append((eta, said_ex2_analytic(eta), 0.0, "oracle"))
        elif args.scheme == "y_secular":
            rows.append((eta, expected_beta(eta), 0.0, "oracle"))
    write_result_csv(args.out, ["eta", "value", "mc_error", "method"], rows)
    return 0


def cmd_surface(args) -> int:
    grid_a = args.eta_grid
    grid_b = args.eta_b_grid or args.eta_grid
    for e in list(grid_a) + list(grid_b):
        if not 0.0 < e <= 1.0:
            print(f"qtsteer: eta grid value {e} outside (0, 1]", file=sys.stderr)
            return USAGE_ERROR
    n_records = 8 * args.n_traj
    rows = []
    violations = []
    for i, ea in enumerate(grid_a):
        for j, eb in enumerate(grid_b):
            res = pair_steering_sum(args.pair, ea, eb, args.omega, n_records,
                                    args.seed + 1009 * (i * len(grid_b) + j),
                                    dt=args.dt, workers=args.workers)
            rows.append((ea, eb, res.s_value, res.mc_error))
            if res.s_value > 1.0:
                violations.append({"eta_A": ea, "eta_B": eb,
                                   "S": res.s_value, "mc_error": res.mc_error})
    write_result_csv(args.out, ["eta_A", "eta_B", "S", "mc_error"], rows)
    summary = {"pair": args.pair, "omega": args.omega,
               "n_cells": len(rows), "violating_cells": violations}
    write_result_json(args.out + ".summary.json", summary,
                      manifest_ref=manifest_path(args.out).rsplit("/", 1)[-1])
    return 0


def cmd_critical(args) -> int:
    payload = {"pair": args.pair, "omega": args.omega, "tol": args.tol,
               "seed": args.seed}
    try:
        eta_c, info = critical_eta(args.pair, omega=args.omega, tol=args.tol,
                                   budget=args.budget, seed=args.seed,
                                   dt=args.dt, workers=args.workers)
    except InconclusiveStatistics as exc:
        payload.update({"eta_critical": None, "reason": "inconclusive",
                        "detail": str(exc), "bracket": list(exc.bracket or ()),
                        "n_traj_used": exc.records_used})
        write_result_json(args.out, payload)
        return INCONCLUSIVE
    if eta_c is None:
        payload.update({"eta_critical": None,
                        "reason": info.get("reason", "no violation"),
                        "n_traj_used": info.get("records_used", 0)})
    else:
        payload.update({"eta_critical": eta_c,
                        "n_traj_used": info.get("records_used", 0),
                        "evaluations": info.get("evaluations", 0)})
    write_result_json(args.out, payload)
    return 0


def cmd_validate(args) -> int:
    names = set(args.checks.split(",")) if args.checks else None
    report = validate_mod.run_all(seed=args.seed, names=names)
    write_result_json(args.out, report)
    return 0 if report["passed"] else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args = _apply_config(args, parser)
    start = time.monotonic()
    handler = {"curve": cmd_curve, "surface": cmd_surface,
               "critical": cmd_critical, "validate": cmd_validate}[args.command]
    rc = handler(args)
    results = [args.out]
    if args.command == "surface":
        results.append(args.out + ".summary.json")
    manifest = RunManifest(command=args.command, config=_config_dict(args),
                           seed=args.seed, version=__version__,
                           duration_s=time.monotonic() - start)
    try:
        write_manifest(args.out, manifest, [p for p in results
                                            if _exists(p)])
    except OSError:
        pass
    return rc


def _exists(path) -> bool:
    import os
    return os.path.exists(path)


if __name__ == "__main__":
    sys.exit(main())

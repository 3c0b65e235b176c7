"""Command-line interface: ``nmdetumble {single,mc,sweep,validate-field}``.

A TOML config file (``--config``) sets the baseline; flags override it.
Outputs go to ``--out``, else the config's ``[output] dir``, else
``$NMDETUMBLE_OUT``, else ``./out``.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, parse_config
from .controllers import CONTROLLER_NAMES, PRIMARY_GAIN
from .geomag import load_coefficient_file, load_igrf13, read_field_points, validate_points
from .harness import (
    CampaignResult,
    initial_state,
    run_episode,
    run_gain_sweep,
    run_monte_carlo,
    summarize_campaign,
    sweep_table,
    write_outputs,
)

log = logging.getLogger("nmdetumble")


def parse_gains(spec: str) -> np.ndarray:
    """``lo:hi:logN`` (N log-spaced), ``lo:hi:N`` (N linear) or ``a,b,c``."""
    spec = spec.strip()
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ValueError(f"gain range must be lo:hi:N or lo:hi:logN, got {spec!r}")
        lo, hi, n = parts
        lo, hi = float(lo), float(hi)
        if n.startswith("log"):
            if lo <= 0 or hi <= 0:
                raise ValueError("log-spaced gains must be positive")
            return np.geomspace(lo, hi, int(n[3:]))
        return np.linspace(lo, hi, int(n))
    return np.array([float(x) for x in spec.split(",") if x.strip()])


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="TOML configuration file")
    p.add_argument("--out", help="output directory")
    p.add_argument("--igrf", help="IGRF coefficient file (default: bundled IGRF-13)")
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--horizon", type=float, help="simulated time per run [s]")
    p.add_argument("--workers", type=int, help="worker processes")
    p.add_argument("--no-drag-torque", action="store_true", help="disable the aerodynamic torque")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nmdetumble", description="Magnetorquer detumbling simulations.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("single", help="one closed-loop episode")
    _add_common(p)
    p.add_argument("--controller", default="nonmonotonic", choices=CONTROLLER_NAMES)
    p.add_argument("--run-index", type=int, default=0, help="initial-condition draw")
    p.add_argument("--gain", type=float, help="override the primary gain")

    p = sub.add_parser("mc", help="Monte-Carlo campaign")
    _add_common(p)
    p.add_argument("--seeds", type=int, help="number of initial conditions")
    p.add_argument("--controller", action="append", choices=CONTROLLER_NAMES, help="repeat to select several")

    p = sub.add_parser("sweep", help="gain sweep on one initial condition")
    _add_common(p)
    p.add_argument("--controller", required=True, choices=sorted(PRIMARY_GAIN))
    p.add_argument("--gains", required=True, help="lo:hi:logN, lo:hi:N or comma list")
    p.add_argument("--run-index", type=int, default=0)

    p = sub.add_parser("validate-field", help="compare the field model with reference points")
    p.add_argument("--points", required=True, type=Path, help="CSV: radius_km,lat_deg,lon_deg,year,B_north_nT,B_east_nT,B_down_nT")
    p.add_argument("--igrf", help="IGRF coefficient file (default: bundled IGRF-13)")
    p.add_argument("--degree", type=int, default=13, help="truncation degree")
    p.add_argument("--tol", type=float, default=5.0, help="per-component tolerance [nT]")
    return parser


def _campaign(args):
    cfg = parse_config(args.config)
    camp = cfg.campaign
    changes = {}
    env = camp.env
    if args.igrf:
        env = replace(env, igrf_path=args.igrf)
    if args.no_drag_torque:
        env = replace(env, drag_torque=False)
    changes["env"] = env
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.horizon is not None:
        changes["horizon"] = args.horizon
    if args.workers is not None:
        changes["workers"] = args.workers
    out = args.out or cfg.output_dir
    changes["output"] = out
    return replace(camp, **changes), Path(out)


def _print_rows(rows: list[dict], keys) -> None:
    print("  ".join(f"{k:>14s}" for k in keys))
    for row in rows:
        cells = []
        for k in keys:
            v = row[k]
            if isinstance(v, float):
                cells.append(f"{v:14.4g}")
            else:
                cells.append(f"{'-' if v is None else v!s:>14s}")
        print("  ".join(cells))


def cmd_single(args) -> int:
    camp, out = _campaign(args)
    ctrl = camp.controller(args.controller)
    if args.gain is not None:
        ctrl = ctrl.with_gain(args.gain)
    camp = replace(camp, n_runs=1, controllers=(ctrl,))
    record = run_episode(initial_state(camp, args.run_index), camp, ctrl, args.run_index)
    write_outputs(CampaignResult(camp, [record], summarize_campaign([record], camp)), out)
    td = "not reached" if record.detumble_time is None else f"{record.detumble_time:.0f} s"
    print(f"{ctrl.name}: |h0| = {record.h_norm[0]:.3e} N m s, final = {record.final_h:.3e} N m s, detumble {td}")
    print(f"outputs in {out}")
    return 1 if record.failed else 0


def cmd_mc(args) -> int:
    camp, out = _campaign(args)
    changes = {}
    if args.seeds is not None:
        changes["n_runs"] = args.seeds
    if args.controller:
        changes["controllers"] = tuple(camp.controller(n) for n in args.controller)
    camp = replace(camp, **changes)
    result = run_monte_carlo(camp)
    write_outputs(result, out)
    _print_rows(result.summary, ("controller", "converged", "failed", "mean_detumble_time", "median_final_h"))
    print(f"outputs in {out}")
    return 1 if any(r.failed for r in result.records) else 0


def cmd_sweep(args) -> int:
    camp, out = _campaign(args)
    gains = parse_gains(args.gains)
    records = run_gain_sweep(camp, args.controller, gains, args.run_index)
    table = sweep_table(records)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(table[0]) if table else ["controller"])
        w.writeheader()
        w.writerows(table)
    _print_rows(table, ("gain", "final_h", "detumble_time"))
    print(f"sweep table in {out / 'sweep.csv'}")
    return 1 if any(r.failed for r in records) else 0


def cmd_validate_field(args) -> int:
    model = load_coefficient_file(args.igrf, args.degree) if args.igrf else load_igrf13(args.degree)
    points = read_field_points(args.points)
    errors = validate_points(model, points)
    print(f"{'point':>5s} {'dN_nT':>9s} {'dE_nT':>9s} {'dD_nT':>9s}")
    for i, e in enumerate(errors):
        print(f"{i:5d} {e[0]:9.3f} {e[1]:9.3f} {e[2]:9.3f}")
    worst = float(np.abs(errors).max()) if len(errors) else 0.0
    ok = worst <= args.tol
    print(f"max |error| = {worst:.3f} nT ({'within' if ok else 'exceeds'} {args.tol:g} nT)")
    return 0 if ok else 1


COMMANDS = {"single": cmd_single, "mc": cmd_mc, "sweep": cmd_sweep, "validate-field": cmd_validate_field}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

"""Command-line entry point: ``calibrate``, ``run``, ``sweep`` and ``report``."""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import PRESETS, load_preset, load_scenario, load_sweep, sweep_preset_path
from .detector import calibrate_threshold, calibration_report, parse_error_file
from .harness import POLICIES, format_report, read_summary, run_calibration, run_episode, run_sweep, write_run


def _scenario(arg: str):
    if arg in PRESETS:
        return load_preset(arg)
    return load_scenario(arg)


def _sweep(arg: str):
    if arg.startswith("sweep_") and not os.path.exists(arg):
        return load_sweep(sweep_preset_path(arg))
    return load_sweep(arg)


def cmd_calibrate(args) -> int:
    if args.errors:
        errors = parse_error_file(args.errors)
        ule, params = calibrate_threshold(errors, args.rho, args.method)
        report = calibration_report(ule, args.rho, args.method, params)
    else:
        spec = _scenario(args.scenario)
        ule, report, errors = run_calibration(spec, args.steps, args.rho, args.method)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "calibration.txt").write_text(report)
        (out / "nominal_errors.txt").write_text("".join(f"{v!r}\n" for v in np.asarray(errors).tolist()))
    sys.stdout.write(report)
    return 0


def cmd_run(args) -> int:
    spec = _scenario(args.scenario)
    spec = replace(spec, seed=args.scenario_seed) if args.scenario_seed is not None else spec
    ule = args.ule if args.ule is not None else run_calibration(spec)[0]
    rec = run_episode(spec, args.policy, ule, run_index=args.seed, manual_trigger_distance=args.manual_trigger_dist)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        write_run(rec, args.out)
    dist = "" if rec.trigger_distance is None else f"{rec.trigger_distance:.2f}"
    print(
        f"scenario={rec.scenario} policy={rec.policy} seed={rec.seed} ule={rec.ule:.4f} "
        f"trigger_step={'' if rec.trigger_step is None else rec.trigger_step} trigger_distance={dist} "
        f"collided={int(rec.collided)} off_road={int(rec.off_road)} success={int(rec.success)}"
    )
    return 0


def cmd_sweep(args) -> int:
    cfg = _sweep(args.config)
    if args.reps is not None:
        cfg = replace(cfg, reps=args.reps)
    summary = run_sweep(cfg, out_dir=args.out, jobs=args.jobs)
    sys.stdout.write(format_report(summary.rows))
    return 0


def cmd_report(args) -> int:
    path = Path(args.input) / "summary.csv"
    if not path.exists():
        raise FileNotFoundError(f"no summary.csv in {args.input}")
    sys.stdout.write(format_report(read_summary(path)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="emergency-response", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("calibrate", help="estimate the nominal error limit ULe")
    src = c.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", help=f"scenario file or preset name {PRESETS}")
    src.add_argument("--errors", help="text file with one nominal error per line")
    c.add_argument("--steps", type=int, default=2000)
    c.add_argument("--rho", type=float, default=0.995)
    c.add_argument("--method", choices=("empirical", "burr"), default="empirical")
    c.add_argument("--out", help="directory for calibration.txt and nominal_errors.txt")
    c.set_defaults(func=cmd_calibrate)

    r = sub.add_parser("run", help="run one episode")
    r.add_argument("--scenario", required=True, help=f"scenario file or preset name {PRESETS}")
    r.add_argument("--policy", choices=POLICIES, default="bogp")
    r.add_argument("--ule", type=float, help="error limit; calibrated on the scenario when omitted")
    r.add_argument("--seed", type=int, default=0, help="replication index")
    r.add_argument("--scenario-seed", type=int, help="override the scenario's base seed")
    r.add_argument("--manual-trigger-dist", type=float, help="take over at this obstacle distance (m)")
    r.add_argument("--out", help="per-step CSV path")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run scenarios x policies x seeds")
    s.add_argument("--config", required=True, help="sweep file, or sweep_20kmh / sweep_30kmh")
    s.add_argument("--reps", type=int)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", help="output directory")
    s.set_defaults(func=cmd_sweep)

    t = sub.add_parser("report", help="print the success-rate table of a sweep")
    t.add_argument("--in", dest="input", required=True, help="sweep output directory")
    t.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

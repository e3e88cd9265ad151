"""Command-line entry point: simulate, localize, match, bench.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
Flag values override config fields, which override built-in defaults.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import Config, ConfigError, load_config, load_scenario, named_stream
from .geometry import Transform2D
from .gridmap import MapFormatError, build_pyramid, load_map
from .matcher import cascade_match
from .metrics import phase_stats, recovery_time, trajectory_error, write_summary
from .multihyp import run_replay
from .runlog import read_records, split_by_kind, write_records
from .sim import ScenarioError, simulate


def _parse_pose(text: str) -> Transform2D:
    parts = text.replace(",", " ").split()
    if len(parts) != 3:
        raise ConfigError(f"--initial-pose needs three numbers, got {text!r}")
    try:
        return Transform2D(*(float(p) for p in parts))
    except ValueError:
        raise ConfigError(f"--initial-pose needs three numbers, got {text!r}") from None


def _load(args) -> Config:
    return load_config(args.config, seed_override=args.seed)


def cmd_simulate(args) -> int:
    config = _load(args)
    grid = load_map(config.map_image, config.map_metadata)
    scenario = load_scenario(args.scenario, default_seed=config.seed)
    records = simulate(
        grid, scenario, config.laser,
        rng_motion=named_stream(scenario.seed, "motion"),
        rng_sensor=named_stream(scenario.seed, "sensor"),
    )
    write_records(args.out, records)
    print(f"wrote {len(records)} records to {args.out}")
    return 0


def cmd_localize(args) -> int:
    config = _load(args)
    grid = load_map(config.map_image, config.map_metadata)
    pyramid = build_pyramid(grid, config.localizer.matcher.levels)
    records = read_records(args.in_log)
    if not any(r.kind == "scan" for r in records):
        print(f"error: {args.in_log} contains no scan records; nothing to correct against",
              file=sys.stderr)
        return 1
    initial = _parse_pose(args.initial_pose) if args.initial_pose else None
    result = run_replay(records, grid, pyramid, config.localizer,
                        initial_pose=initial, single_hypothesis=args.single_hypothesis)
    out = sorted(result.estimates + result.warnings, key=lambda r: r.t)
    write_records(args.out, out, include_cpu=args.emit_cpu)
    print(f"wrote {len(result.estimates)} estimates "
          f"({len(result.warnings)} warnings) to {args.out}")
    return 0


def cmd_match(args) -> int:
    config = _load(args)
    grid = load_map(config.map_image, config.map_metadata)
    pyramid = build_pyramid(grid, config.localizer.matcher.levels)
    records = read_records(args.log)
    scans = split_by_kind(records).get("scan", [])
    if not scans:
        print("error: log contains no scan records", file=sys.stderr)
        return 1
    nearest = min(scans, key=lambda s: abs(s.t - args.at))
    if abs(nearest.t - args.at) > 1.0:
        print(f"error: no scan within 1 s of t={args.at} "
              f"(closest at t={nearest.t:.3f})", file=sys.stderr)
        return 1
    candidates = cascade_match(pyramid, nearest.to_scan(), config.localizer.base_to_laser,
                               config.localizer.matcher, config.localizer.sensor)
    lines = ["x,y,yaw,score,level"]
    lines += [
        f"{c.pose.x:.6f},{c.pose.y:.6f},{c.pose.yaw:.6f},{c.score:.6f},{c.level}"
        for c in candidates
    ]
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_bench(args) -> int:
    config = _load(args)
    threshold = args.threshold if args.threshold is not None else config.recovery_threshold
    hold = args.hold if args.hold is not None else config.recovery_hold
    estimates = split_by_kind(read_records(args.est_log)).get("estimate", [])
    gt = split_by_kind(read_records(args.gt_log)).get("gt", [])
    if not gt:
        print("error: no ground truth records in", args.gt_log, file=sys.stderr)
        return 1
    if not estimates:
        print("error: no estimate records in", args.est_log, file=sys.stderr)
        return 1
    try:
        series, summary = trajectory_error(estimates, gt)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    recovered = recovery_time(series, threshold, hold)
    summary["recovery_threshold"] = threshold
    summary["recovery_hold"] = hold
    summary["recovered"] = recovered is not None
    summary["recovery_time"] = recovered
    summary.update(phase_stats(series, threshold))

    os.makedirs(args.out, exist_ok=True)
    series.to_csv(os.path.join(args.out, "error_series.csv"))
    write_summary(os.path.join(args.out, "summary.json"), summary)
    written = ["error_series.csv", "summary.json"]
    if not args.no_plots:
        from .report import render_report

        for path in render_report(series, args.out, threshold):
            written.append(os.path.basename(path))
    print(f"wrote {', '.join(written)} to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mhloc",
        description="Multi-hypothesis Monte Carlo localization on 2D occupancy grids",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON configuration file")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")

    p = sub.add_parser("simulate", parents=[common],
                       help="run a scenario and write an odom/scan/gt log")
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--out", required=True, help="output run log (JSON lines)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("localize", parents=[common],
                       help="replay a log through the localizer")
    p.add_argument("--in", dest="in_log", required=True, help="input run log")
    p.add_argument("--out", required=True, help="output estimate log")
    p.add_argument("--initial-pose", default=None, metavar='"X Y YAW"',
                   help="known start pose; omit for global startup")
    p.add_argument("--single-hypothesis", action="store_true",
                   help="cap the set at one population (plain-AMCL baseline)")
    p.add_argument("--emit-cpu", action="store_true",
                   help="include per-correction wall time in estimate records "
                        "(breaks byte-level reproducibility)")
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("match", parents=[common],
                       help="rank global pose candidates for one logged scan")
    p.add_argument("--log", required=True, help="run log containing scans")
    p.add_argument("--at", type=float, required=True, help="scan timestamp (s)")
    p.add_argument("--out", default=None, help="candidate CSV (default stdout)")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("bench", parents=[common],
                       help="score an estimate log against ground truth")
    p.add_argument("--est", dest="est_log", required=True, help="estimate log")
    p.add_argument("--gt", dest="gt_log", required=True, help="log with gt records")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--threshold", type=float, default=None,
                   help="recovery error threshold in meters")
    p.add_argument("--hold", type=float, default=None,
                   help="seconds the error must stay below the threshold")
    p.add_argument("--no-plots", action="store_true", help="skip PNG figures")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, MapFormatError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

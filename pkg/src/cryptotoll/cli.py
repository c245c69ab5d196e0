"""Command line front end.

`run` executes a batch of seeded sessions and writes the delimited output
files; `report` recomputes the feasibility report from a run directory and
renders ECDF figures alongside it.
"""
from __future__ import annotations

import argparse
import sys
from typing import List, Optional

from . import sim
from .config import ConfigError, MODES, ScenarioConfig


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cryptotoll",
        description="Deterministic toll-session simulator and feasibility harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run seeded trials and write samples + report")
    run.add_argument("--config", required=True, help="plain-text key/value scenario file")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument("--mode", choices=MODES, default=None, help="override the config mode")
    run.add_argument("--trials", type=int, default=None, help="override the trial count")
    run.add_argument("--out", required=True, help="output directory")

    report = sub.add_parser("report", help="recompute report + render figures for a run dir")
    report.add_argument("--in", dest="in_dir", required=True, help="directory written by run")
    report.add_argument(
        "--window-override",
        type=float,
        default=None,
        help="use this window (seconds) instead of the one derived from config.txt",
    )
    return parser


def _cmd_run(args: argparse.Namespace) -> int:
    config = ScenarioConfig.from_file(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.mode is not None:
        overrides["mode"] = args.mode
    if args.trials is not None:
        overrides["trials"] = args.trials
    if overrides:
        config = config.with_overrides(**overrides)
    config.validate()

    results = sim.run_trials(config)
    window_s = sim.window(config.comm_range_m, config.speed_kmh)
    report = sim.feasibility_report(results.samples, window_s)
    written = sim.write_run_outputs(args.out, results, report)

    print(f"ran {config.trials} trials (mode={config.mode}, seed={config.seed})")
    print(f"window_s={report.window_s:.4f}")
    print(f"session_total mean={report.total_mean_s:.4f}s p99={report.phases['session_total'].p99:.4f}s")
    print(f"fraction_within_window={report.fraction_within_window:.4f}")
    print(f"margin_s={report.margin_s:.4f}")
    for path in written:
        print(f"wrote {path}")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    from . import plotting  # heavyweight import kept off the run path

    samples = sim.read_samples(args.in_dir)
    if args.window_override is not None:
        window_s = args.window_override
    else:
        config = sim.read_run_config(args.in_dir)
        window_s = sim.window(config.comm_range_m, config.speed_kmh)
    report = sim.feasibility_report(samples, window_s)

    import json
    import os

    report_path = os.path.join(args.in_dir, "report.json")
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")
    figure_paths = plotting.render_figures(samples, args.in_dir, window_s)

    print(f"window_s={report.window_s:.4f}")
    for phase in sim.ALL_PHASES:
        stats = report.phases[phase]
        print(f"{phase}: mean={stats.mean:.4f}s p99={stats.p99:.4f}s n={stats.count}")
    print(f"fraction_within_window={report.fraction_within_window:.4f}")
    print(f"margin_s={report.margin_s:.4f}")
    print(f"wrote {report_path}")
    for path in figure_paths:
        print(f"wrote {path}")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "report":
            return _cmd_report(args)
    except (ConfigError, sim.HarnessError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    parser.error("unknown command")
    return 2


if __name__ == "__main__":
    sys.exit(main())

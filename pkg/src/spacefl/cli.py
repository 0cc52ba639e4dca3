"""Command-line interface.

Subcommands:
  windows  compute access windows and export them as CSV (or validate an
           imported window CSV and re-export it)
  run      execute a single simulation and write its run CSV + line plot
  sweep    execute (or enumerate with --dry-run) a parameter sweep
  report   aggregate run CSVs into heatmap CSVs and rendered figures

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, apply_profile, parse_config
from .contacts import export_windows_csv, import_windows_csv
from .report import METRICS, emit_report, render_run_lineplot
from .sim import build_timeline, run_simulation
from .stations import station_network
from .sweep import prepare_data, run_sweep, write_run_csv


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML config file")
    p.add_argument("--seed", type=int, help="override the run seed")
    p.add_argument("--profile", choices=["desk", "paper"],
                   help="scale profile (desk: 7-day horizon, reduced grid)")
    p.add_argument("--dataset", help="dataset spec, e.g. synthetic:n_classes=10 "
                                     "or femnist:<path>")
    p.add_argument("--out-dir", default="out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spacefl",
        description="Federated learning simulation over LEO constellations")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("windows", help="compute or validate access windows")
    _add_common(p)
    p.add_argument("--windows-in", help="import and validate an existing window CSV")
    p.set_defaults(func=cmd_windows)

    p = sub.add_parser("run", help="run a single simulation")
    _add_common(p)
    p.add_argument("--windows-in", help="use an imported window CSV instead of "
                                        "internal propagation")
    p.add_argument("--trace", action="store_true",
                   help="write a line-delimited event trace")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a parameter sweep")
    _add_common(p)
    p.add_argument("--dry-run", action="store_true",
                   help="enumerate sweep cells without running them")
    p.add_argument("--parallelism", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="aggregate runs into heatmaps and figures")
    p.add_argument("--runs", required=True, help="directory of run CSVs")
    p.add_argument("--metric", required=True, choices=sorted(METRICS))
    p.add_argument("--out-dir", default="out", help="output directory")
    p.set_defaults(func=cmd_report)
    return parser


def _resolve(args) -> "ResolvedConfig":
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "dataset", None):
        overrides["dataset"] = args.dataset
    resolved = parse_config(args.config, overrides)
    return apply_profile(resolved, args.profile)


def cmd_windows(args) -> int:
    resolved = _resolve(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.windows_in:
        stations = [g.name for g in station_network(resolved.sim.n_stations)]
        timeline = import_windows_csv(args.windows_in, station_order=stations)
        print(f"validated {args.windows_in}: "
              f"{sum(len(w) for w in timeline.ground.values())} ground windows")
    else:
        timeline = build_timeline(resolved.sim)
    path = out / "windows.csv"
    export_windows_csv(timeline, path)
    print(f"wrote {path}")
    return 0


def cmd_run(args) -> int:
    resolved = _resolve(args)
    cfg = resolved.sim
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.windows_in:
        stations = [g.name for g in station_network(cfg.n_stations)]
        timeline = import_windows_csv(args.windows_in, station_order=stations)
    else:
        timeline = build_timeline(cfg)
    datasets, test_set = prepare_data(cfg.constellation, resolved.dataset, cfg.seed)
    trace_path = str(out / "trace.jsonl") if args.trace else None
    log = run_simulation(cfg, datasets, test_set, timeline=timeline,
                         trace_path=trace_path)
    run_path = out / "run.csv"
    write_run_csv(run_path, cfg, resolved.dataset, log)
    render_run_lineplot(run_path, out / "run.png")
    print(f"wrote {run_path}")
    print(f"rounds={len(log.rounds)} max_accuracy={log.max_accuracy:.4f} "
          f"mean_round_duration_h={log.mean_round_duration_h:.4f} "
          f"idle_s_per_sat_per_hour={log.idle_s_per_sat_per_hour:.1f}")
    if log.note:
        print(f"note: {log.note}")
    return 0


def cmd_sweep(args) -> int:
    resolved = _resolve(args)
    sweep = resolved.sweep
    if sweep is None:
        resolved = apply_profile(resolved, "paper")
        sweep = resolved.sweep
    cells = sweep.cells()
    if args.dry_run:
        for cell in cells:
            print(cell.key)
        print(f"total_cells={len(cells)}")
        return 0
    written = run_sweep(sweep, resolved.sim, resolved.dataset,
                        args.out_dir, parallelism=args.parallelism)
    print(f"wrote {len(written)} run CSVs to {args.out_dir}")
    failures = Path(args.out_dir) / "failures.csv"
    if failures.exists():
        print(f"some cells failed; see {failures}")
    return 0


def cmd_report(args) -> int:
    csv_path, figures = emit_report(args.runs, args.metric, args.out_dir)
    print(f"wrote {csv_path}")
    for fig in figures:
        print(f"wrote {fig}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

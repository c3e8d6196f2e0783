"""Command-line front end.

Subcommands: track, sweep, ramp, characterize, report. Exit codes:
0 success, 2 bad usage or invalid/missing configuration (the message
names the offending field), 3 infeasible schedule.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import engine, report as report_mod
from .config import ConfigError, load_config
from .control import InfeasibleScheduleError
from .powermodel import InterfaceKind

__all__ = ["main"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3

_INTERFACE_NAMES = tuple(k.value for k in InterfaceKind)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drsim",
        description="Deterministic demand-response simulator for a server cluster.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--config", help="INI config file (defaults used when omitted)")
        p.add_argument("--out", default="report", help="report output directory")
        p.add_argument("--seed", type=int, help="override the root seed")
        p.add_argument("--duration", type=float, help="override experiment duration [s]")
        p.add_argument("--no-plots", action="store_true", help="skip SVG plot generation")

    p_track = sub.add_parser("track", help="closed- or open-loop power tracking")
    common(p_track)
    p_track.add_argument("--controller", choices=("integral", "open-loop"))
    p_track.add_argument("--gain", type=float, help="integral gain per watt per update")

    p_sweep = sub.add_parser("sweep", help="model-accuracy sweep (userspace interface)")
    common(p_sweep)

    p_ramp = sub.add_parser("ramp", help="synchronized idle/full ramp experiment")
    common(p_ramp)

    p_char = sub.add_parser("characterize", help="per-interface power statistics sweep")
    common(p_char)
    p_char.add_argument("--interface", choices=_INTERFACE_NAMES, required=False)
    p_char.add_argument("--outlier", choices=("mad", "iqr10"))

    p_rep = sub.add_parser("report", help="regenerate summary and plots from a report dir")
    p_rep.add_argument("dir", help="existing report directory (contains metrics.csv)")
    p_rep.add_argument("--no-plots", action="store_true")
    return parser


def _overrides_from_args(args) -> dict:
    ov: dict = {}
    if args.seed is not None:
        ov["seed"] = args.seed
    if args.duration is not None:
        ov["duration_s"] = args.duration
    if getattr(args, "controller", None):
        ov["controller_kind"] = args.controller
    if getattr(args, "gain", None) is not None:
        ov["controller_gain"] = args.gain
    if getattr(args, "interface", None):
        ov["interface"] = args.interface
    if getattr(args, "outlier", None):
        ov["outlier"] = args.outlier
    return ov


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)

    if args.subcommand == "report":
        return _regenerate(args)

    if args.config is not None and not os.path.exists(args.config):
        print(f"error: config file not found: {args.config}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config, **_overrides_from_args(args))
    except ConfigError as exc:
        print(f"error: invalid config value ({exc})", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.subcommand == "track":
            rep = engine.run_tracking(cfg)
        elif args.subcommand == "sweep":
            rep = engine.run_model_accuracy_sweep(cfg)
        elif args.subcommand == "ramp":
            rep = engine.run_ramp(cfg)
        elif args.subcommand == "characterize":
            rep = engine.run_characterization(cfg)
        else:  # pragma: no cover - argparse enforces the choices
            parser.error(f"unknown subcommand {args.subcommand}")
    except InfeasibleScheduleError as exc:
        print(f"error: infeasible schedule: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    rdir = report_mod.write_report(rep, args.out, plots=not args.no_plots)
    print(f"report written to {rdir}")
    for line in rep.summary_lines():
        print(f"  {line}")
    return EXIT_OK


def _regenerate(args) -> int:
    """Rebuild summary.txt (and plots) from an existing report directory."""
    rdir = args.dir
    metrics_path = os.path.join(rdir, "metrics.csv")
    trace_path = os.path.join(rdir, "trace.csv")
    if not (os.path.isdir(rdir) and os.path.exists(metrics_path) and os.path.exists(trace_path)):
        print(f"error: {rdir} is not a report directory", file=sys.stderr)
        return EXIT_CONFIG

    def read_csv(path):
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            rows = []
            for line in fh:
                cells = line.rstrip("\n").split(",")
                rows.append(tuple(_maybe_num(c) for c in cells))
        return tuple(header), rows

    trace_cols, trace_rows = read_csv(trace_path)
    metrics_cols, metrics_rows = read_csv(metrics_path)
    kind = os.path.basename(os.path.normpath(rdir))
    snap_path = os.path.join(rdir, "config.snapshot")
    snap = open(snap_path).read() if os.path.exists(snap_path) else ""
    seed = -1
    for line in snap.splitlines():
        if line.strip().startswith("seed"):
            seed = int(line.split("=")[1])
            break

    scalars: dict = {}
    if metrics_cols == ("name", "value"):
        scalars = {name: value for name, value in metrics_rows}
    elif metrics_cols and metrics_cols[0] == "tau" and "rmse_watts" in metrics_cols:
        rmses = [row[1] for row in metrics_rows]
        scalars = {"max_rmse_watts": max(rmses), "min_rmse_watts": min(rmses)}
    elif metrics_cols and metrics_cols[0] == "tau" and "mean_watts" in metrics_cols:
        import numpy as np

        taus = np.array([row[0] for row in metrics_rows], dtype=float)
        means = np.array([row[3] for row in metrics_rows], dtype=float)
        coef = np.polyfit(taus, means, 1)
        scalars = {
            "linear_fit_residual_watts": float(np.max(np.abs(means - np.polyval(coef, taus)))),
            "span_watts": float(means.max() - means.min()),
        }
    rep = engine.ExperimentReport(
        kind=kind,
        seed=seed,
        config_snapshot=snap,
        trace_columns=trace_cols,
        trace_rows=trace_rows,
        metrics_columns=metrics_cols,
        metrics_rows=metrics_rows,
        scalars=scalars,
    )
    with open(os.path.join(rdir, "summary.txt"), "w") as fh:
        fh.write("\n".join(rep.summary_lines()) + "\n")
    if not args.no_plots:
        report_mod.render_plots(rep, rdir)
    print(f"report regenerated in {rdir}")
    return EXIT_OK


def _maybe_num(cell: str):
    try:
        f = float(cell)
    except ValueError:
        return cell
    return int(f) if f.is_integer() and "." not in cell and "e" not in cell.lower() else f


if __name__ == "__main__":
    raise SystemExit(main())

"""Report directory writer: CSV traces, metrics, summary, and SVG plots.

Layout per run: <outdir>/<experiment>/{config.snapshot, trace.csv,
metrics.csv, summary.txt, *.svg} plus experiment-specific tables
(tau.csv, deliveries.csv). Numbers are formatted with %.10g so repeated
runs of the same config and seed produce byte-identical files.
"""

from __future__ import annotations

import os

from .engine import ExperimentReport

__all__ = ["write_report", "render_plots"]


def _cell(value) -> str:
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def _write_csv(path: str, columns, rows) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row) + "\n")


def write_report(report: ExperimentReport, outdir: str, plots: bool = True) -> str:
    """Write all artifacts for one experiment; returns the report directory."""
    rdir = os.path.join(outdir, report.kind)
    os.makedirs(rdir, exist_ok=True)
    with open(os.path.join(rdir, "config.snapshot"), "w") as fh:
        fh.write(report.config_snapshot)
    _write_csv(os.path.join(rdir, "trace.csv"), report.trace_columns, report.trace_rows)
    _write_csv(os.path.join(rdir, "metrics.csv"), report.metrics_columns, report.metrics_rows)
    for name, (columns, rows) in report.extra_tables.items():
        _write_csv(os.path.join(rdir, f"{name}.csv"), columns, rows)
    with open(os.path.join(rdir, "summary.txt"), "w") as fh:
        fh.write("\n".join(report.summary_lines()) + "\n")
    if plots:
        render_plots(report, rdir)
    return rdir


def render_plots(report: ExperimentReport, rdir: str) -> None:
    """Emit SVG charts for the experiment (skippable with --no-plots)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    kind = report.kind
    if kind in ("track", "ramp"):
        _plot_power_trace(plt, report, rdir)
    elif kind == "sweep":
        _plot_rmse_curve(plt, report, rdir)
    elif kind.startswith("characterize"):
        _plot_characterization(plt, report, rdir)


def _series(report, channel):
    t = [r[0] for r in report.trace_rows if r[1] == channel]
    w = [r[2] for r in report.trace_rows if r[1] == channel]
    return t, w


def _save(fig, rdir, name):
    fig.savefig(os.path.join(rdir, name), format="svg")


def _plot_power_trace(plt, report, rdir):
    fig, ax = plt.subplots(figsize=(8, 4))
    t, w = _series(report, "cluster")
    ax.plot(t, w, label="cluster power", lw=1.0)
    ts, ws = _series(report, "setpoint")
    if ts:
        ax.step(ts, ws, where="post", label="setpoint", lw=1.0, ls="--")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("power [W]")
    ax.legend(loc="best")
    fig.tight_layout()
    _save(fig, rdir, "power_trace.svg")
    plt.close(fig)


def _plot_rmse_curve(plt, report, rdir):
    fig, ax = plt.subplots(figsize=(8, 4))
    tau = [r[0] for r in report.metrics_rows]
    rm = [r[1] for r in report.metrics_rows]
    ax.plot(tau, rm, lw=1.0)
    ax.set_xlabel("duty cycle")
    ax.set_ylabel("RMSE [W]")
    fig.tight_layout()
    _save(fig, rdir, "rmse_curve.svg")
    plt.close(fig)


def _plot_characterization(plt, report, rdir):
    rows = report.metrics_rows
    tau = [r[0] for r in rows]
    mean = [r[3] for r in rows]
    sd = [r[4] for r in rows]
    lo = [r[5] for r in rows]
    hi = [r[6] for r in rows]

    fig, ax = plt.subplots(figsize=(8, 4))
    ax.fill_between(tau, lo, hi, alpha=0.25, label="conservative range")
    ax.plot(tau, mean, lw=1.2, label="mean power")
    ax.set_xlabel("duty cycle")
    ax.set_ylabel("power [W]")
    ax.legend(loc="best")
    fig.tight_layout()
    _save(fig, rdir, "power_means.svg")
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(8, 4))
    ax.plot(tau, sd, lw=1.2)
    ax.set_xlabel("duty cycle")
    ax.set_ylabel("stddev [W]")
    fig.tight_layout()
    _save(fig, rdir, "power_stddevs.svg")
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(8, 4))
    for idx, label in ((7, "busy"), (8, "avg p-state"), (9, "c1"), (10, "c6")):
        ax.plot(tau, [r[idx] for r in rows], lw=1.0, label=label)
    ax.set_xlabel("duty cycle")
    ax.set_ylabel("fraction")
    ax.legend(loc="best")
    fig.tight_layout()
    _save(fig, rdir, "residency_means.svg")
    plt.close(fig)

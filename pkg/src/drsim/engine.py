"""Deterministic discrete-event orchestration of the four experiments.

A single logical clock ticks at the raw sampling rate; windows close,
datagrams deliver, and controllers update on that clock, so a given
(config, seed) pair always produces byte-identical reports. One root
seed is split into named substreams (channel, sensors, one per server)
so enabling one noise source never perturbs the others.

Experiments:
  run_tracking            closed- or open-loop power tracking of a
                          piecewise-constant regulation schedule
  run_model_accuracy_sweep RMSE of the linear model over a duty-cycle grid
  run_ramp                synchronized idle<->full transitions
  run_characterization    per-interface power / residency statistics
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels, stats
from .config import ExperimentConfig, snapshot
from .control import InfeasibleScheduleError, IntegralController, SetpointSchedule, open_loop_tau
from .netsim import ControlCommand, Datagram, MulticastChannel
from .powermodel import (
    InterfaceKind,
    interface_params,
    mean_power,
    residency,
    tick_noise_sigma,
)
from .sensing import ErrorSample, SensorChannel

__all__ = [
    "ExperimentReport",
    "run_tracking",
    "run_model_accuracy_sweep",
    "run_ramp",
    "run_characterization",
]


@dataclass
class ExperimentReport:
    """Everything one experiment produced, ready for the report writer."""

    kind: str
    seed: int
    config_snapshot: str
    trace_columns: tuple[str, ...]
    trace_rows: list[tuple]
    metrics_columns: tuple[str, ...]
    metrics_rows: list[tuple]
    scalars: dict[str, float | int | str] = field(default_factory=dict)
    extra_tables: dict[str, tuple[tuple[str, ...], list[tuple]]] = field(default_factory=dict)

    def summary_lines(self) -> list[str]:
        lines = [f"experiment = {self.kind}", f"seed = {self.seed}"]
        for key in sorted(self.scalars):
            v = self.scalars[key]
            lines.append(f"{key} = {v:.6g}" if isinstance(v, float) else f"{key} = {v}")
        return lines


def _spawn_rngs(seed: int, n_servers: int):
    """Root seed -> (channel, sensor, per-server model noise) generators."""
    children = np.random.SeedSequence(seed).spawn(2 + n_servers)
    gens = [np.random.Generator(np.random.PCG64(c)) for c in children]
    return gens[0], gens[1], gens[2:]


class _Server:
    """Simulated server: duty cycle in, lagged noisy true power out."""

    def __init__(self, idx, params, sensor, rng, lag_s, dt):
        self.idx = idx
        self.params = params
        self.sensor = sensor
        self.rng = rng
        self.dt = dt
        self.decay = math.exp(-dt / lag_s) if lag_s > 0 else 0.0
        self.tau = 0.0
        self.p_mean = mean_power(params, 0.0)

    def set_tau(self, tau: float) -> None:
        self.tau = float(np.clip(tau, 0.0, 1.0))

    def true_power(self, n_ticks: int) -> np.ndarray:
        """Advance the power state n_ticks and return true watts per tick.

        Tick-level fluctuations are referred to the block window, so they
        are much wider than block-averaged noise; only the physical
        floor at zero watts applies here.
        """
        target = mean_power(self.params, self.tau)
        traj = _kernels.slew_trace(self.p_mean, target, self.decay, n_ticks)
        self.p_mean = float(traj[-1])
        sigma = tick_noise_sigma(self.params, self.tau, self.dt)
        if sigma > 0.0:
            traj = traj + sigma * self.rng.standard_normal(n_ticks)
        return np.maximum(traj, 0.0)


class _Cluster:
    """Servers, sensors, channel, and the window-by-window event loop."""

    def __init__(self, cfg: ExperimentConfig, n_servers: int | None = None, window_s: float | None = None):
        self.cfg = cfg
        self.n = cfg.n_servers if n_servers is None else n_servers
        self.window = cfg.window_s if window_s is None else window_s
        self.dt = 1.0 / cfg.sensor.raw_rate_hz
        self.ticks_per_window = int(round(self.window / self.dt))
        rng_channel, rng_sensor, rng_servers = _spawn_rngs(cfg.seed, self.n)
        self.channel = MulticastChannel(cfg.channel, rng_channel)
        params = interface_params(cfg.interface, cfg.preset)
        if cfg.model_noise_scale != 1.0:
            params = replace(
                params,
                sigma_base_watts=params.sigma_base_watts * cfg.model_noise_scale,
                sigma_boundary_watts=params.sigma_boundary_watts * cfg.model_noise_scale,
            )
        self.servers = []
        for i in range(self.n):
            sensor = SensorChannel(cfg.sensor, rng_sensor)
            self.servers.append(_Server(i, params, sensor, rng_servers[i], cfg.power_lag_s, self.dt))
            self.channel.subscribe(i)
        self.params = params
        # event queue entries: (tick, seq, server_idx, payload)
        self._events: list[tuple[int, int, int, object]] = []
        self._seq = 0

    @property
    def idle_watts(self) -> float:
        return self.n * self.params.base.i_watts

    @property
    def max_watts(self) -> float:
        return self.n * (self.params.base.i_watts + self.params.base.k_watts)

    def push_deliveries(self, deliveries) -> None:
        for d in deliveries:
            if d.dropped:
                continue
            tick = int(math.ceil(d.recv_t / self.dt - 1e-9))
            heapq.heappush(self._events, (tick, self._seq, d.subscriber, d.payload))
            self._seq += 1

    def run_windows(self, n_windows: int, on_window_close, on_payload) -> None:
        """Advance the clock window by window.

        on_payload(server, payload, t) applies a delivered datagram;
        on_window_close(w, t_end, per_server_watts) sees each finished
        block average and may publish new datagrams.
        """
        W = self.ticks_per_window
        for w in range(n_windows):
            start_tick = w * W
            end_tick = (w + 1) * W
            # events landing in this window, grouped per server in time order
            window_events: dict[int, list[tuple[int, object]]] = {}
            while self._events and self._events[0][0] < end_tick:
                tick, _, sidx, payload = heapq.heappop(self._events)
                window_events.setdefault(sidx, []).append((max(tick, start_tick), payload))

            t0 = start_tick * self.dt
            watts = np.empty(self.n)
            for s in self.servers:
                true_w = np.empty(W)
                pos = start_tick
                for tick, payload in window_events.get(s.idx, []) + [(end_tick, None)]:
                    if tick > pos:
                        true_w[pos - start_tick : tick - start_tick] = s.true_power(tick - pos)
                        pos = tick
                    if payload is not None:
                        on_payload(s, payload, tick * self.dt)
                measured = s.sensor.measure_trace(true_w, t0)
                watts[s.idx] = _kernels.block_means(measured, W)[0]
            on_window_close(w, end_tick * self.dt, watts)

    def hold(self, server: _Server, hold_s: float, window_s: float, t0: float) -> tuple[np.ndarray, np.ndarray]:
        """Synthesize one constant-duty-cycle hold and return block samples."""
        n_ticks = int(round(hold_s / self.dt))
        true_w = server.true_power(n_ticks)
        measured = server.sensor.measure_trace(true_w, t0)
        m = int(round(window_s / self.dt))
        means = _kernels.block_means(measured, m)
        ends = t0 + m * self.dt * np.arange(1, len(means) + 1)
        return ends, means


def _fmt(x: float) -> float:
    return float(x)


def run_tracking(cfg: ExperimentConfig) -> ExperimentReport:
    """Track the regulation schedule with per-server controllers.

    Closed-loop servers integrate the multicast tracking error; open-loop
    servers invert the linear model for their share of the setpoint.
    Raises InfeasibleScheduleError before simulating when the schedule
    commands power outside the cluster's physical range.
    """
    schedule = cfg.schedule()
    cluster = _Cluster(cfg)
    schedule.check_feasible(cluster.idle_watts, cluster.max_watts)

    open_loop = cfg.controller_kind == "open-loop"
    controllers = [IntegralController(gain=cfg.controller_gain) for _ in range(cluster.n)]
    model = cluster.params.base

    trace_rows: list[tuple] = []
    tau_rows: list[tuple] = []
    t_list: list[float] = []
    cluster_list: list[float] = []
    setpoint_list: list[float] = []
    server_watts: list[np.ndarray] = []

    def on_payload(server: _Server, payload, t: float) -> None:
        if isinstance(payload, ErrorSample):
            if open_loop:
                target_share = schedule.setpoint_at(payload.t) / cluster.n
                tau = open_loop_tau(model, target_share)
            else:
                tau = controllers[server.idx].update(payload.e_watts)
            server.set_tau(tau)
            tau_rows.append((t, server.idx, payload.e_watts, tau))

    def on_window_close(w: int, t_end: float, watts: np.ndarray) -> None:
        total = float(watts.sum())
        p_set = schedule.setpoint_at(t_end)
        t_list.append(t_end)
        cluster_list.append(total)
        setpoint_list.append(p_set)
        server_watts.append(watts.copy())
        e = p_set - total
        deliveries = cluster.channel.publish(Datagram(send_t=t_end, payload=ErrorSample(t_end, e)))
        cluster.push_deliveries(deliveries)

    n_windows = int(round(cfg.duration_s / cluster.window))
    cluster.run_windows(n_windows, on_window_close, on_payload)

    t = np.array(t_list)
    measured = np.array(cluster_list)
    setpoints = np.array(setpoint_list)
    per_server = np.array(server_watts)

    for i, t_end in enumerate(t_list):
        for s in range(cluster.n):
            trace_rows.append((t_end, f"server{s}", _fmt(per_server[i, s])))
        trace_rows.append((t_end, "cluster", _fmt(measured[i])))
        trace_rows.append((t_end, "setpoint", _fmt(setpoints[i])))

    rms_error = stats.rmse(measured - setpoints, 0.0)
    score = stats.precision_score(t, setpoints, measured, cfg.b_watts)
    server_scores = []
    for s in range(cluster.n):
        server_scores.append(
            stats.precision_score(t, setpoints / cluster.n, per_server[:, s], cfg.b_watts / cluster.n)
        )
    settle = _max_settling_time(t, measured, schedule)

    scalars = {
        "rms_error_watts": rms_error,
        "precision_score": score,
        "precision_score_min": min(server_scores + [score]),
        "max_settling_time_s": settle,
        "controller": cfg.controller_kind,
        "score_definition": stats.PRECISION_SCORE_FLAG,
        "kernel_backend": _kernels.backend(),
        "n_windows": n_windows,
    }
    metrics_rows = [(k, v) for k, v in sorted(scalars.items())]
    return ExperimentReport(
        kind="track",
        seed=cfg.seed,
        config_snapshot=snapshot(cfg),
        trace_columns=("t", "channel", "watts"),
        trace_rows=trace_rows,
        metrics_columns=("name", "value"),
        metrics_rows=metrics_rows,
        scalars=scalars,
        extra_tables={
            "tau": (("t", "server", "e_watts", "tau"), tau_rows),
            "deliveries": (("send_t", "recv_t", "subscriber", "kind", "dropped"), cluster.channel.log_rows()),
        },
    )


def _max_settling_time(t: np.ndarray, measured: np.ndarray, schedule: SetpointSchedule) -> float:
    """Largest per-step settling time: after each setpoint change, the first
    time beyond which power stays inside +/-5% of the schedule's dynamic
    range around the new target, until the next change.

    A 3-sample running median removes isolated sensor-noise excursions so
    a single outlier near a segment end cannot masquerade as a late settle.
    """
    band = 0.05 * schedule.d_watts
    smooth = measured.copy()
    if len(measured) >= 3:
        stacked = np.vstack([measured[:-2], measured[1:-1], measured[2:]])
        smooth[1:-1] = np.median(stacked, axis=0)
    starts = [seg[0] for seg in schedule.segments] + [float(t[-1]) + 1.0]
    worst = 0.0
    for k in range(len(schedule.segments)):
        t_step, s = schedule.segments[k][0], schedule.segments[k][1]
        target = schedule.d_watts * s + schedule.b_watts
        sel = (t > t_step) & (t <= starts[k + 1])
        if not sel.any():
            continue
        tt, ww = t[sel], smooth[sel]
        outside = np.abs(ww - target) > band
        if outside.any():
            last = np.flatnonzero(outside)[-1]
            settle_t = tt[last + 1] if last + 1 < len(tt) else tt[-1] + (tt[1] - tt[0])
        else:
            settle_t = tt[0]
        worst = max(worst, float(settle_t - t_step))
    return worst


def run_model_accuracy_sweep(cfg: ExperimentConfig) -> ExperimentReport:
    """Hold each of sweep_points duty cycles and compare measured block
    power against the linear model prediction (RMSE per duty cycle).

    Only meaningful for the userspace interface, whose characteristic the
    linear model is calibrated to; other interfaces raise ValueError.
    """
    if cfg.interface is not InterfaceKind.USERSPACE_IDLE_INJECTION:
        raise ValueError("model-accuracy sweep requires the userspace interface")
    cluster = _Cluster(cfg, n_servers=1, window_s=cfg.window_s)
    server = cluster.servers[0]
    model = cluster.params.base

    grid = np.linspace(0.0, 1.0, cfg.sweep_points)
    trace_rows: list[tuple] = []
    points: list[tuple[float, float]] = []
    t0 = 0.0
    for tau in grid:
        server.set_tau(float(tau))
        ends, means = cluster.hold(server, cfg.sweep_hold_s, cfg.window_s, t0)
        t0 = float(ends[-1])
        points.append((_fmt(tau), stats.rmse(means, float(model.predict(tau)))))
        for te, m in zip(ends, means):
            trace_rows.append((_fmt(te), "server0", _fmt(m)))

    n_per_point = int(round(cfg.sweep_hold_s / cfg.window_s))
    curve = stats.RmseCurve(points=tuple(points), window=cfg.window_s, n=n_per_point)
    metrics_rows = [(tau, _fmt(r), curve.n) for tau, r in curve.points]
    scalars = {
        "max_rmse_watts": curve.max_rmse(),
        "min_rmse_watts": min(r for _, r in curve.points),
        "n_points": cfg.sweep_points,
        "n_per_point": curve.n,
        "window_s": curve.window,
        "kernel_backend": _kernels.backend(),
    }
    return ExperimentReport(
        kind="sweep",
        seed=cfg.seed,
        config_snapshot=snapshot(cfg),
        trace_columns=("t", "channel", "watts"),
        trace_rows=trace_rows,
        metrics_columns=("tau", "rmse_watts", "n"),
        metrics_rows=metrics_rows,
        scalars=scalars,
    )


def run_ramp(cfg: ExperimentConfig) -> ExperimentReport:
    """Broadcast synchronized start/stop commands and measure the cluster's
    fastest possible power transitions."""
    if not 0.0 < cfg.ramp_start_s < cfg.ramp_stop_s < cfg.ramp_duration_s:
        raise ValueError("ramp requires 0 < ramp_start_s < ramp_stop_s < ramp_duration_s")
    cluster = _Cluster(cfg)

    t_list: list[float] = []
    cluster_list: list[float] = []
    server_watts: list[np.ndarray] = []
    commands_sent = set()

    def on_payload(server: _Server, payload, t: float) -> None:
        if payload is ControlCommand.START_LOAD:
            server.set_tau(1.0)
        elif payload is ControlCommand.STOP_LOAD:
            server.set_tau(0.0)

    def on_window_close(w: int, t_end: float, watts: np.ndarray) -> None:
        t_list.append(t_end)
        cluster_list.append(float(watts.sum()))
        server_watts.append(watts.copy())
        for when, cmd in ((cfg.ramp_start_s, ControlCommand.START_LOAD), (cfg.ramp_stop_s, ControlCommand.STOP_LOAD)):
            if t_end >= when and (when, cmd) not in commands_sent:
                commands_sent.add((when, cmd))
                cluster.push_deliveries(cluster.channel.broadcast_sync_command(t_end, cmd))

    n_windows = int(round(cfg.ramp_duration_s / cluster.window))
    cluster.run_windows(n_windows, on_window_close, on_payload)

    t = np.array(t_list)
    w = np.array(cluster_list)
    up_sel = t <= cfg.ramp_stop_s
    up = stats.ramp_metrics(t[up_sel], w[up_sel])
    down_range = float(np.mean(w[up_sel][-3:]) - np.mean(w[~up_sel][-3:]))

    trace_rows = []
    per_server = np.array(server_watts)
    for i, t_end in enumerate(t_list):
        for s in range(cluster.n):
            trace_rows.append((t_end, f"server{s}", _fmt(per_server[i, s])))
        trace_rows.append((t_end, "cluster", _fmt(w[i])))

    scalars = {
        "dynamic_range_watts": up["dynamic_range"],
        "ramp_rate_wps": up["ramp_rate"],
        "rise_time_s": up["rise_time"],
        "settling_time_s": up["settling_time"],
        "idle_watts": up["idle_watts"],
        "full_watts": up["full_watts"],
        "down_range_watts": down_range,
        "kernel_backend": _kernels.backend(),
    }
    metrics_rows = [(k, v) for k, v in sorted(scalars.items())]
    return ExperimentReport(
        kind="ramp",
        seed=cfg.seed,
        config_snapshot=snapshot(cfg),
        trace_columns=("t", "channel", "watts"),
        trace_rows=trace_rows,
        metrics_columns=("name", "value"),
        metrics_rows=metrics_rows,
        scalars=scalars,
        extra_tables={
            "deliveries": (("send_t", "recv_t", "subscriber", "kind", "dropped"), cluster.channel.log_rows()),
        },
    )


def _iqr10_filter(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Alternate outlier rule: reject beyond 10x the interquartile range."""
    q1, q3 = np.percentile(samples, [25.0, 75.0])
    iqr = q3 - q1
    band = max(10.0 * iqr, 1e-9)
    keep = (samples >= q1 - band) & (samples <= q3 + band)
    return samples[keep], samples[~keep]


def run_characterization(cfg: ExperimentConfig, kind: InterfaceKind | None = None) -> ExperimentReport:
    """Sweep the duty-cycle grid on one server, recording power statistics
    (after outlier rejection) and the processor state residency per point."""
    if kind is None:
        kind = cfg.interface
    cfg = replace(cfg, interface=kind)
    cluster = _Cluster(cfg, n_servers=1, window_s=cfg.characterize_window_s)
    server = cluster.servers[0]
    params = cluster.params

    grid = np.linspace(0.0, 1.0, cfg.characterize_points)
    trace_rows: list[tuple] = []
    metrics_rows: list[tuple] = []
    means = np.empty_like(grid)
    busy = np.empty_like(grid)
    t0 = 0.0
    warmup_blocks = 1  # first block of each hold still carries the actuation lag

    for k, tau in enumerate(grid):
        server.set_tau(float(tau))
        ends, blocks = cluster.hold(server, cfg.characterize_hold_s, cfg.characterize_window_s, t0)
        t0 = float(ends[-1])
        samples = blocks[warmup_blocks:]
        if cfg.outlier == "iqr10":
            kept, rejected = _iqr10_filter(samples)
        else:
            kept, rejected = stats.mad_filter(samples)
        band = stats.conservative_range(kept, n_rejected=len(rejected))
        prof = residency(params, float(tau))
        means[k] = band.mean
        busy[k] = prof.busy_frac
        metrics_rows.append(
            (
                _fmt(tau),
                len(samples),
                band.n_rejected,
                _fmt(band.mean),
                _fmt(float(np.std(kept, ddof=1))),
                _fmt(band.lo),
                _fmt(band.hi),
                _fmt(prof.busy_frac),
                _fmt(prof.pstate_avg),
                _fmt(prof.c1_frac),
                _fmt(prof.c6_frac),
            )
        )
        for te, m in zip(ends, blocks):
            trace_rows.append((_fmt(te), "server0", _fmt(m)))

    resid = stats.linear_fit_residual(grid, means)
    busy_slope = float(np.polyfit(grid, busy, 1)[0])
    span = float(means.max() - means.min())
    scalars = {
        "interface": kind.value,
        "linear_fit_residual_watts": resid,
        "busy_slope": busy_slope,
        "span_watts": span,
        "span_fraction": span / params.base.k_watts,
        "outlier_method": cfg.outlier,
        "kernel_backend": _kernels.backend(),
    }
    if params.n_levels:
        scalars["distinct_levels"] = _count_levels(params, means)
    return ExperimentReport(
        kind=f"characterize-{kind.value}",
        seed=cfg.seed,
        config_snapshot=snapshot(cfg),
        trace_columns=("t", "channel", "watts"),
        trace_rows=trace_rows,
        metrics_columns=(
            "tau",
            "n",
            "n_rejected",
            "mean_watts",
            "stddev_watts",
            "lo_watts",
            "hi_watts",
            "busy_frac",
            "pstate_avg",
            "c1_frac",
            "c6_frac",
        ),
        metrics_rows=metrics_rows,
        scalars=scalars,
    )


def _count_levels(params, means: np.ndarray) -> int:
    """Cluster group means into discrete setpoint levels: split sorted means
    wherever the gap exceeds half the smallest designed level spacing."""
    levels = mean_power(params, np.arange(params.n_levels) / (params.n_levels - 1))
    threshold = float(np.min(np.diff(levels))) / 2.0
    ordered = np.sort(means)
    return int(1 + np.sum(np.diff(ordered) > threshold))

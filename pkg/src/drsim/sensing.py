"""Monitor-side measurement pipeline.

A shunt-amplifier channel per server turns true instantaneous power into
raw samples (systematic gain error within +/-1.6%, optional 120 Hz ripple
and additive noise), and the monitor reduces raw streams to fixed-phase
block averages before computing the tracking error against the setpoint.

Block windows are aligned to the sample clock, not to line zero
crossings, so when ripple is enabled and its period does not divide the
window, block means pick up extra variance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels

__all__ = [
    "RawSample",
    "PowerSample",
    "ErrorSample",
    "SensorConfig",
    "SensorChannel",
    "block_average",
    "block_average_arrays",
    "compute_error",
    "write_stream_csv",
]


@dataclass(frozen=True)
class RawSample:
    """One instantaneous power reading."""

    t: float
    watts: float

    def __post_init__(self):
        if self.watts < 0:
            raise ValueError("watts must be non-negative")


@dataclass(frozen=True)
class PowerSample:
    """Block-averaged power over the window ending at t_end."""

    t_end: float
    watts: float
    window: float

    def __post_init__(self):
        if self.window <= 0:
            raise ValueError("window must be positive")
        if self.watts < 0:
            raise ValueError("watts must be non-negative")


@dataclass(frozen=True)
class ErrorSample:
    """Tracking error streamed to the servers: setpoint minus measured."""

    t: float
    e_watts: float


@dataclass(frozen=True)
class SensorConfig:
    """Measurement-chain parameters for one current channel.

    gain_tolerance bounds the fixed per-channel gain miscalibration;
    ripple_amp is the relative amplitude of the rectified line-frequency
    component (off by default); additive_sigma_watts is white sensor
    noise per raw sample (none modeled by default).
    """

    gain_tolerance: float = 0.016
    ripple_amp: float = 0.0
    ripple_freq_hz: float = 120.0
    additive_sigma_watts: float = 0.0
    raw_rate_hz: float = 1000.0

    def __post_init__(self):
        if self.gain_tolerance < 0 or self.ripple_amp < 0 or self.additive_sigma_watts < 0:
            raise ValueError("sensor noise parameters must be non-negative")
        if self.raw_rate_hz <= 0:
            raise ValueError("raw_rate_hz must be positive")


class SensorChannel:
    """One instrumented channel with its fixed gain error and ripple phase.

    The gain error is drawn once at construction (a shunt miscalibration,
    systematic for the whole run); ripple phase likewise.
    """

    def __init__(self, cfg: SensorConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.gain_err = float(rng.uniform(-cfg.gain_tolerance, cfg.gain_tolerance))
        self.ripple_phase = float(rng.uniform(0.0, 2.0 * np.pi))
        self._rng = rng

    def synthesize_raw(self, true_watts: float, t: float) -> RawSample:
        """Measure one instantaneous true power value."""
        if true_watts < 0:
            raise ValueError("true_watts must be non-negative")
        w = self.measure_trace(np.array([true_watts]), t)[0]
        return RawSample(t=t, watts=max(w, 0.0))

    def measure_trace(self, true_watts: np.ndarray, t0: float) -> np.ndarray:
        """Measure a uniform-rate trace of true power starting at t0."""
        dt = 1.0 / self.cfg.raw_rate_hz
        out = _kernels.sensor_trace(
            true_watts,
            self.gain_err,
            self.cfg.ripple_amp,
            2.0 * np.pi * self.cfg.ripple_freq_hz,
            self.ripple_phase,
            t0,
            dt,
        )
        if self.cfg.additive_sigma_watts > 0.0:
            out = out + self.cfg.additive_sigma_watts * self._rng.standard_normal(out.shape)
        return out


def block_average_arrays(
    t: np.ndarray, watts: np.ndarray, window: float
) -> tuple[np.ndarray, np.ndarray]:
    """Fixed-phase block averaging of a uniform raw stream.

    Returns (window end times, window means); a trailing partial window
    emits nothing. The window must be a positive whole multiple of the
    raw sampling period.
    """
    if len(t) < 2:
        raise ValueError("need at least two raw samples")
    dt = float(t[1] - t[0])
    m = window / dt
    m_int = int(round(m))
    if m_int < 1 or abs(m - m_int) > 1e-6:
        raise ValueError("window must be a positive multiple of the raw period")
    means = _kernels.block_means(np.asarray(watts, float), m_int)
    ends = float(t[0]) + m_int * dt * np.arange(1, len(means) + 1)
    return ends, means


def block_average(stream: list[RawSample], window: float) -> list[PowerSample]:
    """Block-average a list of RawSamples into PowerSamples."""
    if not stream:
        return []
    t = np.array([s.t for s in stream])
    w = np.array([s.watts for s in stream])
    ends, means = block_average_arrays(t, w, window)
    return [PowerSample(t_end=float(te), watts=float(m), window=window) for te, m in zip(ends, means)]


def compute_error(p_set: float, measured_cluster: PowerSample) -> ErrorSample:
    """Tracking error for one window: positive when the cluster is under
    its setpoint, which drives controllers to raise the duty cycle."""
    return ErrorSample(t=measured_cluster.t_end, e_watts=p_set - measured_cluster.watts)


def write_stream_csv(path: str, t: np.ndarray, channel: str, watts: np.ndarray) -> None:
    """Export a raw or block-averaged stream as `t,channel,watts` rows."""
    with open(path, "w", newline="\n") as fh:
        fh.write("t,channel,watts\n")
        for ti, wi in zip(t, watts):
            fh.write(f"{ti:.10g},{channel},{wi:.10g}\n")

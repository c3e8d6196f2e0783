"""Experiment configuration: defaults, INI-file loading, and snapshots.

Config files are flat key = value sections (configparser syntax). Every
run embeds its full effective configuration and seed in the report so
any result can be reproduced by copy-paste. Precedence: CLI flag over
config file over built-in default.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, replace

from .control import SetpointSchedule
from .netsim import ChannelConfig
from .powermodel import InterfaceKind, PRESETS
from .sensing import SensorConfig

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "snapshot"]


class ConfigError(ValueError):
    """Invalid or missing configuration value; carries the field name."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class ExperimentConfig:
    """Full effective configuration for one engine run."""

    # cluster
    n_servers: int = 4
    interface: InterfaceKind = InterfaceKind.USERSPACE_IDLE_INJECTION
    preset: str = "r320-cluster"
    seed: int = 42
    # transport and sensing
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    sensor: SensorConfig = field(default_factory=SensorConfig)
    # control
    controller_kind: str = "integral"
    controller_gain: float = 0.0007
    # scales every interface's model-noise sigma (0 disables model noise)
    model_noise_scale: float = 1.0
    # schedule (segments: (start_s, signal) pairs)
    d_watts: float = 145.0
    b_watts: float = 145.0
    segments: tuple[tuple[float, float], ...] = (
        (0.0, 0.10),
        (10.0, 0.90),
        (20.0, 0.20),
        (30.0, 0.95),
        (40.0, 0.35),
        (50.0, 0.05),
    )
    # experiment timing
    duration_s: float = 60.0
    window_s: float = 0.1
    power_lag_s: float = 0.05
    sweep_points: int = 100
    sweep_hold_s: float = 90.0
    characterize_points: int = 101
    characterize_hold_s: float = 30.0
    characterize_window_s: float = 0.5
    ramp_start_s: float = 2.0
    ramp_stop_s: float = 7.0
    ramp_duration_s: float = 12.0
    outlier: str = "mad"

    def __post_init__(self):
        if self.n_servers < 1:
            raise ConfigError("cluster.n_servers", "must be at least 1")
        if self.preset not in PRESETS:
            raise ConfigError("cluster.preset", f"unknown preset {self.preset!r}")
        if self.duration_s <= 0:
            raise ConfigError("experiment.duration_s", "must be positive")
        if self.window_s <= 0:
            raise ConfigError("experiment.window_s", "must be positive")
        ticks = self.window_s * self.sensor.raw_rate_hz
        if abs(ticks - round(ticks)) > 1e-6 or round(ticks) < 1:
            raise ConfigError(
                "experiment.window_s",
                "must be a positive whole multiple of the raw sampling period",
            )
        if self.controller_kind not in ("integral", "open-loop"):
            raise ConfigError("controller.kind", "must be 'integral' or 'open-loop'")
        if self.controller_gain < 0:
            raise ConfigError("controller.gain_per_watt", "must be non-negative")
        if self.outlier not in ("mad", "iqr10"):
            raise ConfigError("experiment.outlier", "must be 'mad' or 'iqr10'")
        if self.power_lag_s < 0:
            raise ConfigError("experiment.power_lag_s", "must be non-negative")
        if self.model_noise_scale < 0:
            raise ConfigError("cluster.model_noise_scale", "must be non-negative")

    def schedule(self) -> SetpointSchedule:
        return SetpointSchedule(
            d_watts=self.d_watts, b_watts=self.b_watts, segments=self.segments
        )


def _parse_segments(text: str) -> tuple[tuple[float, float], ...]:
    """Parse 'start:signal start:signal ...' pairs."""
    pairs = []
    for token in text.replace(",", " ").split():
        try:
            start, s = token.split(":")
            pairs.append((float(start), float(s)))
        except ValueError as exc:
            raise ConfigError("schedule.segments", f"bad segment {token!r}") from exc
    if not pairs:
        raise ConfigError("schedule.segments", "no segments given")
    return tuple(pairs)


def _get(parser, section, key, cast, current):
    if not parser.has_option(section, key):
        return current
    raw = parser.get(section, key)
    try:
        return cast(raw)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"{section}.{key}", f"invalid value {raw!r}: {exc}") from exc


def load_config(path: str | None = None, **overrides) -> ExperimentConfig:
    """Build a config from defaults, an optional INI file, and overrides.

    Overrides use ExperimentConfig field names and win over the file.
    """
    cfg = ExperimentConfig()
    if path is not None:
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        with open(path) as fh:
            parser.read_file(fh)
        kw: dict = {}
        kw["n_servers"] = _get(parser, "cluster", "n_servers", int, cfg.n_servers)
        kw["interface"] = _get(parser, "cluster", "interface", InterfaceKind.parse, cfg.interface)
        kw["preset"] = _get(parser, "cluster", "preset", str, cfg.preset)
        kw["seed"] = _get(parser, "cluster", "seed", int, cfg.seed)
        kw["model_noise_scale"] = _get(parser, "cluster", "model_noise_scale", float, cfg.model_noise_scale)
        kw["channel"] = ChannelConfig(
            latency_mean=_get(parser, "channel", "latency_s", float, cfg.channel.latency_mean),
            jitter=_get(parser, "channel", "jitter_s", float, cfg.channel.jitter),
            loss_prob=_get(parser, "channel", "loss_prob", float, cfg.channel.loss_prob),
            rate=_get(parser, "channel", "rate_hz", float, cfg.channel.rate),
        )
        kw["sensor"] = SensorConfig(
            gain_tolerance=_get(parser, "sensor", "gain_tolerance", float, cfg.sensor.gain_tolerance),
            ripple_amp=_get(parser, "sensor", "ripple_amp", float, cfg.sensor.ripple_amp),
            ripple_freq_hz=_get(parser, "sensor", "ripple_freq_hz", float, cfg.sensor.ripple_freq_hz),
            additive_sigma_watts=_get(
                parser, "sensor", "additive_sigma_watts", float, cfg.sensor.additive_sigma_watts
            ),
            raw_rate_hz=_get(parser, "sensor", "raw_rate_hz", float, cfg.sensor.raw_rate_hz),
        )
        kw["controller_kind"] = _get(parser, "controller", "kind", str, cfg.controller_kind)
        kw["controller_gain"] = _get(parser, "controller", "gain_per_watt", float, cfg.controller_gain)
        kw["d_watts"] = _get(parser, "schedule", "d_watts", float, cfg.d_watts)
        kw["b_watts"] = _get(parser, "schedule", "b_watts", float, cfg.b_watts)
        kw["segments"] = _get(parser, "schedule", "segments", _parse_segments, cfg.segments)
        for key in (
            "duration_s",
            "window_s",
            "power_lag_s",
            "sweep_hold_s",
            "characterize_hold_s",
            "characterize_window_s",
            "ramp_start_s",
            "ramp_stop_s",
            "ramp_duration_s",
        ):
            kw[key] = _get(parser, "experiment", key, float, getattr(cfg, key))
        for key in ("sweep_points", "characterize_points"):
            kw[key] = _get(parser, "experiment", key, int, getattr(cfg, key))
        kw["outlier"] = _get(parser, "experiment", "outlier", str, cfg.outlier)
        try:
            cfg = ExperimentConfig(**kw)
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError("config", str(exc)) from exc
    if overrides:
        if "interface" in overrides and isinstance(overrides["interface"], str):
            overrides["interface"] = InterfaceKind.parse(overrides["interface"])
        cfg = replace(cfg, **overrides)
    return cfg


def snapshot(cfg: ExperimentConfig) -> str:
    """Serialize the effective configuration back to INI text."""
    parser = configparser.ConfigParser()
    parser["cluster"] = {
        "n_servers": str(cfg.n_servers),
        "interface": cfg.interface.value,
        "preset": cfg.preset,
        "seed": str(cfg.seed),
        "model_noise_scale": repr(cfg.model_noise_scale),
    }
    parser["channel"] = {
        "latency_s": repr(cfg.channel.latency_mean),
        "jitter_s": repr(cfg.channel.jitter),
        "loss_prob": repr(cfg.channel.loss_prob),
        "rate_hz": repr(cfg.channel.rate),
    }
    parser["sensor"] = {
        "gain_tolerance": repr(cfg.sensor.gain_tolerance),
        "ripple_amp": repr(cfg.sensor.ripple_amp),
        "ripple_freq_hz": repr(cfg.sensor.ripple_freq_hz),
        "additive_sigma_watts": repr(cfg.sensor.additive_sigma_watts),
        "raw_rate_hz": repr(cfg.sensor.raw_rate_hz),
    }
    parser["controller"] = {
        "kind": cfg.controller_kind,
        "gain_per_watt": repr(cfg.controller_gain),
    }
    parser["schedule"] = {
        "d_watts": repr(cfg.d_watts),
        "b_watts": repr(cfg.b_watts),
        "segments": " ".join(f"{t:g}:{s:g}" for t, s in cfg.segments),
    }
    parser["experiment"] = {
        "duration_s": repr(cfg.duration_s),
        "window_s": repr(cfg.window_s),
        "power_lag_s": repr(cfg.power_lag_s),
        "sweep_points": str(cfg.sweep_points),
        "sweep_hold_s": repr(cfg.sweep_hold_s),
        "characterize_points": str(cfg.characterize_points),
        "characterize_hold_s": repr(cfg.characterize_hold_s),
        "characterize_window_s": repr(cfg.characterize_window_s),
        "ramp_start_s": repr(cfg.ramp_start_s),
        "ramp_stop_s": repr(cfg.ramp_stop_s),
        "ramp_duration_s": repr(cfg.ramp_duration_s),
        "outlier": cfg.outlier,
    }
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()

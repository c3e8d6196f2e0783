"""Per-server duty-cycle controllers and the regulation setpoint schedule.

The cluster tracks P_set(t) = D * s(t) + B, where s(t) is the
piecewise-constant regulation signal and (D, B) are the contracted
dynamic range and base load. Each server sees only the shared cluster
tracking error and steers its own duty cycle; there is no inter-server
communication.

Two controllers are provided: a pure integrator with conditional
anti-windup (the closed-loop scheme), and an open-loop inversion of the
linear power model used to test model-based control.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .powermodel import LinearPowerModel

__all__ = [
    "SetpointSchedule",
    "IntegralController",
    "open_loop_tau",
]


@dataclass(frozen=True)
class SetpointSchedule:
    """Piecewise-constant regulation signal with contract constants.

    segments is a list of (start_t, s) pairs with strictly increasing
    start times and s in [0, 1]; the signal holds each value until the
    next segment starts.
    """

    d_watts: float
    b_watts: float
    segments: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if self.d_watts <= 0:
            raise ValueError("d_watts must be positive")
        if self.b_watts < 0:
            raise ValueError("b_watts must be non-negative")
        if not self.segments:
            raise ValueError("schedule needs at least one segment")
        times = [t for t, _ in self.segments]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("segment start times must be strictly increasing")
        if any(not 0.0 <= s <= 1.0 for _, s in self.segments):
            raise ValueError("segment signal values must be in [0, 1]")

    def signal_at(self, t: float) -> float:
        if t < self.segments[0][0]:
            raise ValueError(f"t={t} precedes the first segment")
        s = self.segments[0][1]
        for start, value in self.segments:
            if t >= start:
                s = value
            else:
                break
        return s

    def setpoint_at(self, t: float) -> float:
        """Target cluster power D*s(t) + B."""
        return self.d_watts * self.signal_at(t) + self.b_watts

    def span(self) -> tuple[float, float]:
        """Lowest and highest setpoints the schedule commands."""
        values = [self.setpoint_at(t) for t, _ in self.segments]
        return min(values), max(values)

    def check_feasible(self, cluster_idle_watts: float, cluster_max_watts: float) -> None:
        """Reject schedules whose setpoint band falls outside what the
        cluster can physically consume (5% slack on either end)."""
        lo, hi = self.span()
        if lo < cluster_idle_watts * 0.95 or hi > cluster_max_watts * 1.05:
            raise InfeasibleScheduleError(
                f"setpoint band [{lo:.1f}, {hi:.1f}] W outside cluster range "
                f"[{cluster_idle_watts:.1f}, {cluster_max_watts:.1f}] W"
            )


class InfeasibleScheduleError(ValueError):
    """Schedule commands power the cluster cannot reach."""


@dataclass
class IntegralController:
    """Integrates the shared tracking error into a duty cycle in [0, 1].

    Anti-windup is conditional integration: when tau is pinned at a
    bound and the error pushes further past it, the update is skipped,
    so the first error sign flip acts immediately.
    """

    gain: float = 0.0007  # duty-cycle change per watt of error per update
    tau: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must start within [0, 1]")

    @property
    def saturated_low(self) -> bool:
        return self.tau <= 0.0

    @property
    def saturated_high(self) -> bool:
        return self.tau >= 1.0

    def update(self, e_watts: float) -> float:
        if (self.saturated_high and e_watts > 0.0) or (self.saturated_low and e_watts < 0.0):
            return self.tau
        self.tau = float(np.clip(self.tau + self.gain * e_watts, 0.0, 1.0))
        return self.tau


def open_loop_tau(model: LinearPowerModel, p_target: float) -> float:
    """Invert the linear power model: the duty cycle whose predicted power
    is p_target, clamped to [0, 1]."""
    if not np.isfinite(p_target):
        raise ValueError("p_target must be finite")
    return float(np.clip((p_target - model.i_watts) / model.k_watts, 0.0, 1.0))

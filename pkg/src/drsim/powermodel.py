"""Per-interface server power and processor state residency models.

Six CPU-throttling interfaces are modeled, each mapping a duty cycle
tau in [0, 1] (the fraction of CPU time granted to the workload) to
server wall power. Four are idle-cycle-injection (ICI) style and reach
the full dynamic range; two are DVFS style and only reach the upper
half of it:

  cgroups      ICI; near-linear with a slope change at tau = 0.7 where
               the governor stops using reduced p-states.
  userspace    ICI via SIGSTOP/SIGCONT; duty-cycles between deep sleep
               and the top p-state above tau = 0.2, so it is the most
               linear interface.
  xen          hypervisor sched-credit capping; full range but highly
               nonlinear, with plateaus between integer-core allocation
               boundaries and elevated noise at the boundaries.
  cpufreq      userspace DVFS governor; twelve discrete p-state levels
               covering only the upper half of the range, never idle.
  rapl         on-chip power limiting; continuous over the same
               restricted range as cpufreq.
  powerclamp   forced idle injection, capped at 50% idle time, so full
               load can only be cut to about half the dynamic range.

Every interface is calibrated against a linear reference model
F(tau) = I + K*tau through two presets ("r320-cluster" from rack-level
measurements, "r320-methods" from a bench measurement of one server).
A residency view decomposes the same behavior into busy / c1 / c6 time
fractions and an average p-state; ``power_from_residency`` is the
bridge that converts a residency profile back to watts and must agree
with ``mean_power`` to within 1.5 W everywhere.

All functions are pure; stochastic sampling takes an explicit numpy
Generator, so any thread can call them and identical seeds give
bit-identical streams.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

__all__ = [
    "InterfaceKind",
    "LinearPowerModel",
    "InterfaceParams",
    "ResidencyProfile",
    "PRESETS",
    "interface_params",
    "mean_power",
    "sample_power",
    "residency",
    "power_from_residency",
]


class InterfaceKind(Enum):
    """The supported power-modulating interfaces (closed enumeration)."""

    CGROUPS = "cgroups"
    USERSPACE_IDLE_INJECTION = "userspace"
    XEN_SCHED_CREDIT = "xen"
    CPUFREQ_USERSPACE = "cpufreq"
    RAPL = "rapl"
    POWERCLAMP = "powerclamp"

    @classmethod
    def parse(cls, name: str) -> "InterfaceKind":
        """Parse a config-file name; unknown names raise ValueError."""
        for kind in cls:
            if kind.value == name.strip().lower():
                return kind
        valid = ", ".join(k.value for k in cls)
        raise ValueError(f"unknown interface {name!r}; expected one of: {valid}")


@dataclass(frozen=True)
class LinearPowerModel:
    """Reference linear model F(tau) = i_watts + k_watts * tau."""

    k_watts: float  # dynamic range
    i_watts: float  # idle power

    def __post_init__(self):
        if self.k_watts <= 0 or self.i_watts <= 0:
            raise ValueError("k_watts and i_watts must be positive")

    def predict(self, tau):
        return self.i_watts + self.k_watts * np.asarray(tau, dtype=float)


# Per-server calibrations. "r320-cluster" derives from rack-level figures
# (290 W max / 145 W range across four servers); "r320-methods" from a
# single-server bench measurement (55 W idle, 85 W full load).
PRESETS: dict[str, LinearPowerModel] = {
    "r320-cluster": LinearPowerModel(k_watts=36.25, i_watts=36.25),
    "r320-methods": LinearPowerModel(k_watts=30.0, i_watts=55.0),
}

# Processor package power while parked in a sleep state, and the split of
# idle time between the shallow (c1) and deep (c6) states. The deep state
# dominates because power management prefers it whenever it may idle.
_P_C1_WATTS = 3.0
_P_C6_WATTS = 1.0
_IDLE_C1_SHARE = 0.15
_IDLE_C6_SHARE = 0.85
_IDLE_CPU_WATTS = _IDLE_C1_SHARE * _P_C1_WATTS + _IDLE_C6_SHARE * _P_C6_WATTS

# Active-core power floor for ICI interfaces: running at the deepest
# p-state costs about 6 W over the sleep states on this platform.
_ICI_ACTIVE_FLOOR_WATTS = 6.0

# Lowest average p-state each ICI governor uses at tiny duty cycles.
# userspace toggles sleep <-> near-top p-state, so its floor is high and
# the sub-knee dip stays mild; cgroups lets the governor downclock more.
_USERSPACE_PSTATE_FLOOR = 0.87
_CGROUPS_PSTATE_FLOOR = 0.84

# Xen sched-credit: six physical cores give allocation boundaries at
# multiples of 1/6. Between boundaries the power plateaus, then rises
# steeply as the next core comes into play; the plateau levels below are
# synthetic calibration constants (fractions of the dynamic range).
_XEN_CORES = 6
_XEN_LEVELS = np.array([0.0, 0.055, 0.150, 0.285, 0.480, 0.730, 1.0])
# Fraction of each inter-boundary segment spent on the plateau before the
# rise begins. Segment 0 rises early so power never undershoots the
# active-floor line at small tau.
_XEN_RISE_START = np.array([0.35, 0.70, 0.72, 0.74, 0.74, 0.72])
_XEN_BOUNDARY_SIGMA_WIDTH = 0.02

# cpufreq: power spacing of the twelve p-state levels. Voltage is flat
# across the low-frequency states and ramps steeply at the top, so level
# power follows a blend of a linear and a strongly convex term.
_CPUFREQ_LEVEL_LINEAR_WEIGHT = 0.22
_CPUFREQ_LEVEL_EXPONENT = 4.5

# powerclamp refuses to inject more than 50% idle time.
_POWERCLAMP_MAX_IDLE = 0.5

# Regardless of model noise, drawn samples stay within 5% of the
# physical envelope [I, I + K].
_CLAMP_BAND = 0.05


@dataclass(frozen=True)
class InterfaceParams:
    """Static description of one interface on one calibrated server.

    sigma_*_watts is the model noise scale at the reference averaging
    window; samples averaged over a window w scale it by
    sqrt(sigma_ref_window_s / w).
    """

    kind: InterfaceKind
    base: LinearPowerModel
    knee_tau: float = 0.0
    floor_fraction: float = 0.0
    n_levels: int = 0
    sigma_base_watts: float = 0.0
    sigma_boundary_watts: float = 0.0
    sigma_ref_window_s: float = 0.1
    accounting_period_s: float = 0.1
    active_exponent: float = 2.0

    def __post_init__(self):
        if not 0.0 <= self.knee_tau <= 1.0:
            raise ValueError("knee_tau must be in [0, 1]")
        if not 0.0 <= self.floor_fraction <= 1.0:
            raise ValueError("floor_fraction must be in [0, 1]")
        if self.sigma_base_watts < 0 or self.sigma_boundary_watts < 0:
            raise ValueError("noise scales must be non-negative")
        if self.accounting_period_s <= 0:
            raise ValueError("accounting_period_s must be positive")
        if self.n_levels < 0:
            raise ValueError("n_levels must be non-negative")

    def sigma_watts(self, tau) -> np.ndarray | float:
        """Model noise scale at the reference window, as a function of tau.

        Xen noise spikes near integer-core allocation boundaries, where
        the number of physical cores granted to the guest oscillates.
        """
        tau = _check_tau(tau)
        sigma = np.full_like(np.asarray(tau, dtype=float), self.sigma_base_watts)
        if self.kind is InterfaceKind.XEN_SCHED_CREDIT and self.sigma_boundary_watts:
            boundaries = np.arange(1, _XEN_CORES) / _XEN_CORES
            dist = np.min(np.abs(np.subtract.outer(np.asarray(tau, float), boundaries)), axis=-1)
            bump = np.clip(1.0 - dist / _XEN_BOUNDARY_SIGMA_WIDTH, 0.0, 1.0)
            sigma = sigma + (self.sigma_boundary_watts - self.sigma_base_watts) * bump
        return float(sigma) if np.isscalar(tau) or np.ndim(tau) == 0 else sigma


@dataclass(frozen=True)
class ResidencyProfile:
    """Time-fraction decomposition of processor state over a window.

    busy_frac + c1_frac + c6_frac must sum to one; pstate_avg is the
    average active p-state as a normalized frequency (1 = fastest).
    """

    busy_frac: float
    pstate_avg: float
    c1_frac: float
    c6_frac: float

    def __post_init__(self):
        for name in ("busy_frac", "pstate_avg", "c1_frac", "c6_frac"):
            v = getattr(self, name)
            if not -1e-12 <= v <= 1.0 + 1e-12:
                raise ValueError(f"{name}={v} outside [0, 1]")

    def validate_sum(self, tol: float = 1e-9) -> None:
        total = self.busy_frac + self.c1_frac + self.c6_frac
        if abs(total - 1.0) > tol:
            raise ValueError(f"state fractions sum to {total}, not 1")


_DEFAULTS_BY_KIND = {
    # kind: (knee, floor, n_levels, sigma_base, sigma_boundary, accounting)
    InterfaceKind.CGROUPS: (0.7, 0.0, 0, 1.6, 0.0, 0.1),
    InterfaceKind.USERSPACE_IDLE_INJECTION: (0.2, 0.0, 0, 1.1, 0.0, 0.1),
    InterfaceKind.XEN_SCHED_CREDIT: (0.0, 0.0, 0, 2.5, 6.0, 0.03),
    InterfaceKind.CPUFREQ_USERSPACE: (0.0, 0.5, 12, 0.35, 0.0, 0.01),
    InterfaceKind.RAPL: (0.0, 0.5, 0, 0.35, 0.0, 0.001),
    InterfaceKind.POWERCLAMP: (0.0, 0.5, 0, 3.5, 0.0, 0.006),
}


def interface_params(kind: InterfaceKind | str, preset: str = "r320-cluster") -> InterfaceParams:
    """Build the calibrated parameter set for an interface.

    preset selects the server calibration; unknown preset names raise
    ValueError (valid: r320-cluster, r320-methods).
    """
    if isinstance(kind, str):
        kind = InterfaceKind.parse(kind)
    if preset not in PRESETS:
        valid = ", ".join(sorted(PRESETS))
        raise ValueError(f"unknown preset {preset!r}; expected one of: {valid}")
    knee, floor, n_levels, s_base, s_bound, acct = _DEFAULTS_BY_KIND[kind]
    return InterfaceParams(
        kind=kind,
        base=PRESETS[preset],
        knee_tau=knee,
        floor_fraction=floor,
        n_levels=n_levels,
        sigma_base_watts=s_base,
        sigma_boundary_watts=s_bound,
        accounting_period_s=acct,
    )


def _check_tau(tau):
    arr = np.asarray(tau, dtype=float)
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError("duty cycle must be within [0, 1]")
    return arr


def _active_power_bounds(params: InterfaceParams) -> tuple[float, float]:
    """Watts consumed by the active core complex at the lowest / highest
    p-state the interface can use."""
    base = params.base
    hi = base.k_watts + _IDLE_CPU_WATTS
    if params.kind in (InterfaceKind.CPUFREQ_USERSPACE, InterfaceKind.RAPL):
        lo = _IDLE_CPU_WATTS + params.floor_fraction * base.k_watts
    else:
        lo = _ICI_ACTIVE_FLOOR_WATTS
    return lo, hi


def _active_power(params: InterfaceParams, pstate: np.ndarray) -> np.ndarray:
    lo, hi = _active_power_bounds(params)
    return lo + (hi - lo) * np.asarray(pstate, float) ** params.active_exponent


def _platform_base(params: InterfaceParams) -> float:
    return params.base.i_watts - _IDLE_CPU_WATTS


def _ici_pstate_ramp(tau: np.ndarray, knee: float, floor: float) -> np.ndarray:
    """Average p-state for governors that downclock below a knee duty cycle."""
    return np.where(tau >= knee, 1.0, floor + (1.0 - floor) * tau / knee)


def _xen_shape(tau: np.ndarray) -> np.ndarray:
    """Normalized xen power shape X(tau): plateaus then steep rises between
    core boundaries, with X(k/6) = level[k] and X <= tau throughout."""
    tau = np.asarray(tau, dtype=float)
    seg = np.clip(np.floor(tau * _XEN_CORES).astype(int), 0, _XEN_CORES - 1)
    u = tau * _XEN_CORES - seg
    rise = _XEN_RISE_START[seg]
    x = np.clip((u - rise) / (1.0 - rise), 0.0, 1.0)
    smooth = x * x * (3.0 - 2.0 * x)
    lo = _XEN_LEVELS[seg]
    hi = _XEN_LEVELS[seg + 1]
    return lo + (hi - lo) * smooth


def _cpufreq_level_fraction(level_index: np.ndarray, n_levels: int) -> np.ndarray:
    """Power position of p-state level j within the controllable span."""
    x = np.asarray(level_index, float) / (n_levels - 1)
    w = _CPUFREQ_LEVEL_LINEAR_WEIGHT
    return w * x + (1.0 - w) * x**_CPUFREQ_LEVEL_EXPONENT


def _cpufreq_level_index(tau: np.ndarray, n_levels: int) -> np.ndarray:
    return np.rint(np.asarray(tau, float) * (n_levels - 1))


def mean_power(params: InterfaceParams, tau):
    """Deterministic mean server power at duty cycle tau, in watts.

    Accepts a scalar or array tau; the result always lies within
    [i_watts, i_watts + k_watts].
    """
    tau = _check_tau(tau)
    scalar = tau.ndim == 0
    t = np.atleast_1d(tau)
    base = params.base
    i_w, k_w = base.i_watts, base.k_watts
    kind = params.kind

    if kind in (InterfaceKind.CGROUPS, InterfaceKind.USERSPACE_IDLE_INJECTION):
        floor = (
            _CGROUPS_PSTATE_FLOOR
            if kind is InterfaceKind.CGROUPS
            else _USERSPACE_PSTATE_FLOOR
        )
        pstate = _ici_pstate_ramp(t, params.knee_tau, floor)
        watts = i_w + t * (_active_power(params, pstate) - _IDLE_CPU_WATTS)
    elif kind is InterfaceKind.XEN_SCHED_CREDIT:
        watts = i_w + k_w * _xen_shape(t)
    elif kind is InterfaceKind.CPUFREQ_USERSPACE:
        frac = _cpufreq_level_fraction(_cpufreq_level_index(t, params.n_levels), params.n_levels)
        watts = i_w + k_w * (params.floor_fraction + (1.0 - params.floor_fraction) * frac)
    elif kind is InterfaceKind.RAPL:
        watts = i_w + k_w * (params.floor_fraction + (1.0 - params.floor_fraction) * t)
    elif kind is InterfaceKind.POWERCLAMP:
        busy = np.maximum(t, 1.0 - _POWERCLAMP_MAX_IDLE)
        watts = _platform_base(params) + busy * _active_power(params, 1.0) + (1.0 - busy) * _P_C6_WATTS
    else:  # pragma: no cover - closed enumeration
        raise ValueError(f"unhandled kind {kind}")

    watts = np.clip(watts, i_w, i_w + k_w)
    return float(watts[0]) if scalar else watts


def sample_power(params: InterfaceParams, tau, dt: float, rng: np.random.Generator):
    """One stochastic block-averaged power draw over a window of dt seconds.

    Noise is zero-mean Gaussian with scale sigma_watts(tau) referred to the
    reference window, shrinking as sqrt(window) for longer averages. Samples
    are clamped to the physical envelope widened by 5%.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    tau = _check_tau(tau)
    mean = mean_power(params, tau)
    sigma = params.sigma_watts(tau)
    scale = np.sqrt(params.sigma_ref_window_s / dt)
    draw = mean + np.asarray(sigma) * scale * rng.standard_normal(np.shape(tau))
    i_w, k_w = params.base.i_watts, params.base.k_watts
    lo = i_w * (1.0 - _CLAMP_BAND)
    hi = (i_w + k_w) * (1.0 + _CLAMP_BAND)
    clipped = np.clip(draw, lo, hi)
    return float(clipped) if np.ndim(tau) == 0 else clipped


def tick_noise_sigma(params: InterfaceParams, tau: float, dt: float) -> float:
    """Per-tick noise scale such that block averages of n ticks reproduce
    sigma_watts(tau) at the corresponding window length."""
    return float(params.sigma_watts(tau)) * float(np.sqrt(params.sigma_ref_window_s / dt))


def residency(params: InterfaceParams, tau: float) -> ResidencyProfile:
    """Processor state residency at duty cycle tau.

    ICI interfaces enforce busy time equal to tau and park idle time
    mostly in c6; DVFS interfaces never sleep (busy = 1) and express the
    duty cycle through the average p-state instead. powerclamp cannot
    inject more than 50% idle, so its busy time floors at 0.5.
    """
    t = float(_check_tau(tau))
    kind = params.kind

    if kind in (InterfaceKind.CGROUPS, InterfaceKind.USERSPACE_IDLE_INJECTION):
        floor = (
            _CGROUPS_PSTATE_FLOOR
            if kind is InterfaceKind.CGROUPS
            else _USERSPACE_PSTATE_FLOOR
        )
        pstate = float(_ici_pstate_ramp(np.asarray(t), params.knee_tau, floor))
        busy = t
        idle = 1.0 - t
        return ResidencyProfile(busy, pstate, _IDLE_C1_SHARE * idle, _IDLE_C6_SHARE * idle)

    if kind is InterfaceKind.XEN_SCHED_CREDIT:
        busy = t
        idle = 1.0 - t
        if t > 0.0:
            needed = params.base.k_watts * float(_xen_shape(np.asarray(t))) / t + _IDLE_CPU_WATTS
            lo, hi = _active_power_bounds(params)
            frac = np.clip((needed - lo) / (hi - lo), 0.0, 1.0)
            pstate = float(frac ** (1.0 / params.active_exponent))
        else:
            pstate = 0.0
        return ResidencyProfile(busy, pstate, _IDLE_C1_SHARE * idle, _IDLE_C6_SHARE * idle)

    if kind is InterfaceKind.CPUFREQ_USERSPACE:
        frac = float(_cpufreq_level_fraction(_cpufreq_level_index(np.asarray(t), params.n_levels), params.n_levels))
        pstate = frac ** (1.0 / params.active_exponent)
        return ResidencyProfile(1.0, pstate, 0.0, 0.0)

    if kind is InterfaceKind.RAPL:
        return ResidencyProfile(1.0, t ** (1.0 / params.active_exponent), 0.0, 0.0)

    if kind is InterfaceKind.POWERCLAMP:
        busy = max(t, 1.0 - _POWERCLAMP_MAX_IDLE)
        return ResidencyProfile(busy, 1.0, 0.0, 1.0 - busy)

    raise ValueError(f"unhandled kind {kind}")  # pragma: no cover


def power_from_residency(profile: ResidencyProfile, params: InterfaceParams) -> float:
    """Watts implied by a residency profile: platform base plus the active
    complex at its average p-state plus sleep-state draw.

    Raises ValueError if the profile's state fractions do not sum to one.
    """
    profile.validate_sum()
    return (
        _platform_base(params)
        + profile.busy_frac * float(_active_power(params, profile.pstate_avg))
        + profile.c1_frac * _P_C1_WATTS
        + profile.c6_frac * _P_C6_WATTS
    )

"""Hot numeric kernels with numba and pure-numpy implementations.

The simulator spends nearly all of its time synthesizing per-tick power
traces (first-order actuator lag, model noise, sensor chain) and reducing
them to block averages. Both backends compute the same arithmetic; the
numba path runs explicit loops under @njit, the numpy path vectorizes.

Backend selection: numba is used when importable unless the environment
variable DRSIM_NUMBA is set to "0". All random numbers are drawn by the
caller with numpy generators and passed in as arrays, so a given seed
produces the same noise stream on either backend.
"""

from __future__ import annotations

import math
import os

import numpy as np

_WANT_NUMBA = os.environ.get("DRSIM_NUMBA", "1") != "0"

if _WANT_NUMBA:
    try:
        from numba import njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a hard dependency
        NUMBA_ENABLED = False
else:
    NUMBA_ENABLED = False


def backend() -> str:
    """Name of the active kernel backend ("numba" or "numpy")."""
    return "numba" if NUMBA_ENABLED else "numpy"


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------

def _slew_np(p0: float, target: float, decay: float, n: int) -> np.ndarray:
    # p[i] = target + (p0 - target) * decay**(i+1); decay = exp(-dt/tau_lag)
    steps = np.arange(1, n + 1, dtype=np.float64)
    return target + (p0 - target) * decay**steps


def _sensor_np(
    true_w: np.ndarray,
    gain_rel: float,
    ripple_amp: float,
    omega: float,
    phase: float,
    t0: float,
    dt: float,
) -> np.ndarray:
    n = true_w.shape[0]
    out = true_w * (1.0 + gain_rel)
    if ripple_amp != 0.0:
        t = t0 + dt * np.arange(n, dtype=np.float64)
        out = out + ripple_amp * true_w * np.sin(omega * t + phase)
    return out


def _block_means_np(x: np.ndarray, m: int) -> np.ndarray:
    k = x.shape[0] // m
    return x[: k * m].reshape(k, m).mean(axis=1)


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if NUMBA_ENABLED:

    @njit(cache=True)
    def _slew_nb(p0, target, decay, n):  # pragma: no cover - jitted
        out = np.empty(n, dtype=np.float64)
        p = p0
        for i in range(n):
            p = target + (p - target) * decay
            out[i] = p
        return out

    @njit(cache=True)
    def _sensor_nb(true_w, gain_rel, ripple_amp, omega, phase, t0, dt):  # pragma: no cover
        n = true_w.shape[0]
        out = np.empty(n, dtype=np.float64)
        for i in range(n):
            w = true_w[i] * (1.0 + gain_rel)
            if ripple_amp != 0.0:
                w += ripple_amp * true_w[i] * math.sin(omega * (t0 + dt * i) + phase)
            out[i] = w
        return out

    @njit(cache=True)
    def _block_means_nb(x, m):  # pragma: no cover - jitted
        k = x.shape[0] // m
        out = np.empty(k, dtype=np.float64)
        for j in range(k):
            s = 0.0
            for i in range(j * m, (j + 1) * m):
                s += x[i]
            out[j] = s / m
        return out


# ---------------------------------------------------------------------------
# public dispatchers
# ---------------------------------------------------------------------------

def slew_trace(p0: float, target: float, decay: float, n: int) -> np.ndarray:
    """First-order lag trajectory: n ticks relaxing from p0 toward target."""
    if NUMBA_ENABLED:
        return _slew_nb(p0, target, decay, n)
    return _slew_np(p0, target, decay, n)


def sensor_trace(
    true_w: np.ndarray,
    gain_rel: float,
    ripple_amp: float,
    omega: float,
    phase: float,
    t0: float,
    dt: float,
) -> np.ndarray:
    """Apply channel gain error and optional line-frequency ripple per tick."""
    true_w = np.ascontiguousarray(true_w, dtype=np.float64)
    if NUMBA_ENABLED:
        return _sensor_nb(true_w, gain_rel, ripple_amp, omega, phase, t0, dt)
    return _sensor_np(true_w, gain_rel, ripple_amp, omega, phase, t0, dt)


def block_means(x: np.ndarray, m: int) -> np.ndarray:
    """Means of consecutive length-m blocks; a trailing partial block is dropped."""
    if m <= 0:
        raise ValueError("block length must be positive")
    x = np.ascontiguousarray(x, dtype=np.float64)
    if NUMBA_ENABLED:
        return _block_means_nb(x, m)
    return _block_means_np(x, m)

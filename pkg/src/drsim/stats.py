"""Analysis pipeline: RMSE, robust outlier rejection, range bands,
the reconstructed market precision score, and ramp/settling metrics.

The precision score is a documented reconstruction of the market
operator's published metric (the exact formula is not public): both
streams are block-averaged per scoring interval and the mean absolute
deviation is normalized by the mean regulation magnitude |P_set - B|.
Outputs that carry it are flagged "reconstructed-pjm-precision".
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "RmseCurve",
    "RangeBand",
    "rmse",
    "mad_filter",
    "conservative_range",
    "precision_score",
    "ramp_metrics",
    "linear_fit_residual",
    "resample_means",
    "PRECISION_SCORE_FLAG",
]

PRECISION_SCORE_FLAG = "reconstructed-pjm-precision"

# Modified z-score cutoff (Iglewicz-Hoaglin convention) and the Gaussian
# consistency factor turning MAD into a sigma estimate.
_MAD_Z_CUTOFF = 3.5
_MAD_SIGMA_FACTOR = 1.4826
# When MAD is zero (more than half the samples identical) fall back to an
# absolute band around the median.
_MAD_ZERO_BAND_WATTS = 0.1


@dataclass(frozen=True)
class RmseCurve:
    """RMSE versus duty cycle from a model-accuracy sweep."""

    points: tuple[tuple[float, float], ...]  # (tau, rmse_watts)
    window: float
    n: int

    def __post_init__(self):
        if any(r < 0 for _, r in self.points):
            raise ValueError("rmse values must be non-negative")

    def max_rmse(self) -> float:
        return max(r for _, r in self.points)


@dataclass(frozen=True)
class RangeBand:
    """Conservative power range for one sample group."""

    lo: float
    hi: float
    mean: float
    n_rejected: int = 0

    def __post_init__(self):
        if not self.lo <= self.mean <= self.hi:
            raise ValueError("band must satisfy lo <= mean <= hi")


def rmse(measured, predicted: float) -> float:
    """Root mean square deviation of measured samples from a prediction."""
    x = np.asarray(measured, dtype=float)
    if x.size == 0:
        raise ValueError("measured must be non-empty")
    return float(np.sqrt(np.mean((x - predicted) ** 2)))


def _mad_reject_once(x: np.ndarray) -> np.ndarray:
    med = np.median(x)
    mad = np.median(np.abs(x - med))
    if mad > 0.0:
        band = _MAD_Z_CUTOFF * _MAD_SIGMA_FACTOR * mad
    else:
        band = _MAD_ZERO_BAND_WATTS
    return np.abs(x - med) <= band


def mad_filter(samples) -> tuple[np.ndarray, np.ndarray]:
    """Split samples into (kept, rejected) by median-absolute-deviation
    rejection, iterated to a fixed point so re-filtering the kept set
    never rejects anything further."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("samples must be non-empty")
    keep = np.ones(x.size, dtype=bool)
    while True:
        ok = _mad_reject_once(x[keep])
        if ok.all():
            break
        idx = np.flatnonzero(keep)
        keep[idx[~ok]] = False
    return x[keep], x[~keep]


def conservative_range(kept, n_rejected: int = 0) -> RangeBand:
    """Observed range widened by three standard deviations (1.5 on each
    side), so the band errs toward over-covering the true spread."""
    x = np.asarray(kept, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two kept samples")
    sd = float(np.std(x, ddof=1))
    return RangeBand(
        lo=float(x.min() - 1.5 * sd),
        hi=float(x.max() + 1.5 * sd),
        mean=float(x.mean()),
        n_rejected=n_rejected,
    )


def resample_means(t: np.ndarray, x: np.ndarray, t0: float, interval: float) -> np.ndarray:
    """Means of x over consecutive intervals starting at t0; samples are
    assigned by timestamp, trailing partial intervals are dropped."""
    t = np.asarray(t, float)
    x = np.asarray(x, float)
    idx = np.floor((t - t0) / interval + 1e-12).astype(int)
    valid = idx >= 0
    idx, x = idx[valid], x[valid]
    if idx.size == 0:
        raise ValueError("no samples fall inside the scoring span")
    n_full = int(np.max(idx)) + 1
    sums = np.bincount(idx, weights=x, minlength=n_full)
    counts = np.bincount(idx, minlength=n_full)
    expected = np.max(counts)
    full = counts == expected
    if not full.any():
        raise ValueError("no complete scoring interval")
    return sums[full] / counts[full]


def precision_score(
    t: np.ndarray,
    setpoints: np.ndarray,
    measured: np.ndarray,
    b_watts: float,
    interval: float = 10.0,
) -> float:
    """Tracking precision in [0, 1]: one minus the mean absolute interval
    error normalized by the mean regulation magnitude.

    Both streams share the timestamps t and are block-averaged per
    scoring interval. Raises ValueError when the schedule never leaves
    the base load (zero regulation magnitude).
    """
    t = np.asarray(t, float)
    t0 = float(t[0])
    set_m = resample_means(t, np.asarray(setpoints, float), t0, interval)
    meas_m = resample_means(t, np.asarray(measured, float), t0, interval)
    denom = float(np.mean(np.abs(set_m - b_watts)))
    if denom <= 0.0:
        raise ValueError("schedule holds the base load; precision score undefined")
    err = float(np.mean(np.abs(meas_m - set_m)))
    return max(0.0, 1.0 - err / denom)


def linear_fit_residual(x, y) -> float:
    """Largest absolute deviation of y from its least-squares line in x."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    coef = np.polyfit(x, y, 1)
    return float(np.max(np.abs(y - np.polyval(coef, x))))


def ramp_metrics(
    t: np.ndarray,
    watts: np.ndarray,
    settle_band_frac: float = 0.05,
    steady_frac: float = 0.15,
) -> dict:
    """Characterize one idle-to-full power transition.

    Returns dynamic_range (steady full minus steady idle), ramp_rate (the
    10-90% rise amplitude over its duration), and settling_time (first
    time after the step beyond which power stays within the +/-5%-of-range
    band around the final level). Raises ValueError when the trace holds
    no detectable step.
    """
    t = np.asarray(t, float)
    w = np.asarray(watts, float)
    if t.size < 4:
        raise ValueError("trace too short")
    k = max(2, int(t.size * steady_frac))
    idle = float(np.mean(w[:k]))
    full = float(np.mean(w[-k:]))
    rng = full - idle
    if rng < 5.0:
        raise ValueError("no detectable step in trace")

    lo_th = idle + 0.1 * rng
    hi_th = idle + 0.9 * rng
    above_lo = np.flatnonzero(w >= lo_th)
    above_hi = np.flatnonzero(w >= hi_th)
    if above_lo.size == 0 or above_hi.size == 0:
        raise ValueError("rise thresholds never crossed")

    t_lo = _cross_time(t, w, above_lo[0], lo_th)
    t_hi = _cross_time(t, w, above_hi[0], hi_th)
    duration = max(t_hi - t_lo, float(t[1] - t[0]))  # at least one sample period
    ramp_rate = 0.8 * rng / duration

    band = settle_band_frac * rng
    outside = np.abs(w - full) > band
    step_idx = above_lo[0]
    later = np.flatnonzero(outside[step_idx:])
    if later.size == 0:
        settle_t = float(t[step_idx])
    else:
        last_out = step_idx + later[-1]
        settle_t = float(t[last_out + 1]) if last_out + 1 < t.size else float(t[-1])
    settling_time = settle_t - float(t[step_idx])

    return {
        "dynamic_range": rng,
        "ramp_rate": ramp_rate,
        "settling_time": settling_time,
        "rise_time": duration,
        "idle_watts": idle,
        "full_watts": full,
    }


def _cross_time(t: np.ndarray, w: np.ndarray, idx: int, threshold: float) -> float:
    """Linear interpolation of the threshold crossing before sample idx."""
    if idx == 0:
        return float(t[0])
    w0, w1 = w[idx - 1], w[idx]
    if w1 == w0:
        return float(t[idx])
    frac = (threshold - w0) / (w1 - w0)
    return float(t[idx - 1] + frac * (t[idx] - t[idx - 1]))

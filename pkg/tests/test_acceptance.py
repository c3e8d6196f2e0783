"""Acceptance suite: every release criterion at its stated tolerance.

Quantitative criteria run the default desk-scale configuration with
seed 42; property criteria are calibration-independent. Each test prints
one PASS line (run with `pytest -s` to see them live).
"""

import math

import numpy as np
import pytest

from drsim import cli, engine
from drsim.config import load_config
from drsim.control import IntegralController
from drsim.powermodel import (
    InterfaceKind,
    interface_params,
    mean_power,
    power_from_residency,
    residency,
)
from drsim.sensing import block_average_arrays
from drsim.stats import conservative_range, linear_fit_residual, mad_filter, rmse

SEED = 42
ICI_KINDS = (
    InterfaceKind.CGROUPS,
    InterfaceKind.USERSPACE_IDLE_INJECTION,
    InterfaceKind.XEN_SCHED_CREDIT,
)


def _pass(n: int, msg: str) -> None:
    print(f"ACCEPTANCE {n:02d}: PASS - {msg}")


@pytest.fixture(scope="module")
def default_cfg():
    return load_config(seed=SEED)


@pytest.fixture(scope="module")
def sweep_report(default_cfg):
    return engine.run_model_accuracy_sweep(default_cfg)


@pytest.fixture(scope="module")
def track_report(default_cfg):
    return engine.run_tracking(default_cfg)


@pytest.fixture(scope="module")
def open_loop_report():
    return engine.run_tracking(load_config(seed=SEED, controller_kind="open-loop"))


@pytest.fixture(scope="module")
def ramp_report(default_cfg):
    return engine.run_ramp(default_cfg)


@pytest.fixture(scope="module")
def characterizations(default_cfg):
    return {
        kind: engine.run_characterization(default_cfg, kind)
        for kind in (
            InterfaceKind.USERSPACE_IDLE_INJECTION,
            InterfaceKind.CGROUPS,
            InterfaceKind.RAPL,
            InterfaceKind.XEN_SCHED_CREDIT,
            InterfaceKind.CPUFREQ_USERSPACE,
        )
    }


# ---------------------------------------------------------------------------
# quantitative criteria
# ---------------------------------------------------------------------------

def test_criterion_01_model_accuracy_sweep(sweep_report):
    """Userspace sweep over 100 duty cycles: max RMSE at most 3 W, and at
    least 1 W somewhere (noise actually modeled)."""
    assert len(sweep_report.metrics_rows) == 100
    assert all(row[2] == 900 for row in sweep_report.metrics_rows)
    max_rmse = sweep_report.scalars["max_rmse_watts"]
    assert max_rmse <= 3.0
    assert max_rmse >= 1.0
    _pass(1, f"sweep max RMSE {max_rmse:.2f} W in [1, 3], N=900 per point")


def test_criterion_02_closed_loop_tracking(track_report):
    """Four-server step tracking: settling within 3 s, RMS error within
    40 W, precision score at least 0.75 and inside [0.80, 0.92]."""
    settle = track_report.scalars["max_settling_time_s"]
    rms = track_report.scalars["rms_error_watts"]
    score = track_report.scalars["precision_score"]
    assert settle <= 3.0
    assert rms <= 40.0
    assert score >= 0.75
    assert 0.80 <= score <= 0.92
    _pass(2, f"tracking settle {settle:.2f} s, RMS {rms:.1f} W, score {score:.3f}")


def test_criterion_03_open_loop_tracking(open_loop_report):
    """Open-loop inversion of the linear model: minimum precision score
    (worst of cluster and per-server) at least 0.90."""
    score_min = open_loop_report.scalars["precision_score_min"]
    assert score_min >= 0.90
    _pass(3, f"open-loop min precision score {score_min:.3f}")


def test_criterion_04_ramp(ramp_report):
    """Synchronized ramp: dynamic range within 10% of 145 W, 10-90% ramp
    rate at least 500 W/s."""
    rng = ramp_report.scalars["dynamic_range_watts"]
    rate = ramp_report.scalars["ramp_rate_wps"]
    assert 145.0 * 0.9 <= rng <= 145.0 * 1.1
    assert rate >= 500.0
    _pass(4, f"ramp range {rng:.1f} W, rate {rate:.0f} W/s")


def test_criterion_05_cpufreq_characterization(characterizations):
    """cpufreq: exactly twelve distinct mean power levels; controllable
    span at most 55% of the full dynamic range."""
    rep = characterizations[InterfaceKind.CPUFREQ_USERSPACE]
    levels = rep.scalars["distinct_levels"]
    frac = rep.scalars["span_fraction"]
    assert levels == 12
    assert frac <= 0.55
    _pass(5, f"cpufreq {levels} levels, span {frac:.2f} of dynamic range")


def test_criterion_06_linearity_ordering(characterizations):
    """Linear-fit residuals: at most 2 W for userspace/cgroups/RAPL, at
    least 5 W for xen and cpufreq."""
    resid = {
        kind: rep.scalars["linear_fit_residual_watts"]
        for kind, rep in characterizations.items()
    }
    assert resid[InterfaceKind.USERSPACE_IDLE_INJECTION] <= 2.0
    assert resid[InterfaceKind.CGROUPS] <= 2.0
    assert resid[InterfaceKind.RAPL] <= 2.0
    assert resid[InterfaceKind.XEN_SCHED_CREDIT] >= 5.0
    assert resid[InterfaceKind.CPUFREQ_USERSPACE] >= 5.0
    pretty = ", ".join(f"{k.value}={v:.2f}" for k, v in resid.items())
    _pass(6, f"linear-fit residuals [W]: {pretty}")


# ---------------------------------------------------------------------------
# property criteria (calibration-independent)
# ---------------------------------------------------------------------------

def test_criterion_07_residency_sums_and_busy_slope():
    """Residency fractions sum to one (1e-9) on a 1001-point grid for all
    interfaces; busy time has unit slope (0.02) for the full-range
    idle-cycle-injection kinds."""
    grid = np.linspace(0.0, 1.0, 1001)
    for kind in InterfaceKind:
        p = interface_params(kind)
        for tau in grid:
            residency(p, float(tau)).validate_sum(tol=1e-9)
    for kind in ICI_KINDS:
        p = interface_params(kind)
        busy = np.array([residency(p, float(t)).busy_frac for t in grid])
        slope = float(np.polyfit(grid, busy, 1)[0])
        assert abs(slope - 1.0) <= 0.02, kind
    _pass(7, "residency sums to one (1e-9); busy slope within 0.02 of unity")


def test_criterion_08_power_residency_bridge():
    """power_from_residency agrees with mean_power to 1.5 W over all six
    interfaces and 101 duty cycles."""
    grid = np.linspace(0.0, 1.0, 101)
    worst = 0.0
    for kind in InterfaceKind:
        p = interface_params(kind)
        for tau in grid:
            err = abs(power_from_residency(residency(p, float(tau)), p) - mean_power(p, float(tau)))
            worst = max(worst, err)
            assert err <= 1.5, (kind, tau)
    _pass(8, f"bridge-vs-mean worst error {worst:.3f} W (<= 1.5 W)")


def test_criterion_09_stats_match_brute_force():
    """rmse, mad_filter, conservative_range equal naive oracle
    implementations on 1000 random inputs; mad_filter is idempotent."""
    rng = np.random.default_rng(SEED)
    for _ in range(1000):
        n = int(rng.integers(2, 25))
        x = list(rng.normal(60, 2, size=n))
        if rng.random() < 0.3:
            x.append(float(rng.uniform(100, 300)))
        pred = float(rng.uniform(40, 80))

        naive_rmse = math.sqrt(sum((v - pred) ** 2 for v in x) / len(x))
        assert rmse(x, pred) == pytest.approx(naive_rmse, rel=1e-12)

        kept, rejected = mad_filter(x)
        kept2, rejected2 = mad_filter(kept)
        assert len(rejected2) == 0 and sorted(kept2) == pytest.approx(sorted(kept))

        band = conservative_range(x)
        mean = sum(x) / len(x)
        sd = math.sqrt(sum((v - mean) ** 2 for v in x) / (len(x) - 1))
        assert band.lo == pytest.approx(min(x) - 1.5 * sd, rel=1e-12)
        assert band.hi == pytest.approx(max(x) + 1.5 * sd, rel=1e-12)
    _pass(9, "stats match brute-force oracles on 1000 cases; mad_filter idempotent")


def test_criterion_10_controller_fuzz():
    """Duty cycle stays within [0, 1] under arbitrary error streams, and
    anti-windup recovers on the first sign flip after saturation."""
    rng = np.random.default_rng(SEED)
    for _ in range(500):
        c = IntegralController(gain=float(rng.uniform(1e-5, 0.1)))
        for e in rng.uniform(-1e5, 1e5, size=100):
            assert 0.0 <= c.update(float(e)) <= 1.0
    c = IntegralController(gain=0.001)
    for _ in range(10_000):
        c.update(1e4)
    assert c.tau == 1.0
    assert c.update(-1.0) < 1.0  # reacts on the very next update
    _pass(10, "controller fuzz: tau bounded; anti-windup single-update recovery")


def test_criterion_11_reproducibility(tmp_path):
    """Two CLI runs of every subcommand with the same config and seed
    produce byte-identical trace.csv and metrics.csv."""
    runs = {
        "track": ["track", "--duration", "10"],
        "sweep": ["sweep"],
        "ramp": ["ramp"],
        "characterize-cgroups": ["characterize", "--interface", "cgroups"],
    }
    for name, args in runs.items():
        dirs = []
        for tag in ("a", "b"):
            out = tmp_path / f"{name}-{tag}"
            assert cli.main(args + ["--seed", str(SEED), "--out", str(out), "--no-plots"]) == 0
            sub = next(p for p in out.iterdir() if p.is_dir())
            dirs.append(sub)
        for fname in ("trace.csv", "metrics.csv"):
            a = (dirs[0] / fname).read_bytes()
            b = (dirs[1] / fname).read_bytes()
            assert a == b, f"{name}/{fname} differs between identical runs"
    _pass(11, "byte-identical trace.csv/metrics.csv for all subcommands")


def test_criterion_12_energy_conservation():
    """Block averaging conserves energy to 1e-9 relative over whole
    windows."""
    rng = np.random.default_rng(SEED)
    dt = 0.001
    t = np.arange(20_000) * dt
    w = np.maximum(60.0 + 15.0 * rng.standard_normal(t.size), 0.0)
    _, means = block_average_arrays(t, w, window=0.1)
    energy_blocks = float(means.sum() * 0.1)
    energy_raw = float(w[: len(means) * 100].sum() * dt)
    assert energy_blocks == pytest.approx(energy_raw, rel=1e-9)
    _pass(12, "block averaging conserves energy within 1e-9 relative")

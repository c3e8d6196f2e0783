"""Config loading: defaults, INI parsing, overrides, snapshots."""

import pytest

from drsim.config import ConfigError, ExperimentConfig, load_config, snapshot
from drsim.powermodel import InterfaceKind


def test_defaults_load_without_file():
    cfg = load_config()
    assert cfg.n_servers == 4
    assert cfg.interface is InterfaceKind.USERSPACE_IDLE_INJECTION
    assert cfg.seed == 42


def test_ini_values_override_defaults(tmp_path):
    f = tmp_path / "c.cfg"
    f.write_text(
        "[cluster]\nn_servers = 2\ninterface = xen\nseed = 7\n"
        "[channel]\nloss_prob = 0.25\n"
        "[schedule]\nsegments = 0:0.3 5:0.6\n"
    )
    cfg = load_config(str(f))
    assert cfg.n_servers == 2
    assert cfg.interface is InterfaceKind.XEN_SCHED_CREDIT
    assert cfg.seed == 7
    assert cfg.channel.loss_prob == 0.25
    assert cfg.segments == ((0.0, 0.3), (5.0, 0.6))
    # unset sections keep defaults
    assert cfg.sensor.raw_rate_hz == 1000.0


def test_overrides_beat_file(tmp_path):
    f = tmp_path / "c.cfg"
    f.write_text("[cluster]\nseed = 7\n")
    cfg = load_config(str(f), seed=99, interface="rapl")
    assert cfg.seed == 99
    assert cfg.interface is InterfaceKind.RAPL


def test_invalid_values_name_the_field(tmp_path):
    f = tmp_path / "c.cfg"
    f.write_text("[experiment]\nwindow_s = 0.00037\n")
    with pytest.raises(ConfigError, match="window_s"):
        load_config(str(f))
    f.write_text("[cluster]\ninterface = toaster\n")
    with pytest.raises(ConfigError, match="interface"):
        load_config(str(f))
    f.write_text("[schedule]\nsegments = nonsense\n")
    with pytest.raises(ConfigError, match="segments"):
        load_config(str(f))


def test_snapshot_round_trips(tmp_path):
    cfg = load_config(seed=123, controller_gain=0.001)
    text = snapshot(cfg)
    f = tmp_path / "snap.cfg"
    f.write_text(text)
    again = load_config(str(f))
    assert again == cfg


def test_preset_selected_from_config(tmp_path):
    f = tmp_path / "c.cfg"
    f.write_text("[cluster]\npreset = r320-methods\n")
    assert load_config(str(f)).preset == "r320-methods"
    f.write_text("[cluster]\npreset = r9000\n")
    with pytest.raises(ConfigError, match="preset"):
        load_config(str(f))


def test_model_noise_scale_validated():
    with pytest.raises(ConfigError, match="model_noise_scale"):
        ExperimentConfig(model_noise_scale=-1.0)

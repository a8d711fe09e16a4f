import copy
import glob
import json
import os

import pytest

from config import DEFAULT_SEED, Settings, load_config, parse_config, resolve
from distributions import Family
from exceptions import ConfigError
from gradient import Coordinate
from market_model import ConstantDemand, LinearCost

CONFIGS = os.path.join(os.path.dirname(__file__), '..', 'configs')


def _joint_data():
    with open(os.path.join(CONFIGS, 'fig4_joint.json')) as f:
        return json.load(f)


@pytest.mark.parametrize("path", sorted(glob.glob(os.path.join(CONFIGS, '*.json'))))
def test_shipped_configs_load(path):
    config = load_config(path)
    assert config.name == os.path.splitext(os.path.basename(path))[0]
    assert config.model.box.contains(config.initial) or config.name == 'stability'


def test_shipped_benchmark_choices():
    staffing = load_config(os.path.join(CONFIGS, 'fig3_staffing.json'))
    assert isinstance(staffing.model.demand, ConstantDemand)
    assert staffing.mode.live == (Coordinate.MU,)
    h2 = load_config(os.path.join(CONFIGS, 'fig6_h2.json'))
    assert isinstance(h2.model.cost, LinearCost)
    assert h2.service_spec.family == Family.HYPEREXP2 and h2.service_spec.scv == 8
    e8 = load_config(os.path.join(CONFIGS, 'fig6_e8.json'))
    assert e8.service_spec.phases == 8
    sweep = load_config(os.path.join(CONFIGS, 'fig5_heavy_traffic.json')).sweep
    assert sweep.scales == (10, 50, 100, 500, 1000, 2000) and sweep.window == (300, 500)
    assert load_config(os.path.join(CONFIGS, 'negative_control.json')).schedule.constant_eta


def test_negative_scv_reports_field_path():
    data = _joint_data()
    data["distributions"]["service"] = {"family": "hyperexp2", "scv": -1}
    with pytest.raises(ConfigError) as excinfo:
        parse_config(data)
    assert any(e.startswith("distributions.service") and "scv" in e for e in excinfo.value.errors)


def test_all_errors_collected_at_once():
    data = _joint_data()
    data["schedule"]["xi"] = 1.5
    data["model"]["box"]["mu"] = [5, 1]
    data["initial"].pop("p")
    with pytest.raises(ConfigError) as excinfo:
        parse_config(data)
    errors = excinfo.value.errors
    assert any(e.startswith("schedule") for e in errors)
    assert any(e.startswith("model.box") for e in errors)
    assert any(e.startswith("initial.p") for e in errors)


def test_sweep_window_and_base_size_are_checked():
    data = _joint_data()
    data["sweep"] = {"scales": [10, 100], "window": [300, 600]}
    with pytest.raises(ConfigError) as excinfo:
        parse_config(data)
    assert any(e.startswith("sweep.window") and "500" in e for e in excinfo.value.errors)
    data["sweep"]["window"] = [400, 300]
    with pytest.raises(ConfigError):
        parse_config(data)
    data["sweep"] = {"scales": [10, 100]}
    data["model"]["demand"] = {"family": "constant", "rate": 6.385}
    with pytest.raises(ConfigError) as excinfo:
        parse_config(data)
    assert any(e.startswith("sweep.base_size") for e in excinfo.value.errors)
    data["sweep"]["base_size"] = 10
    assert parse_config(data).sweep.base_size == 10


def test_step_gains_and_pairing_are_read():
    config = load_config(os.path.join(CONFIGS, 'fig4_joint.json'))
    assert config.schedule.mu_gain == 6 and config.schedule.p_gain == 0.8
    assert config.model.box.p_hi == 8
    assert config.paired
    data = _joint_data()
    data["regret"]["paired"] = False
    assert not parse_config(data).paired


def test_unknown_families_and_freeze_targets():
    data = copy.deepcopy(_joint_data())
    data["model"]["demand"]["family"] = "sigmoid"
    data["mode"]["freeze"] = ["demand"]
    with pytest.raises(ConfigError) as excinfo:
        parse_config(data)
    assert any(e.startswith("model.demand.family") for e in excinfo.value.errors)
    assert any(e.startswith("mode.freeze") for e in excinfo.value.errors)


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(str(tmp_path / "missing.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(str(bad))


def test_settings_from_environment(monkeypatch):
    monkeypatch.setenv('QUEUE_LAB_SEED', '7')
    monkeypatch.setenv('QUEUE_LAB_THREADS', '3')
    monkeypatch.setenv('QUEUE_LAB_OUT_DIR', 'runs')
    monkeypatch.setenv('QUEUE_LAB_LOG_LEVEL', 'debug')
    settings = Settings.from_env()
    assert (settings.seed, settings.threads, settings.out_dir, settings.log_level) == (7, 3, 'runs', 'DEBUG')

    monkeypatch.setenv('QUEUE_LAB_SEED', 'abc')
    with pytest.raises(ConfigError):
        Settings.from_env()


def test_flag_over_env_over_file(monkeypatch):
    for key in ('QUEUE_LAB_SEED', 'QUEUE_LAB_THREADS', 'QUEUE_LAB_OUT_DIR'):
        monkeypatch.delenv(key, raising=False)
    config = load_config(os.path.join(CONFIGS, 'fig4_joint.json'))
    quiet = Settings.from_env()
    assert config.with_overrides(quiet).run.seed == DEFAULT_SEED
    assert config.with_overrides(quiet).out_dir == 'output/fig4_joint'

    monkeypatch.setenv('QUEUE_LAB_SEED', '99')
    monkeypatch.setenv('QUEUE_LAB_OUT_DIR', 'runs')
    env = Settings.from_env()
    assert config.with_overrides(env).run.seed == 99
    assert config.with_overrides(env).out_dir == os.path.join('runs', 'fig4_joint')
    overridden = config.with_overrides(env, seed=5, threads=2, out='here')
    assert (overridden.run.seed, overridden.run.threads, overridden.out_dir) == (5, 2, 'here')
    assert resolve(None, None, None, 4) == 4

import math
from pathlib import Path

import pytest

from gammahom.config import ConfigError, ExperimentConfig, config_from_dict, parse_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_defaults():
    cfg = config_from_dict({})
    assert (cfg.dim, cfg.coefficient, cfg.profile) == (1, "cos1d", "sine4")
    assert (cfg.M, cfg.m, cfg.n_list) == (512, 32, [4, 8, 16, 32, 64])
    assert cfg.linear_term_factor == 2.0 and cfg.richardson
    assert cfg.residual_slope_range == [1.8, 2.2]
    assert config_from_dict({"experiment": {"dim": 2}}).residual_slope_range == [1.7, 2.3]
    sine = cfg.rl.cases[1]
    assert sine.limit == pytest.approx(-1 / (2 * math.pi)) and sine.ns[-1] == 64
    assert [c.tolerance for c in cfg.lp.cases] == [1e-12, 1e-6]


def test_hash_ignores_output_location():
    a = config_from_dict({"experiment": {"output": "a"}})
    b = config_from_dict({"experiment": {"output": "b", "cache": "c"}})
    assert a.hash() == b.hash()
    assert a.hash() != config_from_dict({"resolution": {"m": 16}}).hash()


def test_comma_string_n_list():
    assert config_from_dict({"resolution": {"n_list": "4, 8,16"}}).n_list == [4, 8, 16]


def test_decreasing_n_list_rejected():
    with pytest.raises(ConfigError, match="n-list must be strictly increasing"):
        config_from_dict({"resolution": {"n_list": "8,4"}})


def test_unknown_preset_lists_valid_ones():
    with pytest.raises(ConfigError, match="valid presets: .*cos1d"):
        config_from_dict({"coefficient": {"preset": "zigzag"}})
    with pytest.raises(ConfigError, match="valid presets: bump, sine4"):
        config_from_dict({"profile": {"preset": "gauss"}})


def test_unknown_keys_and_sections():
    with pytest.raises(ConfigError, match="unknown key 'MM'"):
        config_from_dict({"resolution": {"MM": 4}})
    with pytest.raises(ConfigError, match=r"unknown section \[plots\]"):
        config_from_dict({"plots": {}})
    with pytest.raises(ConfigError, match="unknown weight"):
        config_from_dict({"rl": {"case": [{"weight": "square"}]}})
    with pytest.raises(ConfigError, match="unknown integrand"):
        config_from_dict({"lp": {"case": [{"integrand": "cubic"}]}})


def test_problems_are_itemized():
    with pytest.raises(ConfigError) as info:
        config_from_dict({"experiment": {"dim": 3}, "resolution": {"M": 5, "m": 4},
                          "solver": {"tol": -1.0, "variant": "x"}})
    assert len(info.value.problems) == 5
    assert str(info.value).count("\n  - ") == 5


def test_parse_file(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text('[experiment]\ndim = 2\n[coefficient]\npreset = "laminate"\n'
                 '[resolution]\nM = 64\nn_list = [2, 4, 8]\n[lp]\nenabled = false\n')
    cfg = parse_config(p)
    assert (cfg.dim, cfg.coefficient, cfg.M, cfg.n_list) == (2, "laminate", 64, [2, 4, 8])
    assert not cfg.lp.enabled
    assert isinstance(cfg, ExperimentConfig)


def test_parse_errors(tmp_path):
    with pytest.raises(ConfigError, match="does not exist"):
        parse_config(tmp_path / "missing.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("[experiment\n")
    with pytest.raises(ConfigError):
        parse_config(bad)


@pytest.mark.parametrize("name", ["cos1d", "laminate2d", "identity1d"])
def test_shipped_configs_parse(name):
    parse_config(CONFIGS / f"{name}.toml")

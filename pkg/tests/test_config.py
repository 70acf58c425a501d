import json

import pytest

from sigportfolio.config import ConfigError, load_config, validate_config


def test_minimal_and_full_sections():
    validate_config({})
    validate_config({"seed": 1, "threads": 8,
                     "simulation": {"model": "bs", "d": 2, "steps": 10},
                     "training": {"beta": "tune", "gamma_grid": {"low": 0, "high": 1}},
                     "backtest": {"tc_levels": [0, 0.05]}})


@pytest.mark.parametrize("cfg,where", [
    ({"simulation": {"model": "bs", "d": 2, "steps": 10, "extra": 1}}, "simulation"),
    ({"simulation": {"model": "bs", "d": 0, "steps": 10}}, "simulation/d"),
    ({"training": {"beta": "auto"}}, "training/beta"),
    ({"features": {"family": "lstm"}}, "features/family"),
    ({"data": {"windows": {"T_ins": 10}}}, "data/windows"),
    ({"unknown": True}, "<root>"),
])
def test_rejections_name_the_location(cfg, where):
    with pytest.raises(ConfigError, match=f"at {where}"):
        validate_config(cfg)


def test_load(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"seed": 3}), encoding="utf-8")
    assert load_config(p) == {"seed": 3}
    p.write_text("[1,", encoding="utf-8")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(p)
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "none.json")

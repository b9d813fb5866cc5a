from __future__ import annotations

import pytest

from smot.config import config_hash, init_config, load_config, parse_routes, parse_sweep
from smot.errors import ConfigError

TWO_MATURITIES = """\
[problem]
spot = 100.0
maturities = 2
instrument = "put"

[[marginals]]
points = [80.0, 90.0, 100.0]
weights = [0.3, 0.4, 0.3]

[[marginals]]
points = [70.0, 90.0, 100.0]
weights = [0.3, 0.4, 0.3]

[payoff]
kind = "asian"
strike = 80.0
"""


def test_template_loads(tmp_path):
    path = init_config(tmp_path / "problem.toml")
    cfg = load_config(path)
    assert cfg.problem.spot == 100.0
    assert cfg.problem.instrument == "put"
    assert cfg.marginals[0].points == [80.0, 90.0, 100.0]
    assert cfg.payoff.kind == "forward"
    assert cfg.prediction_set.kind == "all_paths"
    assert cfg.pricing.routes == ("direct", "beta")
    assert cfg.output.report == "report.json"
    assert cfg.report_options().routes == ("direct", "beta")
    assert cfg.pricing_options().solver.pivot_rule == "dantzig"


def test_init_refuses_to_overwrite(tmp_path):
    path = init_config(tmp_path / "problem.toml")
    with pytest.raises(FileExistsError):
        init_config(path)


def test_errors_name_the_field(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text(TWO_MATURITIES.replace("[0.3, 0.4, 0.3]\n\n[payoff]", "[0.3, 0.7]\n\n[payoff]"))
    with pytest.raises(ConfigError, match=r"marginals\[1\]\.weights"):
        load_config(path)

    path.write_text(TWO_MATURITIES.replace('kind = "asian"', 'kind = "digital"'))
    with pytest.raises(ConfigError, match=r"payoff\.kind"):
        load_config(path)

    path.write_text(TWO_MATURITIES.replace("maturities = 2", "maturities = 3"))
    with pytest.raises(ConfigError, match="maturities"):
        load_config(path)

    path.write_text(TWO_MATURITIES.replace("spot = 100.0", 'spot = "high"'))
    with pytest.raises(ConfigError, match=r"problem\.spot"):
        load_config(path)


def test_syntax_errors_and_missing_files(tmp_path):
    path = tmp_path / "broken.toml"
    path.write_text("[problem\nspot = 1\n")
    with pytest.raises(ConfigError):
        load_config(path)
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "absent.toml")


def test_strike_menu_and_table_mask(tmp_path):
    path = tmp_path / "menu.toml"
    text = TWO_MATURITIES + """
[prediction_set]
kind = "table"
paths = [[80.0, 70.0], [90.0, 90.0]]

[pricing]
strike_menu = { "1" = [90.0, 100.0] }
"""
    path.write_text(text)
    cfg = load_config(path)
    assert cfg.pricing.strike_menu == {1: (90.0, 100.0)}
    assert cfg.prediction_set.paths == ((80.0, 70.0), (90.0, 90.0))


def test_config_hash_tracks_bytes_and_overrides(tmp_path):
    path = init_config(tmp_path / "problem.toml")
    base = config_hash(path)
    assert base == config_hash(path, {})
    assert base != config_hash(path, {"seed": 1})
    path.write_text(path.read_text() + "\n")
    assert base != config_hash(path)


def test_parse_sweep():
    spec = parse_sweep("proxy_factor=10, 100,1000")
    assert spec.axis == "proxy_factor"
    assert spec.values == (10.0, 100.0, 1000.0)
    for bad in ("depth=1,2", "N", "N=", "N=1,x"):
        with pytest.raises(ConfigError):
            parse_sweep(bad)


def test_parse_routes():
    assert parse_routes("direct, beta") == ("direct", "beta")
    with pytest.raises(ConfigError):
        parse_routes("direct,closed_form")
    with pytest.raises(ConfigError):
        parse_routes(" , ")

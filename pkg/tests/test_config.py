import datetime as dt
from pathlib import Path

import pytest

from l2congestion.config import RunConfig, parse_config
from l2congestion.errors import ConfigError


def write(tmp_path, text):
    p = tmp_path / "run.yaml"
    p.write_text(text)
    return p


def test_minimal_config_defaults(tmp_path, raw_csv):
    panel = raw_csv()
    cfg = parse_config(write(tmp_path, f"panel: {panel.name}\n"))
    assert cfg.panel == tmp_path / panel.name
    assert cfg.hac_lag_levels == 10 and cfg.hac_lag_diff == 7
    assert cfg.knot == 0.80
    assert set(cfg.fdr_family) == {"log_basefee", "log_scarcity"}
    assert cfg.confirmatory_start == dt.date(2021, 8, 5)
    assert cfg.confirmatory_end == dt.date(2024, 3, 12)
    assert cfg.cf_percentile == 10.0


def test_unknown_key_named(tmp_path):
    with pytest.raises(ConfigError, match="fooo"):
        parse_config(write(tmp_path, "fooo: 1\n"))


def test_window_order(tmp_path):
    with pytest.raises(ConfigError, match="precedes"):
        parse_config(write(tmp_path, "cf_start: 2024-01-10\ncf_end: 2023-12-01\n"))


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="does not exist"):
        parse_config(write(tmp_path, "panel: nowhere.csv\n"))


@pytest.mark.parametrize("text", ["knot: 1.5\n", "hac_lag_levels: 2.5\n", "ecm_gate_mode: maybe\n",
                                  "fdr_family: log_basefee\n", "- a\n- b\n", "key: [unclosed\n"])
def test_invalid_values(tmp_path, text):
    with pytest.raises(ConfigError):
        parse_config(write(tmp_path, text))


def test_overrides_and_hash(tmp_path):
    a = parse_config(write(tmp_path, "seed: 5\n"))
    b = parse_config(tmp_path / "run.yaml", seed=6, out_dir=Path("elsewhere"))
    assert b.seed == 6 and b.out_dir == Path("elsewhere")
    assert a.hash() != b.hash()
    assert a.hash() == a.replace(out_dir=Path("other")).hash()
    assert RunConfig().hash() == RunConfig().hash()

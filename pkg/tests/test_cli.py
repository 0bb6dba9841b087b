import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from l2congestion import cli, tsdiag
from l2congestion.config import parse_config

GOLDEN = Path(__file__).parent / "golden"
pytestmark = pytest.mark.filterwarnings("ignore:shock")


def config(tmp_path, text="seed: 7\nplacebo_reps: 20\n"):
    p = tmp_path / "run.yaml"
    p.write_text(text)
    return p


def read_table(path):
    return pd.read_csv(path, comment="#")


def test_estimate_without_construct(tmp_path):
    out = tmp_path / "out"
    code = cli.main(["estimate", "--config", str(config(tmp_path)), "--out", str(out)])
    assert code == 2
    err = json.loads((out / "error.json").read_text())
    assert err["error"] == "DependencyError" and "construct required" in err["message"]


def test_config_error_exit_code(tmp_path, capsys):
    code = cli.main(["validate", "--config", str(config(tmp_path, "fooo: 1\n")), "--out", str(tmp_path / "o")])
    assert code == 2
    assert "fooo" in capsys.readouterr().err


def test_golden_ecm(tmp_path):
    out = tmp_path / "out"
    assert cli.main(["synth", "estimate", "--config", str(config(tmp_path)), "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert "ecm.csv" in manifest["files"]
    assert (out / "ecm.csv").read_bytes() == (GOLDEN / "ecm_seed7.csv").read_bytes()


def test_tables_carry_header(tmp_path):
    out = tmp_path / "out"
    cfg = parse_config(config(tmp_path), out_dir=out)
    cli.run_report(cfg, ["synth"])
    first = (out / "constructed.csv").read_text().splitlines()[0]
    assert first == f"# l2congestion 0.1.0 config={cfg.hash()} table=constructed.csv"


def test_diagnose_is_pass_through(tmp_path):
    out = tmp_path / "out"
    cfg = parse_config(config(tmp_path), out_dir=out)
    cli.run_report(cfg, ["synth", "diagnose"])
    table = read_table(out / "unit_roots.csv")
    data = pd.read_csv(out / "constructed.csv", comment="#", index_col="date", parse_dates=["date"])
    sub = data.loc["2021-08-05":"2024-03-12"]
    direct = tsdiag.adf_test(sub["a_clean"], "trend")
    row = table[(table["series"] == "a_clean") & (table["test"] == "adf") & (table["transform"] == "level")]
    assert float(row["statistic"].iloc[0]) == pytest.approx(direct.statistic, rel=1e-11)
    assert float(row["p_value"].iloc[0]) == pytest.approx(direct.p_value, rel=1e-11)


def test_full_pipeline_deterministic(tmp_path):
    cfgp = config(tmp_path)
    args = ["synth", "validate", "diagnose", "estimate", "lp", "iv", "power", "counterfactual", "placebo"]
    manifests = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert cli.main(args + ["--config", str(cfgp), "--out", str(out)]) == 0
        manifests.append((out / "manifest.json").read_bytes())
    assert manifests[0] == manifests[1]
    files = json.loads(manifests[0])["files"]
    for name in ("lp.csv", "iv.csv", "power.csv", "cf_path.csv", "welfare_grid.csv", "placebo.csv"):
        assert name in files
    iv_tab = read_table(tmp_path / "a" / "iv.csv").set_index("method")
    assert abs(iv_tab.loc["2sls", "beta"] - iv_tab.loc["control_function", "beta"]) < 1e-6
    lp = read_table(tmp_path / "a" / "lp.csv")
    assert np.allclose(lp["cumulative_pct_10pp"], 100 * np.expm1(0.1 * np.cumsum(lp["beta"])), atol=1e-8)


def test_seed_override_changes_outputs(tmp_path):
    cfgp = config(tmp_path)
    for seed, out in (("1", "s1"), ("2", "s2")):
        assert cli.main(["synth", "--config", str(cfgp), "--out", str(tmp_path / out), "--seed", seed]) == 0
    assert (tmp_path / "s1" / "synth_panel.csv").read_bytes() != (tmp_path / "s2" / "synth_panel.csv").read_bytes()


def test_external_panel(tmp_path, raw_csv):
    from l2congestion import synth
    fx = synth.realistic_fixture(seed=3)
    panel = fx.data.drop(columns=["a_clean", "log_basefee", "d_star", "ect_true", "z_true"])
    path = tmp_path / "panel.csv"
    panel.rename_axis("date").reset_index().assign(date=lambda d: d["date"].dt.strftime("%Y-%m-%d")) \
        .to_csv(path, index=False)
    cfgp = config(tmp_path, "panel: panel.csv\n")
    assert cli.main(["validate", "construct", "--config", str(cfgp), "--out", str(tmp_path / "o")]) == 0
    v = read_table(tmp_path / "o" / "validation.csv").set_index("check")
    assert int(v.loc["rows", "value"]) == 1245

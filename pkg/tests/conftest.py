import numpy as np
import pandas as pd
import pytest

from l2congestion.panel import REQUIRED_COLUMNS


def raw_frame(n=40, start="2022-01-01", seed=0):
    """Small well-formed raw panel in the standard schema."""
    rng = np.random.default_rng(seed)
    dates = pd.date_range(start, periods=n, freq="D")
    l1 = rng.uniform(900, 1100, n)
    df = pd.DataFrame({
        "date": dates.strftime("%Y-%m-%d"),
        "l2_user_tx": rng.uniform(2000, 4000, n),
        "l1_tx_raw": l1,
        "posting_tx": rng.uniform(10, 50, n),
        "basefee_median_gwei": rng.uniform(10, 60, n),
        "tip_median_gwei": rng.uniform(1, 3, n),
        "blob_fee_gwei": np.zeros(n),
        "gas_used_total": rng.uniform(1e11, 1.2e11, n),
        "utilization": rng.uniform(0.8, 1.2, n),
        "eth_logret": rng.normal(0, 0.03, n),
        "cex_logvol": rng.normal(20, 1, n),
        "rvol": rng.uniform(0.3, 0.9, n),
        "trends": rng.uniform(20, 80, n),
        "stable_issuance": rng.normal(0, 1e8, n),
        "eth_price_mean": rng.uniform(1500, 2500, n),
        "eth_price_close": rng.uniform(1500, 2500, n),
    })
    assert list(df.columns) == list(REQUIRED_COLUMNS)
    return df


@pytest.fixture
def raw_csv(tmp_path):
    def make(df=None, name="panel.csv", **kw):
        df = raw_frame(**kw) if df is None else df
        path = tmp_path / name
        df.to_csv(path, index=False)
        return path
    return make


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    def record(number: int, passed: bool, detail: str):
        line = f"ACCEPTANCE {number:>2} {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        assert passed, line
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])

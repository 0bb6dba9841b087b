import datetime as dt
import json
import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from l2congestion import measures
from l2congestion.errors import DegeneracyError, DomainError, IntegrityError
from l2congestion.panel import ShockCatalog, ShockEvent, UpgradeCalendar, load_panel
from l2congestion.synth import realistic_fixture

from .conftest import raw_frame


class TestPostingCleanShare:
    def test_no_posting(self):
        assert measures.posting_clean_share(80, 20, 0) == pytest.approx(0.8)

    def test_posting_removed_from_denominator(self):
        assert measures.posting_clean_share(80, 30, 10) == pytest.approx(0.8)

    def test_empty_day_is_missing(self):
        assert math.isnan(measures.posting_clean_share(0, 0, 0))

    def test_posting_exceeding_l1(self):
        with pytest.raises(IntegrityError):
            measures.posting_clean_share(10, 5, 6)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0, 1e7), st.floats(0, 1e7), st.floats(0, 1), st.floats(1e-3, 1e3))
    def test_scale_invariant_and_bounded(self, l2, l1, frac, k):
        post = frac * l1
        s = measures.posting_clean_share(l2, l1, post)
        if math.isnan(s):
            return
        assert 0 <= s <= 1
        assert_allclose(measures.posting_clean_share(k * l2, k * l1, k * post), s, rtol=1e-9, atol=1e-12)


class TestScarcity:
    def test_pre_dencun_ignores_blob(self):
        assert_allclose(measures.scarcity_index(30, 2, 5, 16, False), math.log(2))

    def test_post_dencun_adds_blob(self):
        assert_allclose(measures.scarcity_index(30, 2, 5, 16, True), math.log(37 / 16))
        assert measures.scarcity_index(30, 2, 5, 16, True) == pytest.approx(0.8383, abs=1e-4)

    def test_unit_ratio_is_zero(self):
        assert measures.scarcity_index(14, 2, 9, 16, False) == pytest.approx(0.0)

    def test_non_positive_benchmark(self):
        with pytest.raises(DomainError):
            measures.scarcity_index(30, 2, 0, 0, False)

    def test_zero_numerator(self):
        with pytest.raises(DomainError):
            measures.scarcity_index(0, 0, 0, 1, False)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.01, 1e3), st.floats(0, 1e2), st.floats(0, 1e2), st.floats(1e-2, 1e4),
           st.booleans(), st.floats(1e-3, 1e3))
    def test_joint_scaling_invariance(self, b, t, blob, q, post, k):
        s = measures.scarcity_index(b, t, blob, q, post)
        assert_allclose(measures.scarcity_index(k * b, k * t, k * blob, k * q, post), s, atol=1e-9)


class TestSmoothing:
    def test_weights_follow_raised_cosine(self):
        w = measures.tukey_hanning_weights(3)
        raw = 0.5 * (1 + np.cos(np.pi * np.arange(-3, 4) / 4))
        assert_allclose(w, raw / raw.sum())
        assert_allclose(w, w[::-1])

    def test_constant_preserved_including_edges(self):
        assert_allclose(measures.tukey_hanning_smooth(np.full(12, 7.0)), 7.0)

    def test_interior_matches_direct_sum(self, rng):
        x = rng.normal(size=20)
        w = measures.tukey_hanning_weights(3)
        sm = measures.tukey_hanning_smooth(x)
        assert_allclose(sm[10], np.dot(w, x[7:14]))
        # first day uses the right half of the window only
        assert_allclose(sm[0], np.dot(w[3:], x[:4]) / w[3:].sum())


class TestDemandFactor:
    def _frame(self, arr, cols=None):
        idx = pd.date_range("2022-01-01", periods=arr.shape[0], freq="D")
        cols = cols or [f"v{i}" for i in range(arr.shape[1])]
        return pd.DataFrame(arr, index=idx, columns=cols)

    def test_single_input_is_its_zscore(self, rng):
        x = rng.normal(5, 2, 200)
        df = measures.demand_factor(self._frame(x[:, None]))
        z = (x - x.mean()) / x.std()
        assert_allclose(np.abs(df.scores.to_numpy()), np.abs(z), atol=1e-10)

    def test_perfectly_correlated_pair_has_equal_loadings(self, rng):
        x = rng.normal(size=100)
        df = measures.demand_factor(self._frame(np.column_stack([x, 3 * x + 1])))
        assert_allclose(np.abs(df.loadings.to_numpy()), [1 / np.sqrt(2)] * 2, atol=1e-10)

    def test_planted_factor_direction_recovered(self):
        rng = np.random.default_rng(2024)
        f = rng.normal(size=2000)
        lam = np.array([0.6, 0.5, 0.4, 0.3, 0.2])
        X = f[:, None] * lam + 0.1 * rng.normal(size=(2000, 5))
        df = measures.demand_factor(self._frame(X))
        # planted direction in z-score space
        target = lam / np.sqrt(lam**2 + 0.01)
        target /= np.linalg.norm(target)
        assert np.max(np.abs(np.abs(df.loadings.to_numpy()) - target)) < 0.05

    def test_unit_variance_on_fit_window(self, rng):
        X = rng.normal(size=(300, 3))
        df = measures.demand_factor(self._frame(X), fit_window=("2022-01-01", "2022-06-30"))
        fit = df.scores.loc["2022-01-01":"2022-06-30"]
        assert abs(fit.mean()) < 1e-8 and abs(fit.std(ddof=0) - 1) < 1e-8

    def test_sign_follows_log_basefee(self, rng):
        f = rng.normal(size=400)
        X = np.column_stack([f + 0.3 * rng.normal(size=400) for _ in range(3)])
        lb = pd.Series(2 * f, index=self._frame(X).index)
        up = measures.demand_factor(self._frame(X), log_basefee=lb)
        down = measures.demand_factor(self._frame(X), log_basefee=-lb)
        assert np.corrcoef(up.scores, lb)[0, 1] > 0
        assert_allclose(up.scores, -down.scores)

    def test_column_order_invariance(self, rng):
        X = rng.normal(size=(150, 4)) + rng.normal(size=(150, 1))
        a = measures.demand_factor(self._frame(X, list("abcd")))
        b = measures.demand_factor(self._frame(X[:, ::-1], list("dcba")))
        assert_allclose(a.scores, b.scores, atol=1e-10)

    def test_constant_input_is_degenerate(self, rng):
        X = np.column_stack([rng.normal(size=60), np.ones(60)])
        with pytest.raises(DegeneracyError, match="v1"):
            measures.demand_factor(self._frame(X))

    def test_single_day_gap_forward_filled(self, rng):
        X = rng.normal(size=(60, 2))
        frame = self._frame(X)
        frame.iloc[10, 0] = np.nan
        df = measures.demand_factor(frame)
        assert df.scores.notna().all()
        frame.iloc[20:22, 0] = np.nan
        df = measures.demand_factor(frame)
        assert df.scores.isna().sum() == 1


class TestIndicators:
    def test_merge_day_and_calendar_facts(self):
        dates = pd.date_range("2021-08-01", "2024-03-20", freq="D")
        with pytest.warns(UserWarning):
            ind = measures.build_indicators(dates)
        assert ind.loc["2022-09-15", "regime_merge"] == 1
        assert ind.loc["2022-09-15", "regime_london"] == 0
        assert ind.loc["2022-09-14", "regime_london"] == 1
        assert ind.loc["2024-03-13", "regime_dencun"] == 1
        assert ind.loc["2023-12-31", "cal_weekend"] == 1
        assert ind.loc["2023-12-31", "cal_month_end"] == 1
        assert ind.loc["2023-10-01", "cal_quarter_turn"] == 1
        assert ind.loc["2023-10-02", "cal_quarter_turn"] == 0

    def test_regimes_partition_post_london_days(self):
        dates = pd.date_range("2021-07-01", "2024-12-31", freq="D")
        with pytest.warns(UserWarning):
            ind = measures.build_indicators(dates)
        total = ind[["regime_london", "regime_merge", "regime_dencun"]].sum(axis=1)
        assert (total[dates >= "2021-08-05"] == 1).all()
        assert (total[dates < "2021-08-05"] == 0).all()

    def test_shock_marks_start_day_only(self):
        dates = pd.date_range("2023-03-01", "2023-09-30", freq="D")
        with pytest.warns(UserWarning):
            ind = measures.build_indicators(dates)
        col = ind["shock_arbitrum_airdrop"]
        assert col.sum() == 1 and col.loc["2023-03-23"] == 1
        assert ind["shock_base_onchain_summer"].sum() == 1

    def test_out_of_range_shock_warns(self):
        cat = ShockCatalog((ShockEvent("Launch", "far", dt.date(2030, 1, 1), False),))
        with pytest.warns(UserWarning, match="far"):
            ind = measures.build_indicators(pd.date_range("2022-01-01", periods=5), shocks=cat)
        assert "shock_far" not in ind


class TestConstruct:
    def test_synthetic_panel_round_trip(self, tmp_path):
        fx = realistic_fixture(3)
        raw = fx.data[[c for c in fx.data.columns if c not in ("a_clean", "log_basefee", "d_star",
                                                               "ect_true", "z_true")]]
        path = tmp_path / "raw.csv"
        out = raw.copy()
        out.index = out.index.strftime("%Y-%m-%d")
        out.to_csv(path, index_label="date", float_format="%.17g")
        with pytest.warns(UserWarning):
            cp = measures.construct(load_panel(path), winsor_tail=0.0)
        d = cp.data
        assert_allclose(d["a_clean"], fx.data["a_clean"], atol=1e-12)
        assert_allclose(d["log_basefee"], fx.data["log_basefee"], atol=1e-12)
        assert ((d["a_clean"] >= 0) & (d["a_clean"] <= 1)).all()
        regimes = d[cp.regime_columns()].sum(axis=1)
        assert (regimes == 1).all()
        fit = d.loc[:"2024-03-12", "d_star"]
        assert abs(fit.mean()) < 1e-8 and abs(fit.std(ddof=0) - 1) < 1e-8
        assert np.corrcoef(d["d_star"], fx.data["d_star"])[0, 1] > 0.8

        cp.to_csv(tmp_path / "c.csv", tmp_path / "c.json")
        meta = json.loads((tmp_path / "c.json").read_text())
        assert meta["demand_factor"]["sign"] in (-1, 1)
        assert meta["winsor_stage"] == "after log transforms"

    def test_utilization_capped_and_flagged(self, raw_csv):
        df = raw_frame(n=60, start="2022-01-01")
        df.loc[5, "utilization"] = 1.9
        with pytest.warns(UserWarning):
            cp = measures.construct(load_panel(raw_csv(df)), winsor_tail=0.0,
                                    fit_window=("2022-01-01", "2022-03-01"))
        assert cp.data["utilization"].max() == 1.5
        assert cp.data["flag_util_capped"].sum() == 1
        assert cp.meta["utilization_capped_rows"] == 1

    def test_pre_london_low_adoption_trimmed(self, raw_csv):
        df = raw_frame(n=80, start="2021-07-01")
        df.loc[:4, "l2_user_tx"] = 1.0
        with pytest.warns(UserWarning):
            cp = measures.construct(load_panel(raw_csv(df)), winsor_tail=0.0,
                                    fit_window=("2021-07-01", "2021-09-30"))
        assert len(cp.meta["trimmed_pre_london"]) == 5
        assert len(cp.data) == 75

    def test_lite_variant_uses_three_inputs(self, raw_csv):
        with pytest.warns(UserWarning):
            cp = measures.construct(load_panel(raw_csv(n=60)), demand_variant="lite",
                                    fit_window=("2022-01-01", "2022-03-01"))
        assert cp.meta["demand_factor"]["inputs"] == list(measures.DEMAND_INPUTS_LITE)

    def test_control_block_drops_base_and_constants(self):
        dates = pd.date_range("2022-01-01", periods=40)
        with pytest.warns(UserWarning):
            ind = measures.build_indicators(dates)
        ind["d_star"] = np.linspace(-1, 1, 40)
        X, dropped = measures.control_block(ind)
        assert "regime_london" not in X
        assert "regime_dencun" in dropped["constant"]
        assert "d_star" in X

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from statsmodels.stats.multitest import multipletests

from l2congestion import inference as inf
from l2congestion.errors import DataError, NonRevertingError, OscillatoryError

p_lists = st.lists(st.floats(0, 1, allow_nan=False), min_size=1, max_size=30)


class TestSemiElasticity:
    @pytest.mark.parametrize("beta,expected", [(-1.382, -12.91), (-1.194, -11.25), (0.0, 0.0)])
    def test_known_values(self, beta, expected):
        assert abs(inf.semi_elasticity_10pp(beta) - expected) <= 0.005

    def test_one_decimal_rounding(self):
        assert round(inf.semi_elasticity_10pp(-1.382), 1) == -12.9
        assert round(inf.semi_elasticity_10pp(-1.194), 1) == -11.3

    def test_vectorised(self):
        b = np.array([-1.0, 0.0, 1.0])
        assert_allclose(inf.semi_elasticity_10pp(b), 100 * (np.exp(0.1 * b) - 1))

    @given(st.floats(-50, 50), st.floats(1e-6, 10))
    def test_strictly_increasing(self, b, d):
        assert inf.semi_elasticity_10pp(b + d) > inf.semi_elasticity_10pp(b)


class TestHalfLife:
    def test_values(self):
        assert abs(inf.half_life(-0.061) - 11.01) < 0.005
        assert abs(inf.half_life(-0.061) - 11.1) <= 0.2
        assert inf.half_life(-0.5) == pytest.approx(1.0, abs=1e-15)
        assert inf.half_life(math.sqrt(0.5) - 1) == pytest.approx(2.0, rel=1e-12)
        assert inf.half_life(-0.2929) == pytest.approx(2.0, abs=1e-3)

    def test_errors(self):
        with pytest.raises(NonRevertingError):
            inf.half_life(0.0)
        with pytest.raises(OscillatoryError):
            inf.half_life(-1.0)

    @given(st.floats(-0.999, -1e-4), st.floats(1e-5, 0.5))
    def test_decreasing_in_magnitude(self, phi, d):
        if phi - d > -1:
            assert inf.half_life(phi - d) < inf.half_life(phi)


class TestBhFdr:
    def test_single(self):
        assert inf.bh_fdr([0.03]).q_values[0] == 0.03

    def test_hand_pair(self):
        assert_allclose(inf.bh_fdr([0.01, 0.04]).q_values, [0.02, 0.04])

    def test_tiny_pair_exact(self):
        r = inf.bh_fdr({"log_basefee": 1.5e-8, "log_scarcity": 1.1e-3})
        assert r.q_values[0] == 3.0e-8 and r.q_values[1] == 1.1e-3
        assert r.rejected_at_5pct.all()
        assert list(r.to_frame()["outcome"]) == ["log_basefee", "log_scarcity"]

    def test_input_errors(self):
        with pytest.raises(DataError):
            inf.bh_fdr([0.1, float("nan")])
        with pytest.raises(DataError):
            inf.bh_fdr([1.2])

    @settings(max_examples=200)
    @given(p_lists)
    def test_properties(self, p):
        r = inf.bh_fdr(p)
        q = r.q_values
        assert np.all(q >= np.asarray(p) - 1e-15)
        order = np.argsort(p, kind="mergesort")
        assert np.all(np.diff(q[order]) >= -1e-15)
        bonf = np.asarray(p) * len(p) <= 0.05
        assert np.all(r.rejected_at_5pct[bonf])

    @settings(max_examples=100)
    @given(p_lists)
    def test_matches_statsmodels(self, p):
        _, ref, _, _ = multipletests(p, method="fdr_bh")
        assert_allclose(inf.bh_fdr(p).q_values, ref, rtol=1e-12, atol=1e-300)


class TestMde:
    @pytest.mark.parametrize("se,beta,pct", [(0.47, 1.316, 14.07), (4.37, 12.24, 240.1)])
    def test_reference_rows(self, se, beta, pct):
        r = inf.mde_power(se, 951)
        assert abs(r.mde_beta / beta - 1) <= 0.005
        assert abs(r.mde_pct_10pp / pct - 1) <= 0.005

    def test_reference_table_within_rounding(self):
        assert abs(inf.mde_power(0.47, 951).mde_pct_10pp - 14.01) <= 0.1
        assert abs(inf.mde_power(4.37, 294).mde_pct_10pp - 239.90) <= 0.5

    @given(st.floats(1e-6, 1e3), st.integers(1, 10_000))
    def test_multiplier_exact(self, se, n):
        r = inf.mde_power(se, n)
        assert r.mde_beta / se == pytest.approx(2.8016, rel=1e-12)
        assert_allclose(r.mde_pct_10pp, 100 * math.expm1(0.1 * r.mde_beta))

    def test_white_noise_neff(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=1000)
        rho = [np.corrcoef(x[:-k], x[k:])[0, 1] for k in range(1, 11)]
        r = inf.mde_power(0.5, 1000, autocorr=rho)
        assert abs(r.n_eff / 1000 - 1) < 0.1 and not r.n_eff_clamped
        assert inf.mde_power(0.5, 1000).n_eff == 1000

    def test_clamp_and_errors(self):
        r = inf.mde_power(0.5, 100, autocorr=[-0.9, -0.9])
        assert r.n_eff == 100 and r.n_eff_clamped
        with pytest.raises(DataError):
            inf.mde_power(0.0, 10)
        with pytest.raises(DataError):
            inf.mde_power(1.0, 0)

    def test_positive_autocorrelation_deflates(self):
        n_eff, _ = inf.effective_sample_size(500, [0.5, 0.25])
        # Bartlett weights 2/3, 1/3
        assert_allclose(n_eff, 500 / (1 + 2 * (2 / 3 * 0.5 + 1 / 3 * 0.25)))

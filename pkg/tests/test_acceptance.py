"""Acceptance criteria at their stated tolerances; each prints one PASS/FAIL line."""

import json
import time
import warnings

import numpy as np
import pandas as pd
import pytest

from l2congestion import cfact, cli, estimators, inference, iv, measures, synth, tsdiag

pytestmark = pytest.mark.filterwarnings("ignore:shock")


def random_walk(rng, n):
    return np.cumsum(rng.normal(size=n))


def test_01_semi_elasticity(acceptance):
    t0 = time.perf_counter()
    a = inference.semi_elasticity_10pp(-1.382)
    elapsed = time.perf_counter() - t0
    b = inference.semi_elasticity_10pp(-1.194)
    ok = abs(a + 12.91) <= 0.05 and abs(b + 11.25) <= 0.05 and elapsed < 1e-3
    acceptance(1, ok, f"semi-elasticity -1.382 -> {a:.3f}%, -1.194 -> {b:.3f}% ({elapsed * 1e6:.1f} us)")


def test_02_half_life(acceptance):
    h = inference.half_life(-0.061)
    acceptance(2, abs(h - 11.1) <= 0.2 and abs(h - 11.01) < 0.005, f"half-life(-0.061) = {h:.3f} days")


def test_03_mde(acceptance):
    rows = [(0.47, 1.316, 14.07), (4.37, 12.24, 240.1)]
    ok, parts = True, []
    for se, beta, pct in rows:
        r = inference.mde_power(se, 1)
        ok &= abs(r.mde_beta / beta - 1) <= 0.005 and abs(r.mde_pct_10pp / pct - 1) <= 0.005
        parts.append(f"SE {se} -> ({r.mde_beta:.3f}, {r.mde_pct_10pp:.2f}%)")
    acceptance(3, ok, "MDE " + "; ".join(parts))


def test_04_bh_fdr(acceptance):
    q = inference.bh_fdr([1.5e-8, 1.1e-3]).q_values
    acceptance(4, q[0] == 3.0e-8 and q[1] == 1.1e-3, f"BH q-values {q[0]:.3g}, {q[1]:.3g}")


def test_05_ecm_recovery(acceptance):
    t0 = time.perf_counter()
    psi_hit = phi_hit = 0
    reps = 200
    for s in range(reps):
        d = synth.generate_dgp(synth.DgpSpec(T=1200, psi=-1.0, phi=-0.06, seed=s)).data
        r = estimators.ecm_fit(d["log_basefee"], d["a_clean"], gate_mode="off")
        psi_hit += abs(r.psi + 1.0) <= 1.96 * r.psi_se
        phi_hit += abs(r.phi + 0.06) <= 1.96 * r.phi_se
    elapsed = time.perf_counter() - t0
    cp, cf = psi_hit / reps, phi_hit / reps
    ok = 0.91 <= cp <= 0.99 and 0.91 <= cf <= 0.99 and elapsed < 60
    acceptance(5, ok, f"ECM coverage psi {cp:.3f}, phi {cf:.3f} over {reps} seeds ({elapsed:.1f} s)")


def test_06_engle_granger(acceptance):
    false_rej = power = 0
    for s in range(200):
        rng = np.random.default_rng(60_000 + s)
        res, _ = tsdiag.engle_granger(random_walk(rng, 800), random_walk(rng, 800))
        false_rej += res.p_value < 0.05
        x = random_walk(rng, 800)
        e = np.zeros(800)
        u = rng.normal(size=800)
        for t in range(1, 800):
            e[t] = 0.5 * e[t - 1] + u[t]
        res, _ = tsdiag.engle_granger(2 * x + e, x)
        power += res.p_value < 0.05
    size, pw = false_rej / 200, power / 200
    acceptance(6, size <= 0.15 and pw >= 0.90, f"Engle-Granger size {size:.3f}, power {pw:.3f} (T=800)")


def test_07_prais_winsten_reduction(acceptance):
    worst = 0.0
    fixtures = []
    d = synth.realistic_fixture(seed=1).data
    fixtures.append((d["log_basefee"], d[["a_clean", "d_star"]]))
    for s in range(5):
        rng = np.random.default_rng(s)
        X = pd.DataFrame(rng.normal(size=(300, 3)), columns=list("abc"))
        fixtures.append((X @ [1.0, -2.0, 0.5] + rng.normal(size=300), X))
    for y, X in fixtures:
        pw = estimators.prais_winsten(y, X, hac_lag=10, rho=0.0)
        o = estimators.ols_hac(y, X, 10)
        worst = max(worst, float(np.max(np.abs(pw.coefficients - o.coefficients))))
    acceptance(7, worst <= 1e-6, f"Prais-Winsten rho=0 vs OLS max |diff| {worst:.2e}")


def test_08_iv_identities(acceptance):
    rng = np.random.default_rng(8)
    n = 1000
    z, c, v = rng.normal(size=(3, n))
    a = 0.6 * z + 0.4 * c + v
    y = 1 - a + 0.2 * c + 0.5 * v + rng.normal(size=n)
    y, a, z, C = pd.Series(y, name="y"), pd.Series(a, name="a"), pd.Series(z, name="z"), pd.DataFrame({"c": c})
    self_iv = iv.two_sls(y, a, a, C).beta
    ols = estimators.ols_hac(y, pd.concat([a, C], axis=1), 7).coefficients["a"]
    b2, bcf = iv.two_sls(y, a, z, C).beta, iv.control_function(y, a, z, C).beta
    d1, d2 = abs(self_iv - ols), abs(b2 - bcf)
    acceptance(8, d1 <= 1e-8 and d2 <= 1e-6, f"2SLS(Z=a) - OLS {d1:.1e}; control function - 2SLS {d2:.1e}")


def test_09_kalman_oracle(acceptance):
    rng = np.random.default_rng(9)
    worst = 0.0
    for n in range(2, 9):
        m = cfact.StateSpaceModel(rng.normal(size=n), rng.normal(size=(n, 1)), "local_linear")
        Z, T, Q = m.design(), m.transition(), m.state_cov(0.4, 0.1)
        a1, P1 = np.zeros(m.k), np.eye(m.k) * 3.0
        kf = cfact.kalman_filter(m.y, Z, T, Q, 0.5, a1, P1).loglik
        worst = max(worst, abs(kf - cfact.gaussian_loglik_bruteforce(m.y, Z, T, Q, 0.5, a1, P1)))
    y = np.cumsum(rng.normal(size=300)) + rng.normal(size=300)
    out = cfact.kalman_filter(y, np.ones((300, 1)), np.eye(1), np.eye(1), 1.0, np.zeros(1), np.eye(1) * 1e6)
    gain_err = abs(out.K[-1, 0] / cfact.steady_state_gain(1.0) - 1)
    acceptance(9, worst <= 1e-8 and gain_err <= 0.02,
               f"Kalman loglik max |diff| {worst:.1e} (T<=8); steady-state gain rel. error {gain_err:.1e}")


def test_10_welfare(acceptance):
    w = cfact.welfare_usd([50.0], [45.0], [0.0], [1e11], [2000.0]).usd_total
    rng = np.random.default_rng(10)
    bo, bc = rng.uniform(10, 100, 50), rng.uniform(10, 100, 50)
    gas, price = rng.uniform(1e11, 1.2e11, 50), rng.uniform(1500, 4000, 50)
    one = cfact.welfare_usd(bo, bc, np.zeros(50), gas, price).usd_daily.to_numpy()
    two = cfact.welfare_usd(bc + 2 * (bo - bc), bc, np.zeros(50), gas, price).usd_daily.to_numpy()
    lin = float(np.max(np.abs(two - 2 * one) / np.maximum(np.abs(one), 1)))
    acceptance(10, w == 1_000_000.0 and lin < 1e-12, f"welfare {w:,.2f} USD/day; linearity rel. error {lin:.1e}")


def test_11_local_projections(acceptance):
    rng = np.random.default_rng(11)
    irf = estimators.local_projections(rng.normal(size=500), rng.normal(size=500), H=28)
    err = float(np.max(np.abs(estimators.cumulative_pct_10pp(irf.beta_h) - irf.cumulative_pct_10pp)))
    b0 = np.log(0.838) / 0.10
    pct = estimators.cumulative_pct_10pp([-1.767])[0]
    ok = err <= 1e-12 and abs(pct + 16.2) <= 0.1 and abs(b0 + 1.767) < 5e-4
    acceptance(11, ok, f"LP cumulative recomputation {err:.1e}; beta0 -1.767 -> {pct:.2f}%")


def test_12_placebo(acceptance):
    built = measures.construct(synth.realistic_fixture(seed=12).panel).data
    sub = built.loc["2021-08-05":"2024-03-12"]
    ctrl, _ = measures.control_block(sub)
    seeds = np.random.SeedSequence(12).generate_state(200, dtype=np.uint64)
    rej = 0
    for s in seeds:
        sh = synth.placebo_shuffle(sub, "a_clean", int(s))
        r = estimators.ecm_fit(sh["log_basefee"], sh["a_clean"], ctrl, gate_mode="off")
        rej += r.psi_p < 0.05
    rate = rej / 200
    acceptance(12, rate <= 0.10, f"placebo rejection rate {rate:.3f} over 200 shuffles")


def test_13_determinism(acceptance, tmp_path):
    cfgp = tmp_path / "run.yaml"
    cfgp.write_text("seed: 13\nplacebo_reps: 50\n")
    args = ["synth", "validate", "diagnose", "estimate", "lp", "iv", "power", "counterfactual", "placebo"]
    blobs = []
    for run in ("first", "second"):
        out = tmp_path / run
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            code = cli.main(args + ["--config", str(cfgp), "--out", str(out)])
        assert code == 0
        blobs.append((out / "manifest.json").read_bytes())
    n = len(json.loads(blobs[0])["files"])
    acceptance(13, blobs[0] == blobs[1], f"manifest identical across two runs ({n} files)")

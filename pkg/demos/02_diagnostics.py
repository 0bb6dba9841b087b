"""Stationarity, cointegration and residual-dependence checks on a synthetic panel."""

import warnings

import pandas as pd

from l2congestion import estimators, measures, synth, tsdiag

warnings.filterwarnings("ignore", message="shock")

d = measures.construct(synth.realistic_fixture(seed=2).panel).data
sub = d.loc["2021-08-05":"2024-03-12"]

table = tsdiag.diagnostics_table({c: sub[c] for c in ("a_clean", "log_basefee", "d_star")})
print(table[["series", "test", "transform", "statistic", "p_value", "reject_5pct"]].to_string(index=False))

# levels are persistent, differences are not; the fee and adoption still share a long-run relation
ctrl, _ = measures.control_block(sub)
eg, resid = tsdiag.engle_granger(sub["log_basefee"], pd.concat([sub[["a_clean"]], ctrl], axis=1))
print(f"\nEngle-Granger: stat {eg.statistic:.2f}, p {eg.p_value:.2e}, stochastic regressors {eg.extra['n_vars']}")

# residual dependence before and after error correction
levels = estimators.ols_hac(sub["log_basefee"], pd.concat([sub[["a_clean"]], ctrl], axis=1), 10)
ecm = estimators.ecm_fit(sub["log_basefee"], sub["a_clean"], ctrl)
for name, e in (("levels", levels.residuals), ("ECM", ecm.stage_results[1].residuals)):
    dep = tsdiag.residual_dependence(e, 10)
    print(f"{name:>6}: DW {dep.durbin_watson:.2f}, max |ACF 1-10| {dep.max_abs_acf_1_10:.2f}")

print("\nVIF:", tsdiag.vif(sub[["a_clean", "d_star"]]).round(3).to_dict())

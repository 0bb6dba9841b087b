"""State-space counterfactual with adoption held at a low percentile, priced in dollars."""

import warnings

from l2congestion import cfact, measures, synth

warnings.filterwarnings("ignore", message="shock")

d = measures.construct(synth.realistic_fixture(seed=5).panel).data
res = cfact.counterfactual_analysis(d, ("2023-10-28", "2024-03-12"), percentile=10)

print("variances:", {k: f"{v:.2e}" for k, v in res.fit.variances.items()})
print("coefficients:", res.fit.coefficients.round(3).to_dict())
print(f"adoption fixed at p10 = {res.a_fixed:.3f}; mean log gap {res.path.mean_log_gap:+.4f}")

# USD_t = (BF_obs - BF_cf + 1_tip * TIP) * GAS * 1e-9 * P_t; negative when fees would have been higher
w = res.welfare
print(f"total {w.usd_total:,.0f} USD, 95% band [{w.ci[0]:,.0f}, {w.ci[1]:,.0f}]")
print("\nscenario grid:\n", res.grid.round(2).to_string(index=False))

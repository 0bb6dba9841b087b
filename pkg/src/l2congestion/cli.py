"""Batch front end: ``l2congestion <command> --config <path> [--out <dir>] [--seed <u64>]``.

Each command reads its inputs from the config or from artifacts written by an
earlier command in the same output directory, writes CSV tables whose first
line is a comment carrying the toolkit version and config hash, and records
every file's SHA-256 in ``manifest.json``.  Failures write ``error.json`` and
exit with 2 (config), 3 (data) or 4 (estimation).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import warnings
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__, cfact, estimators, inference, iv, linalg, measures, synth, tsdiag
from .config import RunConfig, parse_config
from .errors import DependencyError, DomainError, L2CongestionError
from .panel import REQUIRED_COLUMNS, UpgradeCalendar, default_shock_catalog, load_panel, load_shock_catalog, \
    validate_support

COMMANDS = ("synth", "validate", "construct", "diagnose", "estimate", "lp", "iv", "power",
            "counterfactual", "placebo")
FLOAT_FORMAT = "%.12g"
log = logging.getLogger("l2congestion")


class Runner:
    """Executes commands against one output directory."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(cfg.out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.header = f"# l2congestion {__version__} config={cfg.hash()}"
        self.calendar = UpgradeCalendar(cfg.london, cfg.merge, cfg.dencun)
        self._written: list[str] = []

    # output helpers ---------------------------------------------------------

    def write_table(self, name: str, df: pd.DataFrame, index: bool = False) -> Path:
        path = self.out / name
        df = df.copy()
        if isinstance(df.index, pd.DatetimeIndex):
            df.index = df.index.strftime("%Y-%m-%d")
            df.index.name = "date"
            index = True
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.header + f" table={name}\n")
            df.to_csv(fh, index=index, float_format=FLOAT_FORMAT, lineterminator="\n")
        self._written.append(name)
        return path

    def write_json(self, name: str, obj) -> Path:
        path = self.out / name
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(_plain(obj), fh, indent=2, sort_keys=True)
            fh.write("\n")
        self._written.append(name)
        return path

    def update_manifest(self, commands) -> dict:
        path = self.out / "manifest.json"
        manifest = {"files": {}, "commands": []}
        if path.exists():
            manifest = json.loads(path.read_text(encoding="utf-8"))
        for name in self._written:
            manifest["files"][name] = hashlib.sha256((self.out / name).read_bytes()).hexdigest()
        manifest["commands"] = sorted(set(manifest.get("commands", [])) | set(commands),
                                      key=COMMANDS.index)
        manifest["version"] = __version__
        manifest["config_hash"] = self.cfg.hash()
        manifest["files"] = dict(sorted(manifest["files"].items()))
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        self._written.clear()
        return manifest

    # inputs ----------------------------------------------------------------

    def panel_path(self) -> Path:
        if self.cfg.panel is not None:
            return Path(self.cfg.panel)
        p = self.out / "synth_panel.csv"
        if p.exists():
            return p
        raise DependencyError("no panel: set 'panel' in the config or run synth first")

    def catalog(self):
        return load_shock_catalog(self.cfg.shocks) if self.cfg.shocks else default_shock_catalog()

    def constructed(self) -> pd.DataFrame:
        p = self.out / "constructed.csv"
        if not p.exists():
            raise DependencyError("construct required: run 'construct' before this command")
        return pd.read_csv(p, comment="#", index_col="date", parse_dates=["date"])

    def confirmatory(self, data):
        return data.loc[pd.Timestamp(self.cfg.confirmatory_start):pd.Timestamp(self.cfg.confirmatory_end)]

    # commands --------------------------------------------------------------

    def synth(self):
        cfg = self.cfg
        fx = synth.realistic_fixture(cfg.seed, T=cfg.synth_T, beta=cfg.synth_beta, psi=cfg.synth_psi,
                                     phi=cfg.synth_phi, sigma=cfg.synth_sigma, calendar=self.calendar,
                                     start=cfg.london)
        raw = fx.data[[c for c in REQUIRED_COLUMNS if c != "date"]]
        self.write_table("synth_panel.csv", raw)
        self.write_table("synth_chain_shocks.csv", fx.chain_shocks_long())
        self.write_table("synth_weights.csv",
                         pd.DataFrame(fx.spec.chain_weights, columns=["chain", "weight"]))
        s = fx.spec
        self.write_json("synth_truth.json", {"T": s.T, "beta": s.beta, "psi": s.psi, "phi": s.phi,
                                             "c": s.c, "gamma": s.gamma, "sigma": s.sigma, "seed": s.seed})
        if self.cfg.panel is None:
            self.construct()

    def validate(self):
        panel = load_panel(self.panel_path())
        cp = measures.construct(panel, self.calendar, self.catalog(), winsor_tail=0.0,
                                trim_pre_london=self.cfg.trim_pre_london,
                                demand_variant=self.cfg.demand_variant)
        rows = [{"check": "rows", "value": len(panel)},
                {"check": "dropped_listwise", "value": panel.meta["dropped_count"]},
                {"check": "calendar_gaps", "value": len(panel.gaps)},
                {"check": "first_date", "value": panel.dates.min().date().isoformat()},
                {"check": "last_date", "value": panel.dates.max().date().isoformat()}]
        windows = {"confirmatory": (self.cfg.confirmatory_start, self.cfg.confirmatory_end),
                   "counterfactual": (self.cfg.cf_start, self.cfg.cf_end)}
        for name, win in windows.items():
            sup = validate_support(cp.panel, "a_clean", win)
            for k, v in sup.as_dict().items():
                rows.append({"check": f"support_{name}_{k}", "value": v})
        self.write_table("validation.csv", pd.DataFrame(rows))

    def construct(self):
        panel = load_panel(self.panel_path())
        cp = measures.construct(panel, self.calendar, self.catalog(), winsor_tail=self.cfg.winsor_tail,
                                trim_pre_london=self.cfg.trim_pre_london,
                                demand_variant=self.cfg.demand_variant)
        self.write_table("constructed.csv", cp.data)
        self.write_json("constructed_meta.json", cp.meta)

    def _controls(self, sub):
        return measures.control_block(sub)

    def diagnose(self):
        data = self.constructed()
        sub = self.confirmatory(data)
        series = {c: sub[c] for c in ("a_clean", "log_basefee", "log_scarcity", "d_star")}
        self.write_table("unit_roots.csv", tsdiag.diagnostics_table(series))
        rows = []
        ctrl, _ = self._controls(sub)
        for outcome in self.cfg.fdr_family:
            res, resid = tsdiag.engle_granger(sub[outcome], pd.concat([sub[["a_clean"]], ctrl], axis=1))
            dep = tsdiag.residual_dependence(resid)
            rows.append({"outcome": outcome, "statistic": res.statistic, "p_value": res.p_value,
                         "lags": res.lags_used, "n_vars": res.extra["n_vars"],
                         "reject_5pct": res.decision_at_5pct, "resid_ljung_box_p": dep.ljung_box.p_value,
                         "resid_durbin_watson": dep.durbin_watson})
        self.write_table("cointegration.csv", pd.DataFrame(rows))
        vcols = ["a_clean", "d_star"] + [c for c in ctrl.columns if c.startswith(("regime_", "cal_"))]
        v = tsdiag.vif(sub[vcols])
        self.write_table("vif.csv", v.rename_axis("term").reset_index())

    def estimate(self):
        cfg = self.cfg
        data = self.constructed()
        sub = self.confirmatory(data)
        ctrl, dropped = self._controls(sub)
        X = pd.concat([sub[["a_clean"]], ctrl], axis=1)
        meta = {"window": [str(cfg.confirmatory_start), str(cfg.confirmatory_end)],
                "dropped_controls": dropped, "hac_lag_levels": cfg.hac_lag_levels,
                "hac_lag_diff": cfg.hac_lag_diff, "gates": {}, "skipped": {}}

        levels = estimators.ols_hac(sub["log_basefee"], X, cfg.hac_lag_levels)
        self.write_table("levels.csv", levels.to_frame())
        meta["levels"] = levels.metadata()
        pw = estimators.prais_winsten(sub["log_basefee"], X, hac_lag=cfg.hac_lag_levels)
        self.write_table("prais_winsten.csv", pw.to_frame())
        meta["prais_winsten"] = pw.metadata()

        ecm_rows, coef_tables, pvals = [], [], {}
        for outcome in cfg.fdr_family:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                res = estimators.ecm_fit(sub[outcome], sub["a_clean"], ctrl, cfg.hac_lag_diff,
                                         cfg.hac_lag_levels, cfg.ecm_gate, cfg.ecm_gate_mode)
            meta["gates"][outcome] = {"triggered": res.gate_triggered,
                                      "warnings": [str(w.message) for w in caught]}
            ecm_rows.append({"outcome": outcome, **res.summary_row()})
            t = res.to_frame()
            t.insert(0, "outcome", outcome)
            coef_tables.append(t)
            pvals[outcome] = res.psi_p
        fdr = inference.bh_fdr(pvals)
        ecm = pd.DataFrame(ecm_rows)
        ecm["q_value"] = fdr.q_values
        self.write_table("ecm.csv", ecm)
        self.write_table("ecm_coefficients.csv", pd.concat(coef_tables, ignore_index=True))
        self.write_table("fdr.csv", fdr.to_frame())

        k = estimators.koyck_fit(sub["log_basefee"], sub["a_clean"], ctrl, cfg.hac_lag_levels)
        lo, hi = k.long_run_ci
        self.write_table("koyck.csv", pd.DataFrame([{
            "rho": k.rho, "beta0": k.beta0, "long_run_multiplier": k.long_run_multiplier,
            "long_run_se": k.long_run_se, "ci_lower": lo, "ci_upper": hi, "divergent": k.divergent,
            "n_obs": k.fit.n_obs}]))

        self.write_table("regimes.csv", self._regime_table(data))

        try:
            pwf = estimators.piecewise_fit(sub["log_basefee"], sub["a_clean"], ctrl, cfg.knot, cfg.hac_lag_levels)
            t = pwf.slopes.copy()
            t["flags"] = ";".join(pwf.flags)
            self.write_table("piecewise.csv", t)
        except DomainError as exc:
            meta["skipped"]["piecewise"] = str(exc)
        self.write_json("estimate_meta.json", meta)

    def _regime_labels(self, data):
        d = data.index
        lab = pd.Series(pd.NA, index=d, dtype=object)
        lab[(d >= pd.Timestamp(self.cfg.london)) & (d < pd.Timestamp(self.cfg.dencun))] = "pre_dencun"
        lab[d >= pd.Timestamp(self.cfg.dencun)] = "post_dencun"
        return lab

    def _regime_table(self, data):
        ctrl, _ = measures.control_block(data, include=("d_star", "cal", "shock"))
        with warnings.catch_warnings(record=True):
            warnings.simplefilter("always")
            fits = estimators.regime_split(data["log_basefee"], data["a_clean"], ctrl,
                                           self._regime_labels(data), self.cfg.hac_lag_levels,
                                           self.cfg.regime_min_rows)
        rows = []
        for reg in ("pre_dencun", "post_dencun"):
            r = fits.get(reg)
            if r is None:
                rows.append({"regime": reg, "beta": np.nan, "se": np.nan, "semi_el_10pp": np.nan,
                             "n_obs": 0, "status": "skipped"})
            else:
                rows.append({"regime": reg, "beta": r.beta, "se": r.se, "semi_el_10pp": r.semi_el_10pp,
                             "n_obs": r.n_obs, "status": "ok"})
        return pd.DataFrame(rows)

    def lp(self):
        cfg = self.cfg
        sub = self.confirmatory(self.constructed())
        ctrl, _ = self._controls(sub)
        dctrl, _ = linalg.prune_degenerate(ctrl.diff())
        res = estimators.local_projections(sub["log_basefee"].diff(), sub["a_clean"].diff(), dctrl,
                                           cfg.lp_horizon, cfg.hac_lag_diff, cfg.lp_lag_growth)
        self.write_table("lp.csv", res.to_frame())

    def iv(self):
        cfg = self.cfg
        wpath = cfg.weights or self.out / "synth_weights.csv"
        spath = cfg.chain_shocks or self.out / "synth_chain_shocks.csv"
        if not Path(wpath).exists() or not Path(spath).exists():
            raise DependencyError("iv requires a weights file and chain shocks (config or synth)")
        sub = self.confirmatory(self.constructed())
        weights = iv.load_weights(wpath)
        shocks = iv.load_chain_shocks(spath)
        z = iv.build_shift_share(weights, shocks, sub.index)
        ctrl, _ = self._controls(sub)
        y, a = sub["log_basefee"], sub["a_clean"]
        ols = estimators.ols_hac(y, pd.concat([a, ctrl], axis=1), cfg.hac_lag_diff)
        tsls = iv.two_sls(y, a, z, ctrl, cfg.hac_lag_diff)
        cf = iv.control_function(y, a, z, ctrl, cfg.hac_lag_diff)
        rows = [{"method": "ols", "beta": ols.coefficients["a_clean"], "se": ols.se["a_clean"],
                 "p_value": ols.p_values["a_clean"], "ci_lower": ols.ci95.loc["a_clean", "lower"],
                 "ci_upper": ols.ci95.loc["a_clean", "upper"], "first_stage_f": np.nan,
                 "partial_r2": np.nan, "instrument": "", "n_obs": ols.n_obs},
                tsls.as_row(), cf.as_row()]
        self.write_table("iv.csv", pd.DataFrame(rows))
        self.write_json("iv_meta.json", {"weights": weights, "shock_unit": "indicator or outage hours per UTC day",
                                         "hac_lag": cfg.hac_lag_diff,
                                         "v_hat_coef": cf.meta["v_hat_coef"], "v_hat_p": cf.meta["v_hat_p"]})

    def power(self):
        data = self.constructed()
        ctrl, _ = measures.control_block(data, include=("d_star", "cal", "shock"))
        labels = self._regime_labels(data)
        rows = []
        for reg in ("pre_dencun", "post_dencun"):
            mask = (labels == reg).to_numpy()
            if mask.sum() < self.cfg.regime_min_rows:
                continue
            sub_c, _ = linalg.prune_degenerate(ctrl[mask])
            a = data["a_clean"][mask]
            fit = estimators.ols_hac(data["log_basefee"][mask], pd.concat([a, sub_c], axis=1),
                                     self.cfg.hac_lag_levels)
            aux = estimators.ols_hac(a, sub_c, 0)
            rho = tsdiag.acf(aux.residuals.to_numpy(), 10)
            p = inference.mde_power(float(fit.se["a_clean"]), fit.n_obs, float(a.std(ddof=1)), rho)
            rows.append({"regime": reg, **p.as_dict(), "beta": float(fit.coefficients["a_clean"])})
        self.write_table("power.csv", pd.DataFrame(rows))

    def counterfactual(self):
        cfg = self.cfg
        data = self.constructed()
        res = cfact.counterfactual_analysis(data, (cfg.cf_start, cfg.cf_end), cfg.cf_percentile, cfg.cf_price,
                                            cfg.cf_include_tip, grid_percentiles=cfg.cf_grid_percentiles)
        self.write_table("cf_path.csv", res.path.frame)
        self.write_table("welfare_daily.csv", res.welfare.to_frame())
        self.write_table("welfare_grid.csv", res.grid)
        self.write_json("cf_meta.json", {
            "percentile": res.percentile, "a_fixed": res.a_fixed, "price": cfg.cf_price,
            "include_tip": cfg.cf_include_tip, "usd_total": res.welfare.usd_total, "ci": list(res.welfare.ci),
            "variances": res.fit.variances, "loglik": res.fit.loglik,
            "coefficients": res.fit.coefficients.to_dict(), "gas_column": "gas_used_total",
            "welfare_ci": "daily bands treated as perfectly correlated"})

    def placebo(self):
        cfg = self.cfg
        sub = self.confirmatory(self.constructed())
        ctrl, _ = self._controls(sub)
        seeds = np.random.SeedSequence(cfg.seed).generate_state(cfg.placebo_reps, dtype=np.uint64)
        rows = []
        for rep, s in enumerate(seeds):
            shuffled = synth.placebo_shuffle(sub, "a_clean", int(s))
            r = estimators.ecm_fit(shuffled["log_basefee"], shuffled["a_clean"], ctrl, cfg.hac_lag_diff,
                                   cfg.hac_lag_levels, gate_mode="off")
            rows.append({"rep": rep, "seed": int(s), "psi": r.psi, "psi_se": r.psi_se, "psi_p": r.psi_p,
                         "reject_5pct": r.psi_p < 0.05})
        df = pd.DataFrame(rows)
        self.write_table("placebo.csv", df)
        self.write_json("placebo_summary.json", {"reps": len(df), "rejection_rate": float(df["reject_5pct"].mean()),
                                                 "mean_psi": float(df["psi"].mean())})


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def run_report(cfg: RunConfig, commands) -> dict:
    """Run ``commands`` in dependency order and return the updated manifest."""
    unknown = [c for c in commands if c not in COMMANDS]
    if unknown:
        raise DependencyError(f"unknown command(s): {unknown}")
    runner = Runner(cfg)
    ordered = sorted(set(commands), key=COMMANDS.index)
    for cmd in ordered:
        log.info("running %s", cmd)
        getattr(runner, cmd)()
    return runner.update_manifest(ordered)


def _error_report(out: Path | None, cmd, exc, code):
    report = {"command": cmd, "error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "error.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        except OSError:
            pass
    print(f"error: {report['error']}: {report['message']}", file=sys.stderr)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="l2congestion", description=__doc__.splitlines()[0])
    parser.add_argument("command", nargs="+", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="flat YAML run configuration")
    parser.add_argument("--out", default=None, help="output directory (overrides out_dir)")
    parser.add_argument("--seed", type=int, default=None, help="unsigned 64-bit seed (overrides seed)")
    args = parser.parse_args(argv)
    level = os.environ.get("L2CONGESTION_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(name)s: %(message)s")

    out = Path(args.out) if args.out else None
    cmd = " ".join(args.command)
    try:
        cfg = parse_config(args.config, out_dir=out, seed=args.seed)
        out = Path(cfg.out_dir)
        err = out / "error.json"
        if err.exists():
            err.unlink()
        manifest = run_report(cfg, args.command)
    except L2CongestionError as exc:
        _error_report(out, cmd, exc, exc.exit_code)
        return exc.exit_code
    except FileNotFoundError as exc:
        _error_report(out, cmd, exc, 3)
        return 3
    log.info("wrote %d files", len(manifest["files"]))
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Treatment, outcome, demand-factor and indicator construction."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd

from . import linalg
from .errors import DegeneracyError, DomainError, IntegrityError, SchemaError
from .panel import DailyPanel, ShockCatalog, UpgradeCalendar, default_shock_catalog, warn_out_of_range, winsorize

DEMAND_INPUTS_FULL = ("eth_logret", "cex_logvol", "rvol", "trends", "stable_issuance")
DEMAND_INPUTS_LITE = ("eth_logret", "cex_logvol", "rvol")
UTILIZATION_CAP = 1.5
WINSOR_COLUMNS = ("a_clean", "log_basefee", "utilization", "log_scarcity")


def posting_clean_share(l2_user_tx, l1_tx_raw, posting_tx):
    """Share of end-user transactions executed on L2 once posting transactions are removed.

    Works elementwise on scalars or arrays; a zero denominator yields NaN.
    """
    l2 = np.asarray(l2_user_tx, dtype=float)
    l1 = np.asarray(l1_tx_raw, dtype=float)
    post = np.asarray(posting_tx, dtype=float)
    if np.any(l2 < 0) or np.any(l1 < 0) or np.any(post < 0):
        raise IntegrityError("transaction counts must be non-negative")
    if np.any(post > l1):
        raise IntegrityError("posting_tx exceeds l1_tx_raw")
    denom = l2 + (l1 - post)
    with np.errstate(invalid="ignore", divide="ignore"):
        share = np.where(denom > 0, l2 / np.where(denom > 0, denom, 1.0), np.nan)
    return float(share) if share.ndim == 0 else share


def tukey_hanning_weights(half_width: int = 3) -> np.ndarray:
    j = np.arange(-half_width, half_width + 1)
    w = 0.5 * (1 + np.cos(np.pi * j / (half_width + 1)))
    return w / w.sum()


def tukey_hanning_smooth(x, half_width: int = 3) -> np.ndarray:
    """Centered Tukey-Hanning moving mean; edges and NaNs renormalize the window."""
    x = np.asarray(x, dtype=float)
    w = tukey_hanning_weights(half_width)
    n = x.size
    ok = ~np.isnan(x)
    xz = np.where(ok, x, 0.0)
    num = np.convolve(xz, w, mode="full")[half_width:half_width + n]
    den = np.convolve(ok.astype(float), w, mode="full")[half_width:half_width + n]
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)


def scarcity_index(basefee, tip, blob_fee, q_tilde, after_dencun):
    """log((base + tip + 1[after Dencun] * blob) / q_tilde)."""
    base = np.asarray(basefee, dtype=float)
    tip = np.asarray(tip, dtype=float)
    blob = np.nan_to_num(np.asarray(blob_fee, dtype=float))
    q = np.asarray(q_tilde, dtype=float)
    post = np.asarray(after_dencun, dtype=bool)
    if np.any(q[~np.isnan(q)] <= 0):
        raise DomainError("demand benchmark q_tilde must be positive")
    num = base + tip + np.where(post, blob, 0.0)
    if np.any(num[~np.isnan(num)] <= 0):
        raise DomainError("scarcity numerator (base + tip [+ blob]) must be positive")
    if np.any(base < 0) or np.any(tip < 0) or np.any(blob < 0):
        raise DomainError("fee components must be non-negative")
    out = np.log(num / q)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class DemandFactor:
    scores: pd.Series
    loadings: pd.Series
    explained_share: float
    sign: int
    fit_index: pd.DatetimeIndex | pd.Index
    means: pd.Series
    sds: pd.Series
    meta: dict = field(default_factory=dict)


def demand_factor(inputs: pd.DataFrame, fit_window=(None, None), log_basefee: pd.Series | None = None,
                  min_fit_rows: int = 30) -> DemandFactor:
    """First principal component of the standardized demand proxies.

    Inputs are forward-filled across single-day gaps, z-scored on the complete
    rows of ``fit_window``, and projected onto the leading eigenvector of their
    fit-window covariance.  Scores are rescaled to unit variance on the fit
    window and oriented to correlate non-negatively with ``log_basefee``
    (positive first loading when that correlation is zero or unavailable).
    """
    X = inputs.astype(float).ffill(limit=1)
    start, end = fit_window if fit_window is not None else (None, None)
    in_window = np.ones(len(X), dtype=bool)
    if isinstance(X.index, pd.DatetimeIndex):
        if start is not None:
            in_window &= X.index >= pd.Timestamp(start)
        if end is not None:
            in_window &= X.index <= pd.Timestamp(end)
    complete = X.notna().all(axis=1).to_numpy()
    fit_rows = in_window & complete
    if fit_rows.sum() < min_fit_rows:
        raise DomainError(f"demand factor needs >= {min_fit_rows} complete fit rows, got {fit_rows.sum()}")
    F = X[fit_rows]
    means = F.mean()
    sds = F.std(ddof=0)
    for col in X.columns:
        if not sds[col] > 1e-12 * max(1.0, abs(means[col])):
            raise DegeneracyError(f"demand input {col!r} is constant over the fit window")
    Z = (X - means) / sds
    Zf = Z[fit_rows].to_numpy()
    cov = Zf.T @ Zf / Zf.shape[0]
    evals, evecs = np.linalg.eigh(cov)
    v = evecs[:, -1]
    raw = Z.to_numpy() @ v
    scale = raw[fit_rows].std(ddof=0)
    scores = raw / scale

    sign = 0
    if log_basefee is not None:
        lb = pd.Series(log_basefee).reindex(X.index).to_numpy(dtype=float)
        both = fit_rows & ~np.isnan(lb)
        if both.sum() > 2:
            c = np.corrcoef(scores[both], lb[both])[0, 1]
            if np.isfinite(c) and abs(c) > 1e-12:
                sign = 1 if c > 0 else -1
    if sign == 0:
        lead = v[np.argmax(np.abs(v) > 1e-12)]
        sign = 1 if lead >= 0 else -1
    scores = sign * scores
    v = sign * v
    return DemandFactor(
        scores=pd.Series(scores, index=X.index, name="d_star"),
        loadings=pd.Series(v, index=X.columns, name="loading"),
        explained_share=float(evals[-1] / evals.sum()),
        sign=int(sign),
        fit_index=X.index[fit_rows],
        means=means,
        sds=sds,
        meta={"fit_rows": int(fit_rows.sum()), "eigenvalues": evals[::-1].tolist()},
    )


def _slug(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", name.lower()).strip("_")


def build_indicators(dates: pd.DatetimeIndex, calendar: UpgradeCalendar = UpgradeCalendar(),
                     shocks: ShockCatalog | None = None) -> pd.DataFrame:
    """Regime, calendar and shock dummies on a daily UTC grid.

    Boundary days belong to the new regime; rows before London carry no regime
    flag.  Shock flags mark the event start day only.
    """
    dates = pd.DatetimeIndex(dates)
    d = dates.normalize()
    london, merge, dencun = (pd.Timestamp(x) for x in (calendar.london, calendar.merge, calendar.dencun))
    out = pd.DataFrame(index=dates)
    out["regime_london"] = ((d >= london) & (d < merge)).astype(int)
    out["regime_merge"] = ((d >= merge) & (d < dencun)).astype(int)
    out["regime_dencun"] = (d >= dencun).astype(int)
    out["cal_weekend"] = (d.dayofweek >= 5).astype(int)
    out["cal_month_end"] = d.is_month_end.astype(int)
    out["cal_quarter_turn"] = d.is_quarter_start.astype(int)
    shocks = default_shock_catalog() if shocks is None else shocks
    shocks.check(calendar)
    if len(d):
        lo, hi = d.min(), d.max()
        for ev in shocks:
            col = f"shock_{_slug(ev.name)}"
            ts = pd.Timestamp(ev.date)
            if ts < lo or ts > hi:
                warn_out_of_range(ev.name, ev.date, lo.date(), hi.date())
                continue
            out[col] = (d == ts).astype(int)
    return out


@dataclass(frozen=True)
class ConstructedPanel:
    panel: DailyPanel
    demand: DemandFactor
    meta: dict

    @property
    def data(self) -> pd.DataFrame:
        return self.panel.data

    def regime_columns(self):
        return [c for c in self.data.columns if c.startswith("regime_")]

    def calendar_columns(self):
        return [c for c in self.data.columns if c.startswith("cal_")]

    def shock_columns(self):
        return [c for c in self.data.columns if c.startswith("shock_")]

    def to_csv(self, path, sidecar=None):
        self.panel.to_csv(path)
        if sidecar is not None:
            with open(sidecar, "w", encoding="utf-8") as fh:
                json.dump(self.meta, fh, indent=2, sort_keys=True, default=str)
                fh.write("\n")


def construct(panel: DailyPanel, calendar: UpgradeCalendar = UpgradeCalendar(),
              shocks: ShockCatalog | None = None, winsor_tail: float = 0.005,
              trim_pre_london: bool = True, demand_variant: str = "full",
              fit_window=None) -> ConstructedPanel:
    """Build the analysis columns from a raw daily panel.

    Order of operations: treatment and outcomes from raw aggregates, optional
    trim of pre-London days with adoption below 0.05, winsorization of the
    analysis columns (after the log transforms), demand factor, indicators.
    """
    data = panel.data
    need = ("l2_user_tx", "l1_tx_raw", "posting_tx", "basefee_median_gwei", "tip_median_gwei",
            "blob_fee_gwei", "gas_used_total", "utilization")
    missing = [c for c in need if c not in data.columns]
    if missing:
        raise SchemaError(f"construct: panel lacks {missing}")
    if demand_variant not in ("full", "lite"):
        raise SchemaError(f"unknown demand variant {demand_variant!r}")

    dencun = pd.Timestamp(calendar.dencun)
    london = pd.Timestamp(calendar.london)
    a = posting_clean_share(data["l2_user_tx"], data["l1_tx_raw"], data["posting_tx"])
    log_bf = np.log(data["basefee_median_gwei"].to_numpy(dtype=float))
    util_raw = data["utilization"].to_numpy(dtype=float)
    capped = util_raw > UTILIZATION_CAP
    util = np.minimum(util_raw, UTILIZATION_CAP)
    q_tilde = tukey_hanning_smooth(data["gas_used_total"].to_numpy(dtype=float))
    after = data.index >= dencun
    s = scarcity_index(data["basefee_median_gwei"], data["tip_median_gwei"],
                       data["blob_fee_gwei"], q_tilde, after)

    work = panel.with_columns(
        a_clean=a, log_basefee=log_bf, utilization=util, q_tilde=q_tilde, log_scarcity=s,
        flag_util_capped=capped.astype(int),
    )
    trimmed = []
    if trim_pre_london:
        mask = (work.data.index < london) & (work.data["a_clean"] < 0.05)
        trimmed = [d.date().isoformat() for d in work.data.index[mask]]
        if mask.any():
            work = work.replace(data=work.data.loc[~mask].copy())
    work = winsorize(work, WINSOR_COLUMNS, winsor_tail)

    cols = DEMAND_INPUTS_FULL if demand_variant == "full" else DEMAND_INPUTS_LITE
    missing = [c for c in cols if c not in work.data.columns]
    if missing:
        raise SchemaError(f"construct: demand inputs missing {missing}")
    if fit_window is None:
        fit_window = (calendar.london, calendar.pre_dencun_end)
    df = demand_factor(work.data[list(cols)], fit_window, work.data["log_basefee"])
    ind = build_indicators(work.data.index, calendar, shocks)
    work = work.with_columns(d_star=df.scores.to_numpy())
    work = work.with_columns(source="calendar", **{c: ind[c].to_numpy() for c in ind.columns})

    meta = {
        "demand_factor": {
            "variant": demand_variant,
            "inputs": list(cols),
            "loadings": {k: float(v) for k, v in df.loadings.items()},
            "sign": df.sign,
            "explained_share": df.explained_share,
            "fit_window": [str(fit_window[0]), str(fit_window[1])],
            "fit_rows": df.meta["fit_rows"],
        },
        "winsor": work.meta.get("winsor", {}),
        "winsor_stage": "after log transforms",
        "trimmed_pre_london": trimmed,
        "utilization_capped_rows": int(capped.sum()),
        "dropped_count": panel.meta.get("dropped_count", 0),
        "gaps": work.gaps,
        "calendar": {"london": str(calendar.london), "merge": str(calendar.merge),
                     "dencun": str(calendar.dencun)},
    }
    return ConstructedPanel(work, df, meta)


def control_block(cp: ConstructedPanel | pd.DataFrame, include=("d_star", "regime", "cal", "shock"),
                  index=None) -> tuple[pd.DataFrame, dict]:
    """Adjustment-set columns with the London regime as base category.

    Columns that are constant over the rows in ``index`` and exact duplicates
    of an earlier column are dropped; the dropped names are returned so the
    caller can record them.
    """
    data = cp.data if isinstance(cp, ConstructedPanel) else cp
    if index is not None:
        data = data.loc[index]
    cols = []
    if "d_star" in include:
        cols.append("d_star")
    if "regime" in include:
        cols += [c for c in data.columns if c.startswith("regime_") and c != "regime_london"]
    if "cal" in include:
        cols += [c for c in data.columns if c.startswith("cal_")]
    if "shock" in include:
        cols += [c for c in data.columns if c.startswith("shock_")]
    return linalg.prune_degenerate(data[cols].astype(float))

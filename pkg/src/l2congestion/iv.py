"""Shift-share instrument and instrumental-variable estimators.

The instrument is a weighted sum of per-chain disruption indicators (or
outage hours within the UTC day) using pre-period exposure weights.  Both
estimators report a HAC first-stage F for the excluded instrument and its
partial R-squared.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import stats

from . import linalg
from .errors import DomainError, NoVariationError, ParseError, SchemaError
from .estimators import Z95, ols_hac

PRE_DENCUN_WEIGHTS = {"Arbitrum": 0.63, "Optimism": 0.27, "Base": 0.10}


@dataclass
class IvResult:
    beta: float
    se: float
    p: float
    first_stage_f: float
    partial_r2: float
    instrument_name: str
    n: int
    method: str = "2sls"
    ci95: tuple = (float("nan"), float("nan"))
    coefficients: pd.Series | None = None
    se_all: pd.Series | None = None
    meta: dict = field(default_factory=dict)

    def as_row(self) -> dict:
        return {"method": self.method, "beta": self.beta, "se": self.se, "p_value": self.p,
                "ci_lower": self.ci95[0], "ci_upper": self.ci95[1],
                "first_stage_f": self.first_stage_f, "partial_r2": self.partial_r2,
                "instrument": self.instrument_name, "n_obs": self.n}


def build_shift_share(weights, shocks: pd.DataFrame, index=None) -> pd.Series:
    """Z_t = sum_l w_l * shock_{l,t}.

    Parameters
    ----------
    weights : mapping chain -> exposure share
        Non-negative, summing to at most one.
    shocks : DataFrame
        One column per chain, indexed by date.  Chains absent from ``weights``
        are rejected.
    index : DatetimeIndex, optional
        Panel dates; days without a shock row get zero.
    """
    w = {str(k): float(v) for k, v in dict(weights).items()}
    if any(v < 0 or not np.isfinite(v) for v in w.values()):
        raise DomainError("shift-share weights must be finite and non-negative")
    if sum(w.values()) > 1 + 1e-9:
        raise DomainError(f"shift-share weights sum to {sum(w.values()):.6f} > 1")
    unknown = [c for c in shocks.columns if str(c) not in w]
    if unknown:
        raise SchemaError(f"shock columns for unknown chain(s): {unknown}")
    S = shocks.astype(float)
    if index is not None:
        S = S.reindex(pd.DatetimeIndex(index)).fillna(0.0)
    z = np.zeros(len(S))
    for c in S.columns:
        z += w[str(c)] * S[c].to_numpy()
    return pd.Series(z, index=S.index, name="z_shift_share")


def load_weights(path) -> dict[str, float]:
    """Read a (chain, weight) CSV."""
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(line for line in fh if not line.startswith("#"))
        if reader.fieldnames is None or not {"chain", "weight"} <= set(reader.fieldnames):
            raise SchemaError(f"{path}: weights file needs columns chain, weight")
        for i, row in enumerate(reader, start=2):
            try:
                out[row["chain"].strip()] = float(row["weight"])
            except ValueError as exc:
                raise ParseError(f"{path}: line {i}: bad weight {row['weight']!r}") from exc
    return out


def load_chain_shocks(path) -> pd.DataFrame:
    """Read long-format (date, chain, value) rows into a date x chain frame."""
    df = pd.read_csv(path, comment="#")
    if not {"date", "chain", "value"} <= set(df.columns):
        raise SchemaError(f"{path}: chain shocks need columns date, chain, value")
    try:
        df["date"] = pd.to_datetime(df["date"], format="%Y-%m-%d")
    except ValueError as exc:
        raise ParseError(f"{path}: malformed date ({exc})") from exc
    wide = df.pivot_table(index="date", columns="chain", values="value", aggfunc="sum").fillna(0.0)
    wide.columns = [str(c) for c in wide.columns]
    return wide.sort_index()


def _assemble(y, a, Z, controls):
    ys = linalg.as_series(y, "y").astype(float)
    a_s = linalg.as_series(a, "a").astype(float)
    z_s = linalg.as_series(Z, "z").astype(float)
    a_name = a_s.name if a_s.name is not None else "a"
    z_name = z_s.name if z_s.name is not None else "z"
    if z_name == a_name:
        z_name = f"{z_name}_instrument"
    parts = [a_s.rename(a_name), z_s.rename(z_name)]
    C = linalg.as_frame(controls, "c") if controls is not None else None
    if C is not None and len(C.columns):
        parts.append(C)
    if not isinstance(ys.index, pd.DatetimeIndex):
        # positional inputs: align by row order
        ys = ys.reset_index(drop=True)
        parts = [p.reset_index(drop=True) for p in parts]
    block = pd.concat(parts, axis=1)
    ys, block = linalg.align(ys, block)
    z = block[z_name]
    if np.ptp(z.to_numpy()) == 0:
        raise NoVariationError("instrument has no variation over the estimation sample")
    ctrl = linalg.add_constant(block.drop(columns=[a_name, z_name]))
    return ys, block[a_name], z, ctrl, a_name, z_name


def _first_stage(a, z, ctrl, hac_lag):
    Xf = pd.concat([z, ctrl], axis=1)
    fs = ols_hac(a, Xf, hac_lag, add_constant=False)
    t = fs.coefficients[z.name] / fs.se[z.name]
    f_stat = float(t * t)
    _, r_res, _ = linalg.lstsq(a.to_numpy(), ctrl.to_numpy())
    ssr_r = float(r_res @ r_res)
    ssr_u = float(fs.residuals.to_numpy() @ fs.residuals.to_numpy())
    pr2 = 0.0 if ssr_r <= 0 else min(max(1.0 - ssr_u / ssr_r, 0.0), 1.0)
    return fs, f_stat, pr2


def two_sls(y, a, Z, controls=None, hac_lag: int = 7) -> IvResult:
    """Just-identified 2SLS with a HAC sandwich.

    The covariance uses the second-stage fitted regressors and the structural
    residuals y - X b, which is the standard 2SLS correction for the generated
    regressor.
    """
    ys, av, z, ctrl, a_name, z_name = _assemble(y, a, Z, controls)
    fs, f_stat, pr2 = _first_stage(av, z, ctrl, hac_lag)
    X = pd.concat([av, ctrl], axis=1)
    linalg.check_rank(X.to_numpy(), list(X.columns))
    Xhat = X.copy()
    Xhat[a_name] = fs.fitted.to_numpy()
    Xh, Xv, yv = Xhat.to_numpy(), X.to_numpy(), ys.to_numpy()
    linalg.check_rank(Xh, list(X.columns))
    beta, _, xtx_inv = linalg.lstsq(yv, Xh)
    resid = yv - Xv @ beta
    V = linalg.hac_cov(Xh, resid, xtx_inv, hac_lag)
    se = np.sqrt(np.clip(np.diag(V), 0, None))
    b, s = float(beta[0]), float(se[0])
    p = float(2 * stats.norm.sf(abs(b / s))) if s > 0 else (1.0 if b == 0 else 0.0)
    names = list(X.columns)
    return IvResult(b, s, p, f_stat, pr2, z_name, len(yv), "2sls", (b - Z95 * s, b + Z95 * s),
                    pd.Series(beta, index=names), pd.Series(se, index=names),
                    {"hac_lag": hac_lag, "first_stage_coef": float(fs.coefficients[z_name])})


def control_function(y, a, Z, controls=None, hac_lag: int = 7) -> IvResult:
    """Regress y on (a, first-stage residual, controls) with HAC errors.

    The coefficient on a equals the 2SLS estimate in the linear just-identified
    case; the t-statistic on the residual is a regression-based endogeneity
    test, stored in ``meta``.
    """
    ys, av, z, ctrl, a_name, z_name = _assemble(y, a, Z, controls)
    fs, f_stat, pr2 = _first_stage(av, z, ctrl, hac_lag)
    vhat = fs.residuals.rename("v_hat")
    if float(vhat.to_numpy() @ vhat.to_numpy()) <= 1e-20 * max(float(av.to_numpy() @ av.to_numpy()), 1.0):
        raise DomainError("first-stage residual is identically zero; the instrument reproduces "
                          "the treatment and the control function is not identified")
    X = pd.concat([av, vhat, ctrl], axis=1)
    fit = ols_hac(ys, X, hac_lag, add_constant=False)
    b, s = float(fit.coefficients[a_name]), float(fit.se[a_name])
    return IvResult(b, s, float(fit.p_values[a_name]), f_stat, pr2, z_name, fit.n_obs,
                    "control_function", (b - Z95 * s, b + Z95 * s), fit.coefficients, fit.se,
                    {"hac_lag": hac_lag, "v_hat_coef": float(fit.coefficients["v_hat"]),
                     "v_hat_se": float(fit.se["v_hat"]), "v_hat_p": float(fit.p_values["v_hat"])})

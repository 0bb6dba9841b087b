"""Confirmatory and robustness regressions.

OLS with Newey-West covariance, Prais-Winsten AR(1) FGLS, the three-step
error-correction model, the geometric-lag (Koyck) model, local projections,
regime splits and the linear spline in adoption.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import stats

from . import linalg
from .errors import (CointegrationGateError, CointegrationWarning, DomainError, NearUnitRootError,
                     NonRevertingError, OscillatoryError)
from .inference import half_life, semi_elasticity_10pp
from .tsdiag import TestResult, engle_granger

Z95 = 1.96


@dataclass
class EstimateResult:
    coefficients: pd.Series
    se: pd.Series
    p_values: pd.Series
    ci95: pd.DataFrame
    cov: pd.DataFrame
    cov_estimator: str
    n_obs: int
    adj_r2: float
    residuals: pd.Series
    fitted: pd.Series
    meta: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.coefficients[name]

    def to_frame(self) -> pd.DataFrame:
        out = pd.DataFrame({
            "term": self.coefficients.index,
            "coef": self.coefficients.to_numpy(),
            "se": self.se.to_numpy(),
            "p_value": self.p_values.to_numpy(),
            "ci_lower": self.ci95["lower"].to_numpy(),
            "ci_upper": self.ci95["upper"].to_numpy(),
        })
        out["semi_el_10pp"] = semi_elasticity_10pp(out["coef"].to_numpy())
        return out

    def metadata(self) -> dict:
        meta = {"estimator": self.cov_estimator, "n_obs": self.n_obs, "adj_r2": self.adj_r2}
        meta.update({k: v for k, v in self.meta.items() if _jsonable(v)})
        return meta


@dataclass
class PraisWinstenResult(EstimateResult):
    rho: float = 0.0
    iterations: int = 0
    converged: bool = True


def _jsonable(v) -> bool:
    try:
        json.dumps(v)
        return True
    except TypeError:
        return False


def _pvalues(coef, se):
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, coef / np.where(se > 0, se, 1.0), np.where(coef == 0, 0.0, np.inf))
    return 2 * stats.norm.sf(np.abs(z))


def _package(names, index, y, X, beta, resid, cov, label, meta=None, result_cls=EstimateResult, **extra):
    se = np.sqrt(np.clip(np.diag(cov), 0, None))
    n, k = X.shape
    tss = np.sum((y - y.mean()) ** 2)
    ssr = resid @ resid
    if tss > 0 and n > k:
        adj = 1 - (ssr / (n - k)) / (tss / (n - 1))
    else:
        adj = float("nan")
    coef = pd.Series(beta, index=names)
    se_s = pd.Series(se, index=names)
    return result_cls(
        coefficients=coef,
        se=se_s,
        p_values=pd.Series(_pvalues(beta, se), index=names),
        ci95=pd.DataFrame({"lower": beta - Z95 * se, "upper": beta + Z95 * se}, index=names),
        cov=pd.DataFrame(cov, index=names, columns=names),
        cov_estimator=label,
        n_obs=int(n),
        adj_r2=float(adj),
        residuals=pd.Series(resid, index=index, name="resid"),
        fitted=pd.Series(y - resid, index=index, name="fitted"),
        meta=dict(meta or {}),
        **extra,
    )


def _design(y, X, add_constant=True):
    ys = linalg.as_series(y, "y")
    Xf = linalg.as_frame(X, "x").astype(float)
    ys, Xf = linalg.align(ys.astype(float), Xf)
    if add_constant:
        Xf = linalg.add_constant(Xf)
    linalg.check_rank(Xf.to_numpy(), list(Xf.columns))
    return ys, Xf


def ols(y, X, cov="hac", hac_lag=10, add_constant=True) -> EstimateResult:
    """OLS with ``cov`` in {"hac", "white", "ols"}."""
    ys, Xf = _design(y, X, add_constant)
    yv, Xv = ys.to_numpy(), Xf.to_numpy()
    beta, resid, xtx_inv = linalg.lstsq(yv, Xv)
    if cov == "hac":
        if hac_lag < 0:
            raise DomainError("hac_lag must be non-negative")
        V = linalg.hac_cov(Xv, resid, xtx_inv, int(hac_lag))
        label = f"HAC({int(hac_lag)})"
    elif cov == "white":
        V = linalg.hac_cov(Xv, resid, xtx_inv, 0)
        label = "HC0"
    elif cov == "ols":
        V = linalg.classical_cov(resid, xtx_inv, len(yv) - Xv.shape[1])
        label = "OLS"
    else:
        raise DomainError(f"unknown covariance {cov!r}")
    return _package(list(Xf.columns), ys.index, yv, Xv, beta, resid, V, label,
                    {"hac_lag": int(hac_lag) if cov == "hac" else None})


def ols_hac(y, X, hac_lag: int = 10, add_constant: bool = True) -> EstimateResult:
    """OLS point estimates with Newey-West (Bartlett) covariance.

    Parameters
    ----------
    y : Series or array
        Outcome.
    X : DataFrame, Series or array
        Regressors; an intercept named ``const`` is prepended unless present or
        ``add_constant`` is False.
    hac_lag : int
        Bartlett truncation lag L, weights 1 - j/(L+1).  ``hac_lag=0`` gives the
        White (HC0) covariance.
    """
    return ols(y, X, "hac", hac_lag, add_constant)


def _ar1_coefficient(e: np.ndarray) -> float:
    return float(e[1:] @ e[:-1] / (e[:-1] @ e[:-1]))


def _pw_transform(v: np.ndarray, rho: float) -> np.ndarray:
    out = np.empty_like(v)
    out[0] = math.sqrt(1 - rho * rho) * v[0]
    out[1:] = v[1:] - rho * v[:-1]
    return out


def prais_winsten(y, X, hac_lag: int | None = None, rho: float | None = None, tol: float = 1e-6,
                  max_iter: int = 50, add_constant: bool = True) -> PraisWinstenResult:
    """Iterated Prais-Winsten AR(1) FGLS.

    The AR(1) coefficient is re-estimated from the untransformed residuals until
    it moves by less than ``tol``.  The first row is kept with the
    sqrt(1 - rho^2) scaling.  Standard errors are classical on the transformed
    regression, or Newey-West with ``hac_lag`` when given.  Passing ``rho``
    fixes the coefficient instead of estimating it.
    """
    ys, Xf = _design(y, X, add_constant)
    yv, Xv = ys.to_numpy(), Xf.to_numpy()
    beta, resid, _ = linalg.lstsq(yv, Xv)
    fixed = rho is not None
    r = float(rho) if fixed else _ar1_coefficient(resid)
    converged, it = True, 0
    if not fixed:
        converged = False
        for it in range(1, max_iter + 1):
            if abs(r) >= 0.999:
                break
            beta = linalg.lstsq(_pw_transform(yv, r), _pw_transform(Xv, r))[0]
            r_new = _ar1_coefficient(yv - Xv @ beta)
            done = abs(r_new - r) < tol
            r = r_new
            if done:
                converged = True
                break
        if not converged and abs(r) < 0.999:
            warnings.warn(f"Prais-Winsten did not converge in {max_iter} iterations (rho={r:.6f})",
                          RuntimeWarning, stacklevel=2)
    if abs(r) >= 0.999:
        raise NearUnitRootError(f"AR(1) coefficient {r:.4f} is at the unit root; "
                                "estimate the error-correction model instead")
    ty, tX = _pw_transform(yv, r), _pw_transform(Xv, r)
    beta, tresid, xtx_inv = linalg.lstsq(ty, tX)
    if hac_lag is None:
        V = linalg.classical_cov(tresid, xtx_inv, len(ty) - tX.shape[1])
        label = "FGLS-AR1"
    else:
        V = linalg.hac_cov(tX, tresid, xtx_inv, int(hac_lag))
        label = f"FGLS-AR1+HAC({int(hac_lag)})"
    resid = yv - Xv @ beta
    return _package(list(Xf.columns), ys.index, yv, Xv, beta, resid, V, label,
                    {"rho": r, "iterations": it, "converged": converged, "rho_fixed": fixed},
                    result_cls=PraisWinstenResult, rho=r, iterations=it, converged=converged)


@dataclass
class EcmResult:
    psi: float
    phi: float
    psi_se: float
    phi_se: float
    psi_p: float
    phi_p: float
    half_life_days: float
    flag: str | None
    ect: pd.Series
    stage_results: tuple[EstimateResult | None, EstimateResult]
    cointegration: TestResult | None
    gate_triggered: bool
    treatment: str
    n_obs: int
    meta: dict = field(default_factory=dict)

    @property
    def semi_el_10pp(self) -> float:
        return semi_elasticity_10pp(self.psi)

    def to_frame(self) -> pd.DataFrame:
        return self.stage_results[1].to_frame()

    def summary_row(self) -> dict:
        eg = self.cointegration
        return {
            "psi": self.psi, "psi_se": self.psi_se, "psi_p": self.psi_p,
            "psi_semi_el_10pp": self.semi_el_10pp,
            "phi": self.phi, "phi_se": self.phi_se, "phi_p": self.phi_p,
            "half_life_days": self.half_life_days, "flag": self.flag or "",
            "eg_stat": eg.statistic if eg else float("nan"),
            "eg_p": eg.p_value if eg else float("nan"),
            "gate_triggered": self.gate_triggered, "n_obs": self.n_obs,
            "adj_r2": self.stage_results[1].adj_r2,
        }


def _stack(a, controls, a_name):
    a_s = linalg.as_series(a, a_name)
    name = a_s.name if a_s.name is not None else a_name
    a_s = a_s.rename(name)
    C = linalg.as_frame(controls, "c") if controls is not None else pd.DataFrame(index=a_s.index)
    if len(C.columns) and not C.index.equals(a_s.index):
        if len(C) == len(a_s) and not isinstance(C.index, pd.DatetimeIndex):
            C = C.set_axis(a_s.index)
        else:
            C = C.reindex(a_s.index)
    X = pd.concat([a_s.to_frame(), C], axis=1)
    return X, name


def _complete_rows(y: pd.Series, X: pd.DataFrame, keep: list[str]):
    """Drop incomplete rows, then controls that became constant or duplicated on what is left."""
    ok = y.notna() & X.notna().all(axis=1)
    y, X = y[ok], X[ok]
    rest, dropped = linalg.prune_degenerate(X.drop(columns=keep))
    return y, pd.concat([X[keep], rest], axis=1), dropped


def ecm_fit(y, a, controls=None, hac_lag: int = 7, hac_lag_levels: int = 10, gate: float = 0.10,
            gate_mode: str = "warn", ect=None) -> EcmResult:
    """Three-step error-correction fit.

    1. Levels OLS of y on (a, controls) with Newey-West covariance; its
       residual is the equilibrium error.
    2. The equilibrium error is lagged one day.
    3. The daily change in y is regressed on the lagged error, the change in a
       and the changes in the controls, again with Newey-West covariance.

    The Engle-Granger test on the levels relation gates the fit: with
    ``gate_mode="warn"`` a p-value above ``gate`` issues a
    :class:`CointegrationWarning`, ``"raise"`` turns it into an error and
    ``"off"`` skips the test.  A known equilibrium error may be supplied as
    ``ect``, which bypasses steps 1 and the gate.
    """
    if gate_mode not in ("warn", "raise", "off"):
        raise DomainError(f"gate_mode must be warn, raise or off, got {gate_mode!r}")
    ys = linalg.as_series(y, "y").astype(float)
    X, a_name = _stack(a, controls, "a")
    if not X.index.equals(ys.index):
        if len(X) == len(ys) and not isinstance(X.index, pd.DatetimeIndex):
            X = X.set_axis(ys.index)
        else:
            X = X.reindex(ys.index)
    ok = ys.notna() & X.notna().all(axis=1)
    ys, X = ys[ok], X[ok]

    levels = None
    eg = None
    gate_triggered = False
    if ect is None:
        levels = ols_hac(ys, X, hac_lag_levels)
        u = levels.residuals
        if gate_mode != "off":
            eg, _ = engle_granger(ys, X)
            if eg.p_value > gate:
                gate_triggered = True
                msg = (f"Engle-Granger p={eg.p_value:.4g} exceeds the {gate:.0%} cointegration gate; "
                       "short-run estimates may be spurious")
                if gate_mode == "raise":
                    raise CointegrationGateError(msg)
                warnings.warn(msg, CointegrationWarning, stacklevel=2)
    else:
        u = linalg.as_series(ect, "ect").astype(float)
        if not u.index.equals(ys.index):
            u = u.set_axis(ys.index) if len(u) == len(ys) else u.reindex(ys.index)
    u = u.rename("ect")

    dy = ys.diff()
    dX = X.diff()
    dX.columns = [f"d_{c}" for c in dX.columns]
    rhs = pd.concat([u.shift(1).rename("ect_lag"), dX], axis=1)
    keep = dy.notna() & rhs.notna().all(axis=1)
    dy, rhs = dy[keep], rhs[keep]
    rhs_pruned, dropped = linalg.prune_degenerate(rhs.drop(columns=["ect_lag", f"d_{a_name}"]))
    rhs = pd.concat([rhs[["ect_lag", f"d_{a_name}"]], rhs_pruned], axis=1)
    short = ols_hac(dy, rhs, hac_lag)
    short.meta["dropped_controls"] = dropped

    psi = float(short.coefficients[f"d_{a_name}"])
    phi = float(short.coefficients["ect_lag"])
    flag = None
    try:
        hl = half_life(phi)
    except NonRevertingError:
        hl, flag = float("nan"), "non_reverting"
    except OscillatoryError:
        hl, flag = float("nan"), "oscillatory"
    return EcmResult(
        psi=psi, phi=phi,
        psi_se=float(short.se[f"d_{a_name}"]), phi_se=float(short.se["ect_lag"]),
        psi_p=float(short.p_values[f"d_{a_name}"]), phi_p=float(short.p_values["ect_lag"]),
        half_life_days=hl, flag=flag, ect=u, stage_results=(levels, short), cointegration=eg,
        gate_triggered=gate_triggered, treatment=a_name, n_obs=short.n_obs,
        meta={"hac_lag": hac_lag, "hac_lag_levels": hac_lag_levels, "gate": gate, "gate_mode": gate_mode,
              "rows_lost": int(len(ys) - short.n_obs), "dropped_controls": dropped},
    )


@dataclass
class KoyckResult:
    rho: float
    beta0: float
    long_run_multiplier: float
    long_run_se: float
    divergent: bool
    fit: EstimateResult

    @property
    def long_run_ci(self):
        return (self.long_run_multiplier - Z95 * self.long_run_se,
                self.long_run_multiplier + Z95 * self.long_run_se)


def koyck_fit(y, a, controls=None, hac_lag: int = 10) -> KoyckResult:
    """Geometric-lag model y_t = alpha + rho y_{t-1} + beta0 a_t + controls.

    The long-run multiplier beta0/(1-rho) carries a delta-method standard error.
    """
    ys = linalg.as_series(y, "y").astype(float)
    X, a_name = _stack(a, controls, "a")
    if not X.index.equals(ys.index):
        X = X.set_axis(ys.index) if len(X) == len(ys) and not isinstance(X.index, pd.DatetimeIndex) \
            else X.reindex(ys.index)
    rhs = pd.concat([ys.shift(1).rename("y_lag"), X], axis=1)
    ys, rhs, dropped = _complete_rows(ys, rhs, ["y_lag", a_name])
    fit = ols_hac(ys, rhs, hac_lag)
    fit.meta["dropped_controls"] = dropped
    rho = float(fit.coefficients["y_lag"])
    b0 = float(fit.coefficients[a_name])
    if abs(rho) >= 1:
        return KoyckResult(rho, b0, float("nan"), float("nan"), True, fit)
    lr = b0 / (1 - rho)
    g = np.zeros(len(fit.coefficients))
    names = list(fit.coefficients.index)
    g[names.index(a_name)] = 1 / (1 - rho)
    g[names.index("y_lag")] = b0 / (1 - rho) ** 2
    se = float(np.sqrt(g @ fit.cov.to_numpy() @ g))
    return KoyckResult(rho, b0, lr, se, False, fit)


@dataclass
class IrfResult:
    horizons: np.ndarray
    beta_h: np.ndarray
    se_h: np.ndarray
    cumulative_pct_10pp: np.ndarray
    bands95: np.ndarray
    n_obs: np.ndarray
    hac_lags: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "horizon": self.horizons, "beta": self.beta_h, "se": self.se_h,
            "lower95": self.bands95[:, 0], "upper95": self.bands95[:, 1],
            "semi_el_10pp": semi_elasticity_10pp(self.beta_h),
            "cumulative_pct_10pp": self.cumulative_pct_10pp,
            "n_obs": self.n_obs, "hac_lag": self.hac_lags,
        })


def cumulative_pct_10pp(beta_h) -> np.ndarray:
    return 100.0 * np.expm1(0.10 * np.cumsum(np.asarray(beta_h, dtype=float)))


def local_projections(dy, da, dcontrols=None, H: int = 28, hac_lag: int = 7,
                      lag_growth: bool = True) -> IrfResult:
    """Horizon-by-horizon regressions of dy_{t+h} on (da_t, dcontrols_t).

    With ``lag_growth`` the Newey-West lag at horizon h is ``hac_lag + h`` to
    absorb the overlap induced by leading the outcome.
    """
    ys = linalg.as_series(dy, "dy").astype(float)
    X, a_name = _stack(da, dcontrols, "da")
    if not X.index.equals(ys.index):
        X = X.set_axis(ys.index) if len(X) == len(ys) and not isinstance(X.index, pd.DatetimeIndex) \
            else X.reindex(ys.index)
    T = int((ys.notna() & X.notna().all(axis=1)).sum())
    if H < 0 or T <= H + 30:
        raise DomainError(f"horizon H={H} too large for {T} usable rows (need T > H + 30)")
    betas, ses, ns, lags = [], [], [], []
    for h in range(H + 1):
        lag = hac_lag + h if lag_growth else hac_lag
        yh, Xh, _ = _complete_rows(ys.shift(-h), X, [a_name])
        fit = ols_hac(yh, Xh, lag)
        betas.append(fit.coefficients[a_name])
        ses.append(fit.se[a_name])
        ns.append(fit.n_obs)
        lags.append(lag)
    b = np.array(betas)
    s = np.array(ses)
    return IrfResult(np.arange(H + 1), b, s, cumulative_pct_10pp(b),
                     np.column_stack([b - Z95 * s, b + Z95 * s]), np.array(ns), np.array(lags))


@dataclass
class RegimeEstimate:
    regime: str
    beta: float
    se: float
    semi_el_10pp: float
    n_obs: int
    fit: EstimateResult


def _regime_labels(regimes, index) -> pd.Series:
    if isinstance(regimes, pd.DataFrame):
        R = regimes.reindex(index) if not regimes.index.equals(index) else regimes
        labels = pd.Series(pd.NA, index=index, dtype=object)
        for c in R.columns:
            labels[R[c].to_numpy() == 1] = c
        return labels
    lab = pd.Series(regimes)
    return lab.set_axis(index) if len(lab) == len(index) and not lab.index.equals(index) else lab.reindex(index)


def regime_split(y, a, controls=None, regimes=None, hac_lag: int = 10,
                 min_rows: int = 60) -> dict[str, RegimeEstimate | None]:
    """Separate levels OLS-HAC fits per regime.

    ``regimes`` is either a frame of 0/1 flags (column name = regime) or a
    series of labels.  Controls that are constant inside a regime are dropped
    for that regime.  Regimes with fewer than ``min_rows`` rows are skipped
    with a warning and reported as None.
    """
    ys = linalg.as_series(y, "y").astype(float)
    X, a_name = _stack(a, controls, "a")
    if not X.index.equals(ys.index):
        X = X.set_axis(ys.index) if len(X) == len(ys) and not isinstance(X.index, pd.DatetimeIndex) \
            else X.reindex(ys.index)
    labels = _regime_labels(regimes, ys.index)
    out = {}
    for reg in pd.unique(labels.dropna()):
        mask = (labels == reg).to_numpy()
        n = int(mask.sum())
        if n < min_rows:
            warnings.warn(f"regime {reg!r} has {n} rows (< {min_rows}); skipped", stacklevel=2)
            out[str(reg)] = None
            continue
        Xr = X[mask]
        ctrl, _ = linalg.prune_degenerate(Xr.drop(columns=a_name))
        fit = ols_hac(ys[mask], pd.concat([Xr[[a_name]], ctrl], axis=1), hac_lag)
        b, s = float(fit.coefficients[a_name]), float(fit.se[a_name])
        out[str(reg)] = RegimeEstimate(str(reg), b, s, semi_elasticity_10pp(b), fit.n_obs, fit)
    return out


@dataclass
class PiecewiseResult:
    knot: float
    slopes: pd.DataFrame
    fit: EstimateResult
    flags: list

    def predict_adoption_part(self, a_values) -> np.ndarray:
        c = self.fit.coefficients
        av = np.asarray(a_values, dtype=float)
        hinge = c.get("a_above_knot", 0.0)
        return c["const"] + c["a_lin"] * av + hinge * np.maximum(av - self.knot, 0.0)


def piecewise_fit(y, a, controls=None, knot: float = 0.80, hac_lag: int = 10) -> PiecewiseResult:
    """Linear spline in adoption with one knot.

    The below-knot slope is the coefficient on a; the above-knot slope adds the
    hinge coefficient, with a delta-method standard error.  When no observation
    exceeds the knot the hinge is omitted, its slope contribution is reported
    as 0 with undefined SE and ``"no_support_above_knot"`` is flagged.
    """
    ys = linalg.as_series(y, "y").astype(float)
    X, a_name = _stack(a, controls, "a")
    if not X.index.equals(ys.index):
        X = X.set_axis(ys.index) if len(X) == len(ys) and not isinstance(X.index, pd.DatetimeIndex) \
            else X.reindex(ys.index)
    av = X[a_name]
    lo, hi = float(av.min()), float(av.max())
    if knot <= lo:
        raise DomainError(f"knot {knot} lies at or below the observed support [{lo:.4f}, {hi:.4f}]")
    flags = []
    basis = pd.DataFrame({"a_lin": av}, index=X.index)
    above = np.maximum(av - knot, 0.0)
    has_above = bool((above > 0).any())
    if has_above:
        basis["a_above_knot"] = above
    else:
        flags.append("no_support_above_knot")
    rhs = pd.concat([basis, X.drop(columns=a_name)], axis=1)
    ys, rhs, _ = _complete_rows(ys, rhs, list(basis.columns))
    fit = ols_hac(ys, rhs, hac_lag)
    c, V = fit.coefficients, fit.cov
    b_lo, se_lo = float(c["a_lin"]), float(fit.se["a_lin"])
    if has_above:
        b_hi = b_lo + float(c["a_above_knot"])
        var_hi = V.loc["a_lin", "a_lin"] + V.loc["a_above_knot", "a_above_knot"] + 2 * V.loc["a_lin", "a_above_knot"]
        se_hi = float(np.sqrt(max(var_hi, 0.0)))
        hinge_coef, hinge_se = float(c["a_above_knot"]), float(fit.se["a_above_knot"])
    else:
        b_hi, se_hi = b_lo, float("nan")
        hinge_coef, hinge_se = 0.0, float("nan")
    rows = []
    for seg, b, s in ((f"a<={knot:g}", b_lo, se_lo), (f"a>{knot:g}", b_hi, se_hi)):
        lo_ci, hi_ci = b - Z95 * s, b + Z95 * s
        rows.append({"segment": seg, "beta": b, "se": s, "ci_lower": lo_ci, "ci_upper": hi_ci,
                     "semi_el_10pp": semi_elasticity_10pp(b),
                     "semi_el_ci_lower": semi_elasticity_10pp(lo_ci),
                     "semi_el_ci_upper": semi_elasticity_10pp(hi_ci)})
    slopes = pd.DataFrame(rows)
    slopes.attrs["hinge_coef"] = hinge_coef
    slopes.attrs["hinge_se"] = hinge_se
    return PiecewiseResult(knot, slopes, fit, flags)

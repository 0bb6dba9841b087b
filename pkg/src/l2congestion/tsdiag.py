"""Stationarity, cointegration and residual-dependence diagnostics.

ADF and KPSS statistics come from statsmodels; the Phillips-Perron statistic
and the Engle-Granger residual test are computed here.  Unit-root p-values use
MacKinnon's response surfaces (``statsmodels.tsa.adfvalues.mackinnonp``);
KPSS p-values interpolate the Kwiatkowski et al. critical values and are
clamped to [0.01, 0.10] with ``p_bounded`` set when clamped.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import stats
from statsmodels.tools.sm_exceptions import InterpolationWarning
from statsmodels.tsa.adfvalues import mackinnonp
from statsmodels.tsa.stattools import adfuller, kpss

from . import linalg
from .errors import DegeneracyError, DomainError

_SM_TREND = {"none": "n", "intercept": "c", "trend": "ct"}


@dataclass(frozen=True)
class TestResult:
    test: str
    statistic: float
    p_value: float
    lags_used: int
    deterministic: str
    null: str
    decision_at_5pct: bool
    p_bounded: bool = False
    zero_residual: bool = False
    extra: dict = field(default_factory=dict, compare=False)

    # keep pytest from collecting this class
    __test__ = False

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p-value {self.p_value} outside [0, 1]")


def _check_mode(deterministic):
    if deterministic not in _SM_TREND:
        raise DomainError(f"deterministic must be one of {sorted(_SM_TREND)}, got {deterministic!r}")


def _prepare(series, min_len=25) -> np.ndarray:
    x = np.asarray(series, dtype=float)
    ok = np.flatnonzero(~np.isnan(x))
    if ok.size == 0:
        raise DomainError("series is entirely missing")
    x = x[ok[0]:ok[-1] + 1]
    if np.isnan(x).any():
        raise DomainError("series has missing interior values")
    if x.size < min_len:
        raise DomainError(f"series too short for unit-root testing ({x.size} < {min_len})")
    if np.ptp(x) == 0:
        raise DegeneracyError("constant series")
    return x


def schwert_lags(nobs: int) -> int:
    return int(math.floor(12 * (nobs / 100.0) ** 0.25))


def adf_test(series, deterministic="trend") -> TestResult:
    """Augmented Dickey-Fuller with lag length chosen by AIC up to floor(12 (T/100)^1/4)."""
    _check_mode(deterministic)
    x = _prepare(series)
    stat, p, lags, *_ = adfuller(x, maxlag=schwert_lags(x.size), regression=_SM_TREND[deterministic],
                                 autolag="AIC")
    p = float(np.clip(p, 0.0, 1.0))
    return TestResult("adf", float(stat), p, int(lags), deterministic, "unit root", p < 0.05)


def kpss_test(series, deterministic="trend") -> TestResult:
    """KPSS with a trend-stationary (or level-stationary) null and automatic bandwidth."""
    _check_mode(deterministic)
    x = _prepare(series)
    reg = "ct" if deterministic == "trend" else "c"
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", InterpolationWarning)
        stat, p, lags, _ = kpss(x, regression=reg, nlags="auto")
    bounded = any(issubclass(w.category, InterpolationWarning) for w in caught)
    null = "trend stationary" if reg == "ct" else "level stationary"
    return TestResult("kpss", float(stat), float(p), int(lags), deterministic, null, p < 0.05,
                      p_bounded=bounded)


def _pp_statistic(x: np.ndarray, deterministic: str, lags: int | None):
    """Phillips-Perron Z_tau from the Dickey-Fuller regression without augmentation."""
    y = x[1:]
    cols = [x[:-1]]
    if deterministic in ("intercept", "trend"):
        cols.append(np.ones_like(y))
    if deterministic == "trend":
        cols.append(np.arange(1, y.size + 1, dtype=float))
    X = np.column_stack(cols)
    n, k = X.shape
    beta, resid, xtx_inv = linalg.lstsq(y, X)
    s2 = resid @ resid / (n - k)
    se = math.sqrt(s2 * xtx_inv[0, 0])
    if lags is None:
        lags = int(math.ceil(12 * (n / 100.0) ** 0.25))
    gamma0 = resid @ resid / n
    lam2 = linalg.long_run_variance(resid, lags)
    rho = beta[0]
    t_stat = (rho - 1.0) / se
    z_tau = math.sqrt(gamma0 / lam2) * t_stat - 0.5 * ((lam2 - gamma0) / math.sqrt(lam2)) * (n * se / math.sqrt(s2))
    return z_tau, lags, rho


def pp_test(series, deterministic="trend", lags: int | None = None) -> TestResult:
    """Phillips-Perron unit-root test with a Bartlett long-run variance."""
    _check_mode(deterministic)
    x = _prepare(series)
    stat, lags, rho = _pp_statistic(x, deterministic, lags)
    p = float(np.clip(mackinnonp(stat, regression=_SM_TREND[deterministic], N=1), 0.0, 1.0))
    return TestResult("pp", float(stat), p, int(lags), deterministic, "unit root", p < 0.05,
                      extra={"rho": float(rho)})


def unit_root_suite(series, deterministic="trend") -> dict[str, TestResult]:
    """ADF, KPSS and Phillips-Perron under one deterministic specification."""
    return {
        "adf": adf_test(series, deterministic),
        "kpss": kpss_test(series, deterministic),
        "pp": pp_test(series, deterministic),
    }


def _is_binary(col: np.ndarray) -> bool:
    return bool(np.isin(col, (0.0, 1.0)).all())


def engle_granger(y, x, lags: int | None = None):
    """Engle-Granger two-step test: OLS levels fit, then Phillips-Perron on the residuals.

    Returns ``(TestResult, residuals)``.  Only non-binary regressors count as
    stochastic when choosing the MacKinnon surface (capped at five regressors);
    0/1 dummies are treated as deterministic terms.
    """
    ys = linalg.as_series(y, "y")
    X = linalg.as_frame(x, "x")
    ys, X = linalg.align(ys, X)
    if len(ys) < 50:
        raise DomainError(f"Engle-Granger needs at least 50 aligned rows, got {len(ys)}")
    Xc = linalg.add_constant(X)
    linalg.check_rank(Xc.to_numpy(dtype=float), list(Xc.columns))
    beta, resid, _ = linalg.lstsq(ys.to_numpy(dtype=float), Xc.to_numpy(dtype=float))
    resid_s = pd.Series(resid, index=ys.index, name="eg_resid")
    n_stoch = sum(not _is_binary(X[c].to_numpy(dtype=float)) for c in X.columns)
    n_vars = min(1 + max(n_stoch, 1), 6)
    yv = ys.to_numpy(dtype=float)
    scale = max(float(np.sum((yv - yv.mean()) ** 2)), float(np.sum(yv**2)), 1e-300)
    if resid @ resid <= 1e-24 * scale:
        res = TestResult("engle_granger", float("-inf"), 0.0, 0, "none", "no cointegration", True,
                         zero_residual=True, extra={"n_vars": n_vars})
        return res, resid_s
    stat, used, _ = _pp_statistic(resid, "none", lags)
    p = float(np.clip(mackinnonp(stat, regression="c", N=n_vars), 0.0, 1.0))
    res = TestResult("engle_granger", float(stat), p, int(used), "none", "no cointegration", p < 0.05,
                     extra={"n_vars": n_vars, "coefficients": dict(zip(Xc.columns, map(float, beta)))})
    return res, resid_s


def acf(x, nlags: int) -> np.ndarray:
    """Sample autocorrelations at lags 1..nlags (demeaned, full-sample denominator)."""
    x = np.asarray(x, dtype=float)
    d = x - x.mean()
    denom = d @ d
    return np.array([d[k:] @ d[:-k] / denom for k in range(1, nlags + 1)])


def pacf_durbin_levinson(r: np.ndarray) -> np.ndarray:
    """Partial autocorrelations from autocorrelations r_1..r_K."""
    K = r.size
    out = np.zeros(K)
    phi_prev = np.zeros(0)
    v = 1.0
    rr = np.concatenate([[1.0], r])
    for k in range(1, K + 1):
        if k == 1:
            a = rr[1]
        else:
            a = (rr[k] - phi_prev @ rr[k - 1:0:-1]) / v
        phi = np.concatenate([phi_prev - a * phi_prev[::-1], [a]])
        v *= 1 - a * a
        out[k - 1] = a
        phi_prev = phi
    return out


def durbin_watson(e) -> float:
    e = np.asarray(e, dtype=float)
    return float(np.sum(np.diff(e) ** 2) / np.sum(e**2))


@dataclass(frozen=True)
class ResidualDiagnostics:
    ljung_box: TestResult
    durbin_watson: float
    acf: np.ndarray
    pacf: np.ndarray
    max_abs_acf_1_10: float


def residual_dependence(residuals, max_lag: int = 10) -> ResidualDiagnostics:
    if max_lag <= 0:
        raise DomainError("max_lag must be positive")
    e = np.asarray(residuals, dtype=float)
    e = e[~np.isnan(e)]
    T = e.size
    if T <= max_lag + 5:
        raise DomainError(f"need more than {max_lag + 5} residuals, got {T}")
    r = acf(e, max_lag)
    q = T * (T + 2) * np.sum(r**2 / (T - np.arange(1, max_lag + 1)))
    p = float(stats.chi2.sf(q, max_lag))
    lb = TestResult("ljung_box", float(q), p, max_lag, "none", "no autocorrelation", p < 0.05)
    return ResidualDiagnostics(lb, durbin_watson(e), r, pacf_durbin_levinson(r),
                               float(np.max(np.abs(r[:min(10, max_lag)]))))


def vif(X) -> pd.Series:
    """Variance-inflation factors 1/(1-R^2_j) from regressing each column on the others.

    Perfectly collinear columns get ``inf``.
    """
    X = linalg.as_frame(X).astype(float)
    if X.shape[1] < 2:
        raise DomainError("VIF needs at least two columns")
    X = X.dropna()
    out = {}
    for c in X.columns:
        y = X[c].to_numpy()
        others = linalg.add_constant(X.drop(columns=c)).to_numpy()
        beta, *_ = np.linalg.lstsq(others, y, rcond=None)
        resid = y - others @ beta
        tss = np.sum((y - y.mean()) ** 2)
        r2 = 1.0 - resid @ resid / tss if tss > 0 else 1.0
        out[c] = math.inf if r2 >= 1 - 1e-12 else 1.0 / (1.0 - r2)
    return pd.Series(out, name="vif")


def diagnostics_table(series: dict, level_mode="trend", diff_mode="intercept") -> pd.DataFrame:
    """Unit-root grid keyed by (series, test, transform): levels with trend, differences with intercept."""
    rows = []
    for name, s in series.items():
        s = pd.Series(s).dropna()
        for transform, values, mode in (("level", s, level_mode), ("first_diff", s.diff().dropna(), diff_mode)):
            for test, res in unit_root_suite(values.to_numpy(), mode).items():
                rows.append({"series": name, "test": test, "transform": transform,
                             "statistic": res.statistic, "p_value": res.p_value, "lags": res.lags_used,
                             "deterministic": res.deterministic, "reject_5pct": res.decision_at_5pct,
                             "p_bounded": res.p_bounded})
    return pd.DataFrame(rows)

"""Gaussian state-space counterfactual for log fees and the dollar welfare bridge.

The model is a local linear trend (or local level) plus static regression
coefficients carried as zero-variance states::

    y_t = mu_t + x_t' b + e_t,           e_t ~ N(0, s2_obs)
    mu_{t+1} = mu_t + nu_t + u_t,        u_t ~ N(0, s2_level)
    nu_{t+1} = nu_t + w_t,               w_t ~ N(0, s2_slope)

Variances are estimated by maximum likelihood on log scale with L-BFGS-B.
Initialisation is approximately diffuse (large prior variance scaled by the
variance of y) and the first ``d`` prediction-error terms, one per diffuse
state, are left out of the likelihood.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import optimize

from . import linalg
from .errors import AlignmentError, DataError, DomainError, ExtrapolationError, FitError

LOG2PI = math.log(2 * math.pi)
DIFFUSE_SCALE = 1e6


@dataclass(frozen=True)
class StateSpaceModel:
    """System matrices for a trend-plus-regression model."""

    y: np.ndarray
    X: np.ndarray
    trend: str = "local_linear"

    @property
    def n_trend(self) -> int:
        return 2 if self.trend == "local_linear" else 1

    @property
    def k(self) -> int:
        return self.n_trend + self.X.shape[1]

    def transition(self) -> np.ndarray:
        T = np.eye(self.k)
        if self.trend == "local_linear":
            T[0, 1] = 1.0
        return T

    def design(self, X=None) -> np.ndarray:
        X = self.X if X is None else X
        Z = np.zeros((len(X), self.k))
        Z[:, 0] = 1.0
        Z[:, self.n_trend:] = X
        return Z

    def state_cov(self, s2_level, s2_slope) -> np.ndarray:
        Q = np.zeros((self.k, self.k))
        Q[0, 0] = s2_level
        if self.trend == "local_linear":
            Q[1, 1] = s2_slope
        return Q


@dataclass
class FilterOutput:
    loglik: float
    a_pred: np.ndarray
    P_pred: np.ndarray
    a_filt: np.ndarray
    P_filt: np.ndarray
    v: np.ndarray
    F: np.ndarray
    K: np.ndarray


def kalman_filter(y, Z, T, Q, h, a1, P1, burn: int = 0) -> FilterOutput:
    """Univariate-observation Kalman filter.

    Parameters
    ----------
    y : (n,) observations
    Z : (n, k) time-varying observation vectors
    T, Q : (k, k) transition and state-noise covariance
    h : observation-noise variance
    a1, P1 : initial predicted state mean and covariance
    burn : number of leading prediction-error terms excluded from the
        log-likelihood (diffuse states)
    """
    n, k = Z.shape
    a_pred = np.empty((n, k))
    P_pred = np.empty((n, k, k))
    a_filt = np.empty((n, k))
    P_filt = np.empty((n, k, k))
    v = np.empty(n)
    F = np.empty(n)
    K = np.empty((n, k))
    a, P = np.asarray(a1, float).copy(), np.asarray(P1, float).copy()
    ll = 0.0
    for t in range(n):
        a_pred[t], P_pred[t] = a, P
        z = Z[t]
        Pz = P @ z
        f = float(z @ Pz + h)
        if f <= 0:
            raise FitError(f"non-positive prediction variance at t={t}", trace=[])
        e = float(y[t] - z @ a)
        kg = Pz / f
        af = a + kg * e
        Pf = P - np.outer(kg, Pz)
        Pf = (Pf + Pf.T) / 2
        a_filt[t], P_filt[t] = af, Pf
        v[t], F[t] = e, f
        K[t] = T @ kg
        if t >= burn:
            ll -= 0.5 * (LOG2PI + math.log(f) + e * e / f)
        a = T @ af
        P = T @ Pf @ T.T + Q
    return FilterOutput(ll, a_pred, P_pred, a_filt, P_filt, v, F, K)


def state_smoother(out: FilterOutput, Z, T):
    """Fixed-interval smoother by backward recursion on (r_t, N_t).

    Returns smoothed state means (n, k) and covariances (n, k, k).
    """
    n, k = Z.shape
    r = np.zeros(k)
    N = np.zeros((k, k))
    alpha = np.empty((n, k))
    V = np.empty((n, k, k))
    for t in range(n - 1, -1, -1):
        z = Z[t]
        L = T - np.outer(out.K[t], z)
        r = z * (out.v[t] / out.F[t]) + L.T @ r
        N = np.outer(z, z) / out.F[t] + L.T @ N @ L
        P = out.P_pred[t]
        alpha[t] = out.a_pred[t] + P @ r
        Vt = P - P @ N @ P
        V[t] = (Vt + Vt.T) / 2
    return alpha, V


def gaussian_loglik_bruteforce(y, Z, T, Q, h, a1, P1) -> float:
    """Exact log density of y by stacking the state recursion (small n only)."""
    y = np.asarray(y, float)
    n, k = Z.shape
    # state means and joint covariance of (alpha_1..alpha_n)
    means = np.empty((n, k))
    cov = np.zeros((n * k, n * k))
    Phi = [np.eye(k)]
    for _ in range(n):
        Phi.append(T @ Phi[-1])
    m = np.asarray(a1, float)
    for t in range(n):
        means[t] = m
        m = T @ m
    # alpha_t = T^{t} alpha_1 + sum_{s<t} T^{t-1-s} eta_s
    for t in range(n):
        for s in range(n):
            c = Phi[t] @ P1 @ Phi[s].T
            for j in range(min(t, s)):
                c = c + Phi[t - 1 - j] @ Q @ Phi[s - 1 - j].T
            cov[t * k:(t + 1) * k, s * k:(s + 1) * k] = c
    D = np.zeros((n, n * k))
    for t in range(n):
        D[t, t * k:(t + 1) * k] = Z[t]
    mu = np.array([Z[t] @ means[t] for t in range(n)])
    S = D @ cov @ D.T + h * np.eye(n)
    sign, logdet = np.linalg.slogdet(S)
    if sign <= 0:
        raise DomainError("brute-force covariance is not positive definite")
    d = y - mu
    return float(-0.5 * (n * LOG2PI + logdet + d @ np.linalg.solve(S, d)))


@dataclass
class StateSpaceFit:
    index: pd.Index
    y: np.ndarray
    X: pd.DataFrame
    trend: str
    variances: dict
    coefficients: pd.Series
    coef_se: pd.Series
    filtered_state: np.ndarray
    filtered_cov: np.ndarray
    smoothed_state: np.ndarray
    smoothed_cov: np.ndarray
    loglik: float
    converged: bool
    iterations: int
    meta: dict = field(default_factory=dict)

    @property
    def model(self) -> StateSpaceModel:
        return StateSpaceModel(self.y, self.X.to_numpy(dtype=float), self.trend)

    def observation_path(self, X=None):
        """Smoothed signal z_t' alpha_t|T and its standard error for a regressor block."""
        Xv = self.X.to_numpy(dtype=float) if X is None else np.asarray(X, dtype=float)
        Z = self.model.design(Xv)
        mean = np.einsum("tk,tk->t", Z, self.smoothed_state)
        var = np.einsum("tk,tkl,tl->t", Z, self.smoothed_cov, Z)
        return mean, np.sqrt(np.clip(var, 0, None))

    @property
    def smoothed_fit(self) -> pd.Series:
        return pd.Series(self.observation_path()[0], index=self.index, name="smoothed")

    @property
    def filtered_level(self) -> pd.Series:
        return pd.Series(self.filtered_state[:, 0], index=self.index, name="level")


def _setup(y, regressors):
    ys = linalg.as_series(y, "y").astype(float)
    if regressors is None:
        Xf = pd.DataFrame(index=ys.index)
    else:
        Xf = linalg.as_frame(regressors, "x").astype(float)
        if not isinstance(ys.index, pd.DatetimeIndex):
            ys = ys.reset_index(drop=True)
            Xf = Xf.reset_index(drop=True)
        Xf = Xf.reindex(ys.index)
    if ys.isna().any():
        raise DataError("state-space fit: missing y inside the window")
    if Xf.isna().any().any():
        raise DataError("state-space fit: missing regressor values inside the window")
    return ys, Xf


def _initial(model: StateSpaceModel, scale: float):
    k = model.k
    return np.zeros(k), np.eye(k) * DIFFUSE_SCALE * scale


def fit_state_space(y, regressors=None, trend: str = "local_linear", fixed: dict | None = None,
                    min_obs: int = 90, max_iter: int = 500) -> StateSpaceFit:
    """Maximum-likelihood local-trend-plus-regression model.

    Parameters
    ----------
    y : Series
        Log fee (or any outcome) over the fit window, no missing values.
    regressors : DataFrame
        Static-coefficient regressors; the first is conventionally adoption.
    trend : {"local_linear", "local_level"}
    fixed : dict, optional
        Variances held fixed, keyed by ``obs``, ``level`` or ``slope``.
    """
    if trend not in ("local_linear", "local_level"):
        raise DomainError(f"unknown trend {trend!r}")
    ys, Xf = _setup(y, regressors)
    n = len(ys)
    if n < min_obs:
        raise DomainError(f"state-space fit needs at least {min_obs} observations, got {n}")
    fixed = dict(fixed or {})
    names = ["obs", "level"] + (["slope"] if trend == "local_linear" else [])
    bad = set(fixed) - set(names)
    if bad:
        raise DomainError(f"unknown fixed variance(s): {sorted(bad)}")
    model = StateSpaceModel(ys.to_numpy(), Xf.to_numpy(dtype=float), trend)
    Z, T = model.design(), model.transition()
    scale = max(float(np.var(model.y)), 1e-12)
    a1, P1 = _initial(model, scale)
    burn = model.k
    free = [p for p in names if p not in fixed]

    def unpack(theta):
        var = dict(fixed)
        for p, v in zip(free, theta):
            var[p] = math.exp(v)
        var.setdefault("slope", 0.0)
        return var

    def negll(theta):
        var = unpack(theta)
        try:
            out = kalman_filter(model.y, Z, T, model.state_cov(var["level"], var["slope"]),
                                var["obs"], a1, P1, burn)
        except FitError:
            return 1e300
        return -out.loglik

    trace = []
    converged, nit = True, 0
    if free:
        x0 = np.full(len(free), math.log(scale / 10))
        lo = math.log(scale) - 30
        hi = math.log(scale) + 10
        res = optimize.minimize(negll, x0, method="L-BFGS-B", bounds=[(lo, hi)] * len(free),
                                callback=lambda xk: trace.append([float(v) for v in xk]),
                                options={"maxiter": max_iter})
        nit = int(res.nit)
        if not res.success:
            if nit >= max_iter:
                raise FitError(f"variance optimisation did not converge in {max_iter} iterations: "
                               f"{res.message}", trace=trace)
            converged = False
        theta = res.x
    else:
        theta = np.array([])
    var = unpack(theta)
    Q = model.state_cov(var["level"], var["slope"])
    out = kalman_filter(model.y, Z, T, Q, var["obs"], a1, P1, burn)
    if not np.isfinite(out.loglik):
        raise FitError("log-likelihood is not finite at the optimum", trace=trace)
    alpha, V = state_smoother(out, Z, T)
    nt = model.n_trend
    cols = list(Xf.columns)
    coef = pd.Series(alpha[-1, nt:], index=cols, dtype=float)
    se = pd.Series(np.sqrt(np.clip(np.diag(V[-1])[nt:], 0, None)), index=cols, dtype=float)
    variances = {p: float(var.get(p, 0.0)) for p in names}
    return StateSpaceFit(ys.index, model.y, Xf, trend, variances, coef, se, out.a_filt, out.P_filt,
                         alpha, V, float(out.loglik), converged, nit,
                         {"diffuse_scale": DIFFUSE_SCALE * scale, "loglik_burn": burn,
                          "fixed": sorted(fixed), "trace_length": len(trace)})


def steady_state_gain(q: float) -> float:
    """Limiting Kalman gain of the local-level model with signal-to-noise ratio q."""
    p = (q + math.sqrt(q * q + 4 * q)) / 2
    return p / (p + 1)


@dataclass
class CounterfactualPath:
    frame: pd.DataFrame
    a_fixed: np.ndarray
    treatment: str
    support: tuple

    @property
    def mean_log_gap(self) -> float:
        return float(np.mean(self.frame["counterfactual"] - self.frame["smoothed"]))


def counterfactual_path(fit: StateSpaceFit, a_fixed, treatment: str | None = None,
                        z: float = 1.96) -> CounterfactualPath:
    """Smoothed signal with the adoption regressor replaced by ``a_fixed``.

    ``a_fixed`` may be a scalar or a path of the window's length.  Values
    outside the observed support of the adoption regressor raise
    :class:`ExtrapolationError`.
    """
    if fit.X.shape[1] == 0:
        raise DomainError("fit has no regressors to replace")
    treatment = treatment or fit.X.columns[0]
    if treatment not in fit.X.columns:
        raise DomainError(f"{treatment!r} is not a regressor of the fit")
    obs = fit.X[treatment].to_numpy(dtype=float)
    lo, hi = float(obs.min()), float(obs.max())
    af = np.broadcast_to(np.asarray(a_fixed, dtype=float), obs.shape).copy()
    if np.any(af < lo) or np.any(af > hi):
        raise ExtrapolationError(f"counterfactual adoption outside the observed support "
                                 f"[{lo:.4f}, {hi:.4f}]")
    Xcf = fit.X.copy()
    Xcf[treatment] = af
    sm_mean, sm_se = fit.observation_path()
    cf_mean, cf_se = fit.observation_path(Xcf.to_numpy(dtype=float))
    frame = pd.DataFrame({
        "observed": fit.y, "smoothed": sm_mean, "smoothed_se": sm_se,
        "a_observed": obs, "a_fixed": af,
        "counterfactual": cf_mean, "counterfactual_se": cf_se,
        "lower95": cf_mean - z * cf_se, "upper95": cf_mean + z * cf_se,
    }, index=fit.index)
    return CounterfactualPath(frame, af, treatment, (lo, hi))


@dataclass
class WelfareResult:
    bf_obs: pd.Series
    bf_cf: pd.Series
    tip: pd.Series
    gas: pd.Series
    price: pd.Series
    usd_daily: pd.Series
    usd_total: float
    ci: tuple
    include_tip: bool
    meta: dict = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"bf_obs": self.bf_obs, "bf_cf": self.bf_cf, "tip": self.tip,
                             "gas": self.gas, "price": self.price, "usd": self.usd_daily})


def welfare_usd(bf_obs, bf_cf, tip, gas, price, include_tip: bool = False, bf_cf_se=None,
                z: float = 1.96) -> WelfareResult:
    """USD_t = (BF_obs - BF_cf + 1_tip * TIP) * GAS * 1e-9 * P_t, fees in Gwei.

    ``bf_cf_se`` (Gwei) propagates through the linear map into a normal band on
    the total.  Daily errors are treated as perfectly correlated, which gives
    the widest band consistent with the daily standard errors.
    """
    parts = [pd.Series(np.asarray(v, dtype=float)) if not isinstance(v, pd.Series) else v.astype(float)
             for v in (bf_obs, bf_cf, tip, gas, price)]
    n = len(parts[0])
    if any(len(p) != n for p in parts):
        raise AlignmentError("welfare inputs differ in length: " + ", ".join(str(len(p)) for p in parts))
    index = parts[0].index
    bo, bc, tp, gs, pr = (p.to_numpy() for p in parts)
    if np.any(gs < 0) or np.any(pr < 0):
        raise DomainError("gas and price must be non-negative")
    scale = gs * 1e-9 * pr
    usd = (bo - bc + (tp if include_tip else 0.0)) * scale
    total = float(np.sum(usd))
    if bf_cf_se is not None:
        se_total = float(np.sum(np.abs(np.asarray(bf_cf_se, dtype=float)) * scale))
        ci = (total - z * se_total, total + z * se_total)
    else:
        ci = (float("nan"), float("nan"))
    mk = lambda v, name: pd.Series(v, index=index, name=name)  # noqa: E731
    return WelfareResult(mk(bo, "bf_obs"), mk(bc, "bf_cf"), mk(tp, "tip"), mk(gs, "gas"), mk(pr, "price"),
                         mk(usd, "usd"), total, ci, bool(include_tip),
                         {"gas_column": "gas_used_total", "ci_correlation": "perfect"})


@dataclass
class CounterfactualAnalysis:
    fit: StateSpaceFit
    path: CounterfactualPath
    welfare: WelfareResult
    percentile: float
    a_fixed: float
    grid: pd.DataFrame


def _window_frame(data: pd.DataFrame, window):
    start, end = (pd.Timestamp(w) if w is not None else None for w in window)
    sub = data.loc[start:end]
    if not isinstance(sub.index, pd.DatetimeIndex) or len(sub) == 0:
        raise DomainError(f"counterfactual window {window} selects no rows")
    return sub


def welfare_from_path(sub: pd.DataFrame, path: CounterfactualPath, price: str = "mean",
                      include_tip: bool = False) -> WelfareResult:
    """Convert a log-fee counterfactual into Gwei and dollars.

    The counterfactual base fee rescales the observed fee by the model-implied
    ratio exp(counterfactual - smoothed); the band uses the same ratio.
    """
    if price not in ("mean", "close"):
        raise DomainError(f"price must be mean or close, got {price!r}")
    f = path.frame
    bf_obs = sub["basefee_median_gwei"].to_numpy(dtype=float)
    ratio = np.exp(f["counterfactual"].to_numpy() - f["smoothed"].to_numpy())
    bf_cf = bf_obs * ratio
    bf_cf_se = bf_cf * f["counterfactual_se"].to_numpy()
    res = welfare_usd(pd.Series(bf_obs, index=sub.index), bf_cf, sub["tip_median_gwei"].to_numpy(),
                      sub["gas_used_total"].to_numpy(), sub[f"eth_price_{price}"].to_numpy(),
                      include_tip, bf_cf_se)
    res.meta.update({"price": price, "bf_cf_rule": "bf_obs * exp(cf - smoothed)"})
    return res


def counterfactual_analysis(data: pd.DataFrame, window, percentile: float = 10.0, price: str = "mean",
                            include_tip: bool = False, regressors=("a_clean", "d_star"),
                            grid_percentiles=(5.0, 25.0), trend: str = "local_linear") -> CounterfactualAnalysis:
    """Fit on the window, fix adoption at a window percentile and price the gap.

    ``grid_percentiles`` together with both price weightings and the tip
    switch forms the scenario grid.
    """
    sub = _window_frame(data, window)
    cols = [c for c in regressors if c in sub.columns]
    cal = [c for c in sub.columns if c.startswith("cal_")]
    X, _ = linalg.prune_degenerate(sub[cols + cal].astype(float))
    if "a_clean" not in X.columns:
        raise DomainError("adoption has no variation inside the counterfactual window")
    fit = fit_state_space(sub["log_basefee"], X, trend=trend)
    a = sub["a_clean"].to_numpy(dtype=float)

    def scenario(pct):
        level = float(np.percentile(a, pct))
        return level, counterfactual_path(fit, level, "a_clean")

    a_fixed, path = scenario(percentile)
    welfare = welfare_from_path(sub, path, price, include_tip)
    rows = []
    for pct in sorted(set(grid_percentiles) | {percentile}):
        level, p = scenario(pct)
        for pr in ("mean", "close"):
            for tip in (False, True):
                w = welfare_from_path(sub, p, pr, tip)
                rows.append({"percentile": pct, "a_fixed": level, "price": pr, "include_tip": tip,
                             "usd_total": w.usd_total, "ci_lower": w.ci[0], "ci_upper": w.ci[1],
                             "mean_log_gap": p.mean_log_gap})
    return CounterfactualAnalysis(fit, path, welfare, float(percentile), a_fixed, pd.DataFrame(rows))

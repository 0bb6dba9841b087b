"""Least-squares kernels shared by the estimators, diagnostics and IV code."""

from __future__ import annotations

import numpy as np
import pandas as pd

from .errors import AlignmentError, RankError


def as_frame(X, prefix="x") -> pd.DataFrame:
    if X is None:
        return pd.DataFrame()
    if isinstance(X, pd.DataFrame):
        return X
    if isinstance(X, pd.Series):
        return X.to_frame(X.name if X.name is not None else prefix)
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    return pd.DataFrame(arr, columns=[f"{prefix}{i}" for i in range(arr.shape[1])])


def as_series(y, name="y") -> pd.Series:
    if isinstance(y, pd.Series):
        return y
    return pd.Series(np.asarray(y, dtype=float), name=name)


def align(y: pd.Series, X: pd.DataFrame, dropna=True):
    """Inner-join y and X on their index and drop incomplete rows."""
    if len(X.columns) and not y.index.equals(X.index):
        if len(y) == len(X) and not isinstance(y.index, pd.DatetimeIndex) \
                and not isinstance(X.index, pd.DatetimeIndex):
            X = X.set_axis(y.index)
        else:
            common = y.index.intersection(X.index)
            if len(common) == 0:
                raise AlignmentError("y and X share no index labels")
            y, X = y.loc[common], X.loc[common]
    if dropna:
        ok = y.notna().to_numpy()
        if len(X.columns):
            ok &= X.notna().all(axis=1).to_numpy()
        y, X = y[ok], X[ok]
    return y, X


def add_constant(X: pd.DataFrame, name="const") -> pd.DataFrame:
    if name in X.columns:
        return X
    out = X.copy()
    out.insert(0, name, 1.0)
    return out


def collinear_columns(X: np.ndarray, names, tol=None) -> list[str]:
    """Columns that add no rank when appended left to right."""
    bad = []
    kept = []
    scale = np.sqrt((X**2).sum(axis=0))
    scale[scale == 0] = 1.0
    Xs = X / scale
    for j in range(Xs.shape[1]):
        cand = Xs[:, kept + [j]]
        if np.linalg.matrix_rank(cand, tol=tol) < len(kept) + 1:
            bad.append(names[j])
        else:
            kept.append(j)
    return bad


def check_rank(X: np.ndarray, names) -> None:
    k = X.shape[1]
    if X.shape[0] < k:
        raise RankError(f"{X.shape[0]} rows cannot identify {k} coefficients", names)
    scale = np.sqrt((X**2).sum(axis=0))
    scale[scale == 0] = 1.0
    if np.linalg.matrix_rank(X / scale) < k:
        bad = collinear_columns(X, list(names))
        raise RankError("regressor block is rank deficient; collinear column(s): "
                        + ", ".join(map(str, bad)), bad)


def lstsq(y: np.ndarray, X: np.ndarray):
    """Return (beta, residuals, (X'X)^-1) via QR."""
    q, r = np.linalg.qr(X)
    beta = np.linalg.solve(r, q.T @ y)
    rinv = np.linalg.solve(r, np.eye(r.shape[0]))
    xtx_inv = rinv @ rinv.T
    resid = y - X @ beta
    return beta, resid, xtx_inv


def bartlett_weights(lag: int) -> np.ndarray:
    """w_j = 1 - j/(L+1) for j = 1..L."""
    j = np.arange(1, lag + 1)
    return 1.0 - j / (lag + 1.0)


def long_run_meat(scores: np.ndarray, lag: int) -> np.ndarray:
    """Newey-West sum  S = G_0 + sum_j w_j (G_j + G_j')  with G_j = sum_t s_t s_{t-j}'."""
    s = scores
    meat = s.T @ s
    for j, w in enumerate(bartlett_weights(lag), start=1):
        if j >= len(s):
            break
        g = s[j:].T @ s[:-j]
        meat += w * (g + g.T)
    return meat


def hac_cov(X: np.ndarray, resid: np.ndarray, xtx_inv: np.ndarray, lag: int) -> np.ndarray:
    meat = long_run_meat(X * resid[:, None], lag)
    cov = xtx_inv @ meat @ xtx_inv
    return (cov + cov.T) / 2


def classical_cov(resid: np.ndarray, xtx_inv: np.ndarray, dof: int) -> np.ndarray:
    s2 = resid @ resid / dof
    return s2 * xtx_inv


def long_run_variance(u: np.ndarray, lag: int) -> float:
    """Bartlett-weighted long-run variance of a demeaned-or-not scalar series (1/T scaling)."""
    u = np.asarray(u, dtype=float)
    return float(long_run_meat(u[:, None], lag)[0, 0] / len(u))


def prune_degenerate(X: pd.DataFrame) -> tuple[pd.DataFrame, dict]:
    """Drop columns that are constant (over non-missing rows) or duplicate an earlier column."""
    dropped = {"constant": [], "duplicate": []}
    keep = []
    seen = {}
    for c in X.columns:
        v = X[c].to_numpy(dtype=float)
        finite = v[~np.isnan(v)]
        if finite.size == 0 or np.ptp(finite) == 0:
            dropped["constant"].append(c)
            continue
        key = v.tobytes()
        if key in seen:
            dropped["duplicate"].append(f"{c}=={seen[key]}")
            continue
        seen[key] = c
        keep.append(c)
    return X[keep], dropped

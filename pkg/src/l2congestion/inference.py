"""Mapping raw coefficients into interpretable quantities.

Semi-elasticities per 10 percentage points of adoption, error-correction
half-lives, Benjamini-Hochberg q-values and minimum detectable effects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import DataError, NonRevertingError, OscillatoryError

Z_975 = 1.96
Z_POWER_80 = 0.8416
MDE_MULTIPLIER = Z_975 + Z_POWER_80


def semi_elasticity_10pp(beta):
    """Percent change in the outcome for a 0.10 change in a [0, 1] share.

    >>> round(semi_elasticity_10pp(-1.382), 2)
    -12.91
    """
    return 100.0 * np.expm1(0.10 * np.asarray(beta, dtype=float)) if np.ndim(beta) \
        else 100.0 * math.expm1(0.10 * float(beta))


def half_life(phi: float) -> float:
    """Days for a deviation from the long-run relation to halve, ln(0.5)/ln(1+phi)."""
    phi = float(phi)
    if phi >= 0:
        raise NonRevertingError(f"phi={phi} >= 0: deviations do not revert")
    if phi <= -1:
        raise OscillatoryError(f"phi={phi} <= -1: adjustment overshoots (oscillatory)")
    return math.log(0.5) / math.log1p(phi)


@dataclass(frozen=True)
class FdrResult:
    outcomes: tuple[str, ...]
    p_values: np.ndarray
    q_values: np.ndarray
    rejected_at_5pct: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"outcome": self.outcomes, "p_value": self.p_values,
                             "q_value": self.q_values, "reject_5pct": self.rejected_at_5pct})


def bh_fdr(p_values: Mapping[str, float] | Sequence[float], alpha: float = 0.05) -> FdrResult:
    """Benjamini-Hochberg step-up q-values, reported in input order."""
    if isinstance(p_values, Mapping):
        names = tuple(str(k) for k in p_values)
        p = np.array([p_values[k] for k in p_values], dtype=float)
    elif isinstance(p_values, pd.Series):
        names = tuple(str(k) for k in p_values.index)
        p = p_values.to_numpy(dtype=float)
    else:
        p = np.asarray(p_values, dtype=float)
        names = tuple(f"h{i}" for i in range(p.size))
    if np.isnan(p).any():
        raise DataError("bh_fdr: NaN p-value")
    if np.any((p < 0) | (p > 1)):
        raise DataError("bh_fdr: p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="mergesort")
    ranked = p[order] * m / np.arange(1, m + 1)
    # running minimum from the largest p downwards
    q_sorted = np.minimum.accumulate(ranked[::-1])[::-1]
    q = np.empty(m)
    q[order] = np.minimum(q_sorted, 1.0)
    return FdrResult(names, p, q, q <= alpha)


@dataclass(frozen=True)
class PowerResult:
    n: int
    n_eff: float
    sd_treatment: float
    hac_se: float
    mde_beta: float
    mde_pct_10pp: float
    n_eff_clamped: bool = False

    def as_dict(self):
        return dict(self.__dict__)


def effective_sample_size(n: int, autocorr: Sequence[float]):
    """Autocorrelation-deflated sample size n / (1 + 2 sum_k w_k rho_k), Bartlett w_k.

    Returns ``(n_eff, clamped)``; a non-positive denominator falls back to ``n``.
    """
    rho = np.asarray(autocorr if autocorr is not None else [], dtype=float)
    K = rho.size
    if K == 0:
        return float(n), False
    w = 1.0 - np.arange(1, K + 1) / (K + 1.0)
    denom = 1.0 + 2.0 * float(np.sum(w * rho))
    if denom <= 0:
        return float(n), True
    return n / denom, False


def mde_power(hac_se: float, n: int, sd_treatment: float = float("nan"),
              autocorr: Sequence[float] = ()) -> PowerResult:
    """Minimum detectable effect at 5% two-sided size and 80% power."""
    if not hac_se > 0:
        raise DataError(f"hac_se must be positive, got {hac_se}")
    if not n > 0:
        raise DataError(f"n must be positive, got {n}")
    mde_beta = MDE_MULTIPLIER * hac_se
    n_eff, clamped = effective_sample_size(n, autocorr)
    return PowerResult(int(n), float(n_eff), float(sd_treatment), float(hac_se), float(mde_beta),
                       float(semi_elasticity_10pp(mde_beta)), clamped)

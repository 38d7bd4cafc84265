"""Empirical VaR and Expected Shortfall estimators on simulated samples.

VaR uses the lower empirical quantile (the ceil(alpha*S)-th ascending order
statistic), which guarantees the exceedance set {x <= VaR} is nonempty. ES
comes in three flavours: tail mean, tail median, and a Monte Carlo average
of VaR over sub-levels drawn uniformly from (0, alpha).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import ParameterError

MEASURES = ("VaR", "ES_mean", "ES_median", "ES_mc")


@dataclass(frozen=True)
class RiskEstimate:
    measure: str
    level: float
    value: float
    n_samples: int

    def __post_init__(self):
        if self.measure not in MEASURES:
            raise ParameterError(f"unknown measure {self.measure!r}")
        if not 0.0 < self.level < 1.0:
            raise ParameterError("level must lie in (0, 1)")


def _order_index(alpha, n):
    """ceil(alpha*n) with protection against one-ulp float noise."""
    prod = alpha * n
    nearest = round(prod)
    if abs(prod - nearest) < 1e-9 and nearest >= 1:
        return int(nearest)
    return int(math.ceil(prod))


def _checked(samples, alpha):
    s = np.asarray(samples, dtype=float).ravel()
    if not 0.0 < alpha < 1.0:
        raise ParameterError("alpha must lie in (0, 1)")
    if s.size < math.ceil(1.0 / alpha):
        raise ParameterError(
            f"need at least {math.ceil(1.0 / alpha)} samples for alpha={alpha}"
        )
    if not np.all(np.isfinite(s)):
        raise ParameterError("samples must be finite")
    return s


def var_estimate(samples, alpha: float) -> float:
    """Lower empirical alpha-quantile of the sample set."""
    s = _checked(samples, alpha)
    k = _order_index(alpha, s.size)
    return float(np.partition(s, k - 1)[k - 1])


def _tail(samples, alpha):
    s = _checked(samples, alpha)
    v = var_estimate(s, alpha)
    return s[s <= v], v


def es_mean(samples, alpha: float) -> float:
    """Mean of the samples at or below the empirical VaR.

    Clamped at the VaR itself: the tail mean cannot exceed it, but pairwise
    summation can drift one ulp past it when the tail is near-constant.
    """
    tail, v = _tail(samples, alpha)
    return float(min(np.mean(tail), v))


def es_median(samples, alpha: float) -> float:
    """Median of the samples at or below the empirical VaR."""
    tail, _ = _tail(samples, alpha)
    return float(np.median(tail))


def es_mc(samples, alpha: float, n_mc: int = 1000, seed: int = 0) -> float:
    """Average of VaR estimates at sub-levels u_i ~ Uniform(0, alpha).

    Deterministic given the seed. Requires n_mc >= 100 draws.
    """
    if n_mc < 100:
        raise ParameterError("n_mc must be at least 100")
    s = _checked(samples, alpha)
    s_sorted = np.sort(s)
    u = np.random.default_rng(seed).uniform(0.0, alpha, size=int(n_mc))
    prod = u * s.size
    nearest = np.round(prod)
    k = np.where(np.abs(prod - nearest) < 1e-9, nearest, np.ceil(prod)).astype(int)
    k = np.maximum(k, 1)
    return float(np.mean(s_sorted[k - 1]))


def estimate_risk(samples, measure: str, alpha: float, n_mc: int = 1000,
                  seed: int = 0) -> RiskEstimate:
    """Dispatch to the named estimator and wrap the result."""
    s = np.asarray(samples, dtype=float).ravel()
    if measure == "VaR":
        value = var_estimate(s, alpha)
    elif measure == "ES_mean":
        value = es_mean(s, alpha)
    elif measure == "ES_median":
        value = es_median(s, alpha)
    elif measure == "ES_mc":
        value = es_mc(s, alpha, n_mc=n_mc, seed=seed)
    else:
        raise ParameterError(f"unknown measure {measure!r}")
    return RiskEstimate(measure=measure, level=float(alpha), value=value,
                        n_samples=int(s.size))

"""Univariate return dynamics: ARMA(1,1) mean, GARCH(1,1) variance.

Estimation is a two-pass scheme. Pass 1 fits the mean equation by
conditional least squares (the Gaussian conditional MLE with profiled
variance). Pass 2 takes the mean-equation residuals as given and fits the
variance recursion jointly with the innovation shape parameters by maximum
likelihood. Both passes run Nelder-Mead on unconstrained transforms of the
parameters, so the stationarity and positivity constraints hold by
construction.

Filtering recursions, with r the raw log returns and eps the mean-equation
residuals:

    mu_t      = phi0 + phi1 * r_{t-1} + theta1 * eps_{t-1}
    sigma2_t  = alpha0 + alpha1 * eps_{t-1}^2 + beta1 * sigma2_{t-1}

initialized with mu_1 = sample mean and sigma2_1 = sample variance of the
fitting window. The recursions are evaluated with scipy's linear filter,
which is algebraically identical to the scalar loop.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import optimize, signal, stats

from .distributions import (
    Normal,
    ParameterError,
    SkewedStudentT,
    StudentT,
    pit,
)

INNOVATION_FAMILIES = ("normal", "student_t", "skewed_student_t")

_EDGE = 1e-6  # distance kept from every constraint boundary
_MAXFEV = 2000
_LOG_NU_CAP = math.log(198.0)  # tail index capped at 200; flat likelihood beyond


class FitError(RuntimeError):
    """Raised when a marginal model cannot be estimated."""


class MarginFitWarning(UserWarning):
    """Emitted when an estimate converged onto a constraint boundary."""


@dataclass(frozen=True)
class ArmaGarchFit:
    """Fitted marginal model with its in-sample filter output.

    mean_params = (phi0, phi1, theta1); vol_params = (alpha0, alpha1, beta1);
    innovation is the standardized residual distribution. fitted_mu and
    fitted_sigma cover the fitting window; the stored initial mean/variance
    make re-filtering (and hence forecasting) exactly reproducible.
    """

    mean_params: tuple
    vol_params: tuple
    innovation: object
    fitted_mu: np.ndarray
    fitted_sigma: np.ndarray
    loglik: float
    init_mean: float
    init_var: float

    def __post_init__(self):
        phi0, phi1, theta1 = self.mean_params
        alpha0, alpha1, beta1 = self.vol_params
        if not (abs(phi1) < 1.0 and abs(theta1) < 1.0):
            raise ParameterError("need |phi1| < 1 and |theta1| < 1")
        if not (alpha0 > 0.0 and alpha1 >= 0.0 and beta1 >= 0.0):
            raise ParameterError("variance parameters must be positive")
        if not (alpha1 + beta1 < 1.0):
            raise ParameterError("alpha1 + beta1 must be < 1")
        if np.any(np.asarray(self.fitted_sigma) <= 0.0):
            raise ParameterError("fitted_sigma must be positive")


@dataclass(frozen=True)
class LjungBoxReport:
    """Portmanteau autocorrelation test results, one row per tested lag."""

    lags: tuple
    statistics: tuple
    p_values: tuple

    def rows(self):
        return list(zip(self.lags, self.statistics, self.p_values))


def _filter_mean(series, mean_params, init_mean):
    """Residuals and conditional means over the series, plus the next-step mean."""
    phi0, phi1, theta1 = mean_params
    r = np.asarray(series, dtype=float)
    mu = np.empty(r.size + 1)
    mu[0] = init_mean
    eps1 = r[0] - init_mean
    if r.size > 1:
        x = r[1:] - phi0 - phi1 * r[:-1]
        eps_rest = signal.lfilter([1.0], [1.0, theta1], x, zi=np.array([-theta1 * eps1]))[0]
        eps = np.concatenate([[eps1], eps_rest])
    else:
        eps = np.array([eps1])
    mu[1:] = phi0 + phi1 * r + theta1 * eps
    return eps, mu


def _filter_variance(eps, vol_params, init_var):
    """Conditional variances over the series, plus the next-step variance."""
    alpha0, alpha1, beta1 = vol_params
    x = alpha0 + alpha1 * eps * eps
    s2 = np.empty(eps.size + 1)
    s2[0] = init_var
    s2[1:] = signal.lfilter([1.0], [1.0, -beta1], x, zi=np.array([beta1 * init_var]))[0]
    return s2


def filter_series(fit: ArmaGarchFit, series) -> tuple:
    """Run the fitted recursions over a series starting at the fit origin.

    The series must begin at the first observation of the fitting window
    (the stored initial mean/variance apply there); it may extend beyond the
    window. Returns (mu, sigma), each of length len(series)+1 whose last
    entry is the one-step-ahead forecast.
    """
    r = np.asarray(series, dtype=float)
    if r.size < 1:
        raise ParameterError("series must not be empty")
    eps, mu = _filter_mean(r, fit.mean_params, fit.init_mean)
    s2 = _filter_variance(eps, fit.vol_params, fit.init_var)
    return mu, np.sqrt(s2)


def forecast_one_step(fit: ArmaGarchFit, history) -> tuple:
    """One-step-ahead conditional mean and volatility after the history."""
    mu, sigma = filter_series(fit, history)
    return float(mu[-1]), float(sigma[-1])


def standardized_residuals(fit: ArmaGarchFit, series) -> np.ndarray:
    """(r_t - mu_t) / sigma_t over the series (no forecast entry)."""
    r = np.asarray(series, dtype=float)
    mu, sigma = filter_series(fit, r)
    return (r - mu[:-1]) / sigma[:-1]


def to_copula_scale(fit: ArmaGarchFit, residuals) -> np.ndarray:
    """Innovation CDF of standardized residuals, clamped inside (0,1)."""
    return pit(residuals, fit.innovation)


def from_copula_scale(fit: ArmaGarchFit, u, mu, sigma):
    """Return scale: mu + sigma * innovation quantile of u."""
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0.0) or np.any(u >= 1.0):
        raise ParameterError("u must lie strictly inside (0, 1)")
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0.0):
        raise ParameterError("sigma must be positive")
    return mu + sigma * fit.innovation.quantile(u)


# ---------------------------------------------------------------------------
# estimation
# ---------------------------------------------------------------------------


def _mean_negss(vec, r, init_mean):
    """Profiled-variance Gaussian objective for pass 1: log mean square residual."""
    phi0 = vec[0]
    phi1 = math.tanh(vec[1])
    theta1 = math.tanh(vec[2])
    eps, _ = _filter_mean(r, (phi0, phi1, theta1), init_mean)
    ss = float(np.mean(eps * eps))
    if not np.isfinite(ss) or ss <= 0.0:
        return np.inf
    return math.log(ss)


def _fit_mean(r, init_mean):
    rbar = float(np.mean(r))
    # AR(1) least squares slope as a cheap starting value
    x0c, x1c = r[:-1] - rbar, r[1:] - rbar
    denom = float(np.dot(x0c, x0c))
    phi_ls = float(np.dot(x0c, x1c) / denom) if denom > 0 else 0.0
    phi_ls = min(max(phi_ls, -0.97), 0.97)
    starts = [
        (rbar * (1.0 - phi_ls), phi_ls, 0.0),
        (rbar, 0.0, 0.0),
        (rbar * 0.5, 0.5, -0.3),
    ]
    best = None
    for phi0, phi1, theta1 in starts:
        x0 = [phi0, math.atanh(phi1), math.atanh(theta1)]
        res = optimize.minimize(
            _mean_negss,
            x0,
            args=(r, init_mean),
            method="Nelder-Mead",
            options={"maxfev": _MAXFEV, "fatol": 1e-8, "xatol": 1e-8},
        )
        if best is None or res.fun < best.fun:
            best = res
    if best is None or not np.isfinite(best.fun):
        raise FitError("mean equation likelihood non-finite at every start")
    phi0 = float(best.x[0])
    phi1 = math.tanh(best.x[1])
    theta1 = math.tanh(best.x[2])
    for name, val in (("phi1", phi1), ("theta1", theta1)):
        if abs(val) > 1.0 - _EDGE:
            warnings.warn(
                f"{name} converged at the stationarity boundary; clipped",
                MarginFitWarning,
                stacklevel=3,
            )
    phi1 = min(max(phi1, -(1.0 - _EDGE)), 1.0 - _EDGE)
    theta1 = min(max(theta1, -(1.0 - _EDGE)), 1.0 - _EDGE)
    return phi0, phi1, theta1


def _sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _logit(p):
    return math.log(p / (1.0 - p))


def _vol_unpack(vec, family):
    alpha0 = math.exp(min(max(vec[0], -700.0), 50.0))
    persistence = _sigmoid(vec[1]) * (1.0 - _EDGE)
    share = _sigmoid(vec[2])
    alpha1 = persistence * share
    beta1 = persistence * (1.0 - share)
    if family == "normal":
        innov = Normal()
    elif family == "student_t":
        innov = StudentT(2.0 + math.exp(min(vec[3], _LOG_NU_CAP)))
    else:
        innov = SkewedStudentT(
            2.0 + math.exp(min(vec[3], _LOG_NU_CAP)), math.exp(min(vec[4], 10.0))
        )
    return (alpha0, alpha1, beta1), innov


def _vol_negll(vec, eps, init_var, family):
    try:
        vol_params, innov = _vol_unpack(vec, family)
    except ParameterError:
        return np.inf
    s2 = _filter_variance(eps, vol_params, init_var)[:-1]
    if np.any(s2 <= 0.0) or not np.all(np.isfinite(s2)):
        return np.inf
    sigma = np.sqrt(s2)
    ll = float(np.sum(innov.logpdf(eps / sigma) - np.log(sigma)))
    if not np.isfinite(ll):
        return np.inf
    return -ll


def fit_arma_garch(series, innovation_family: str = "skewed_student_t") -> ArmaGarchFit:
    """Two-pass fit: conditional-LS mean equation, then MLE variance + shape.

    The innovation family is one of "normal", "student_t",
    "skewed_student_t"; shape parameters (tail index, skewness) are
    estimated in the second pass together with the variance recursion.
    """
    if innovation_family not in INNOVATION_FAMILIES:
        raise ParameterError(f"unknown innovation family {innovation_family!r}")
    r = np.asarray(series, dtype=float)
    if r.ndim != 1 or r.size < 100:
        raise FitError("need a one-dimensional series of at least 100 returns")
    if not np.all(np.isfinite(r)):
        raise FitError("series contains non-finite values")
    init_mean = float(np.mean(r))
    init_var = float(np.var(r, ddof=1))
    if init_var <= 0.0:
        raise FitError("series is constant; variance equation is degenerate")

    mean_params = _fit_mean(r, init_mean)
    eps, _ = _filter_mean(r, mean_params, init_mean)

    var_eps = float(np.var(eps))
    if var_eps <= 0.0:
        raise FitError("mean-equation residuals are constant")
    start = [math.log(var_eps * 0.05), _logit(0.95 / (1.0 - _EDGE)), _logit(0.1 / 0.95)]
    if innovation_family != "normal":
        start.append(math.log(8.0 - 2.0))
    if innovation_family == "skewed_student_t":
        start.append(0.0)
    res = optimize.minimize(
        _vol_negll,
        start,
        args=(eps, init_var, innovation_family),
        method="Nelder-Mead",
        options={"maxfev": _MAXFEV, "fatol": 1e-8, "xatol": 1e-8},
    )
    start_negll = _vol_negll(start, eps, init_var, innovation_family)
    best_x, best_negll = res.x, float(res.fun)
    if start_negll < best_negll:  # never accept a point worse than the start
        best_x, best_negll = np.asarray(start, dtype=float), start_negll
    if not np.isfinite(best_negll):
        raise FitError("variance equation likelihood non-finite at every start")
    vol_params, innov = _vol_unpack(best_x, innovation_family)
    persistence = vol_params[1] + vol_params[2]
    if persistence > 1.0 - _EDGE - 1e-9:
        warnings.warn(
            "alpha1 + beta1 converged at the stationarity boundary; clipped",
            MarginFitWarning,
            stacklevel=2,
        )
        scale = (1.0 - _EDGE) / persistence
        vol_params = (vol_params[0], vol_params[1] * scale, vol_params[2] * scale)

    eps_final, mu_full = _filter_mean(r, mean_params, init_mean)
    s2 = _filter_variance(eps_final, vol_params, init_var)
    return ArmaGarchFit(
        mean_params=tuple(float(p) for p in mean_params),
        vol_params=tuple(float(p) for p in vol_params),
        innovation=innov,
        fitted_mu=mu_full[:-1],
        fitted_sigma=np.sqrt(s2[:-1]),
        loglik=-float(res.fun),
        init_mean=init_mean,
        init_var=init_var,
    )


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------


def ljung_box(series, lags: Sequence[int]) -> LjungBoxReport:
    """Portmanteau test of zero autocorrelation up to each lag in `lags`.

    Q(H) = T (T+2) sum_{h=1..H} acf(h)^2 / (T-h), compared against chi2(H).
    """
    x = np.asarray(series, dtype=float)
    lags = [int(h) for h in lags]
    if not lags or min(lags) < 1:
        raise ParameterError("lags must be positive integers")
    t_len = x.size
    if t_len <= max(lags) + 1:
        raise ParameterError("series too short for the requested lags")
    xc = x - np.mean(x)
    denom = float(np.dot(xc, xc))
    if denom <= 0.0:
        acf = np.zeros(max(lags))
    else:
        acf = np.array(
            [float(np.dot(xc[h:], xc[:-h])) / denom for h in range(1, max(lags) + 1)]
        )
    stats_out = []
    pvals = []
    for h_max in lags:
        terms = acf[:h_max] ** 2 / (t_len - np.arange(1, h_max + 1))
        q = float(t_len * (t_len + 2) * np.sum(terms))
        stats_out.append(q)
        pvals.append(float(stats.chi2.sf(q, df=h_max)))
    return LjungBoxReport(tuple(lags), tuple(stats_out), tuple(pvals))

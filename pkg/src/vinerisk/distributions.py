"""Univariate distributions and the probability integral transform.

The volatility models need standardized innovation laws (standard normal,
Student t and skewed Student t rescaled to mean 0, variance 1), the samplers
need the uniform law, and the test statistics need the chi-square law. All
distribution objects are immutable and every operation is pure, so they can be
shared freely across worker processes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import gammaln

# Copula-scale values are kept away from 0 and 1 because conditional-CDF
# inverses diverge at the boundary.
U_EPS = 1e-10


class ParameterError(ValueError):
    """Raised when a distribution parameter is outside its domain."""


def _t_logpdf(x, nu: float):
    """Log density of the classic Student t; the direct gamma-function form.

    Equivalent to stats.t.logpdf for finite nu but without the infinite-df
    dispatch, which dominates the cost when called once per optimizer step.
    """
    x = np.asarray(x, dtype=float)
    const = gammaln((nu + 1.0) / 2.0) - gammaln(nu / 2.0) - 0.5 * math.log(nu * math.pi)
    return const - 0.5 * (nu + 1.0) * np.log1p(x * x / nu)


@dataclass(frozen=True)
class Normal:
    """Standard normal distribution."""

    def pdf(self, x):
        return stats.norm.pdf(x)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        return -0.5 * x * x - 0.5 * math.log(2.0 * math.pi)

    def cdf(self, x):
        return stats.norm.cdf(x)

    def quantile(self, p):
        _check_prob(p)
        return stats.norm.ppf(p)

    def sample(self, n, rng):
        return rng.standard_normal(n)


@dataclass(frozen=True)
class StudentT:
    """Student t, rescaled to unit variance when nu > 2.

    For nu > 2 the variable is X = T / sqrt(nu / (nu - 2)) with T classic
    Student t, so X has mean 0 and variance 1 and can serve as a GARCH
    innovation law. For 0 < nu <= 2 the plain t distribution is used (the
    variance is not finite, so no rescaling is possible); fitting code
    enforces nu > 2 where standardization matters.
    """

    nu: float

    def __post_init__(self):
        if not (self.nu > 0.0):
            raise ParameterError(f"StudentT needs nu > 0, got {self.nu}")

    @property
    def _scale(self) -> float:
        if self.nu > 2.0:
            return math.sqrt(self.nu / (self.nu - 2.0))
        return 1.0

    def pdf(self, x):
        s = self._scale
        return stats.t.pdf(np.asarray(x, dtype=float) * s, df=self.nu) * s

    def logpdf(self, x):
        s = self._scale
        return _t_logpdf(np.asarray(x, dtype=float) * s, self.nu) + math.log(s)

    def cdf(self, x):
        return stats.t.cdf(np.asarray(x, dtype=float) * self._scale, df=self.nu)

    def quantile(self, p):
        _check_prob(p)
        return stats.t.ppf(p, df=self.nu) / self._scale

    def sample(self, n, rng):
        return self.quantile(rng.random(n))


@dataclass(frozen=True)
class SkewedStudentT:
    """Skewed Student t built from two scaled half-t densities, standardized.

    The skewing takes a symmetric density f and a skew parameter xi > 0 and
    forms

        f_xi(z) = c * ( f(z / xi) * 1{z >= 0} + f(xi * z) * 1{z < 0} ),
        c = 2 / (xi + 1 / xi),

    here with f the classic Student t density with nu degrees of freedom.
    The first two moments of Z ~ f_xi follow from the half moments of f:

        M1 = E|T| = 2 sqrt(nu) Gamma((nu+1)/2) / (sqrt(pi) (nu-1) Gamma(nu/2))
        E[Z]  = M1 * (xi - 1/xi)
        E[Z^2] = (xi^2 + xi^-2 - 1) * nu / (nu - 2)

    and the innovation law is the standardized X = (Z - E[Z]) / sd(Z).
    xi = 1 recovers the standardized symmetric t; xi > 1 skews right.
    nu > 2 is required so the variance exists.
    """

    nu: float
    xi: float

    def __post_init__(self):
        if not (self.nu > 2.0):
            raise ParameterError(f"SkewedStudentT needs nu > 2, got {self.nu}")
        if not (self.xi > 0.0):
            raise ParameterError(f"SkewedStudentT needs xi > 0, got {self.xi}")

    def _moments(self):
        nu, xi = self.nu, self.xi
        log_m1 = (
            math.log(2.0)
            + 0.5 * math.log(nu)
            + gammaln((nu + 1.0) / 2.0)
            - 0.5 * math.log(math.pi)
            - math.log(nu - 1.0)
            - gammaln(nu / 2.0)
        )
        m1 = math.exp(log_m1)
        mean = m1 * (xi - 1.0 / xi)
        second = (xi * xi + 1.0 / (xi * xi) - 1.0) * nu / (nu - 2.0)
        var = second - mean * mean
        return mean, math.sqrt(var)

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def logpdf(self, x):
        nu, xi = self.nu, self.xi
        mean, sd = self._moments()
        z = np.asarray(x, dtype=float) * sd + mean
        log_c = math.log(2.0) - math.log(xi + 1.0 / xi)
        arg = np.where(z >= 0.0, z / xi, z * xi)
        return log_c + _t_logpdf(arg, nu) + math.log(sd)

    def cdf(self, x):
        nu, xi = self.nu, self.xi
        mean, sd = self._moments()
        z = np.asarray(x, dtype=float) * sd + mean
        lower_weight = 1.0 / (1.0 + xi * xi)
        neg = 2.0 * lower_weight * stats.t.cdf(z * xi, df=nu)
        pos = 1.0 - 2.0 * (1.0 - lower_weight) * stats.t.sf(z / xi, df=nu)
        out = np.where(z < 0.0, neg, pos)
        if np.isscalar(x) or np.ndim(x) == 0:
            return float(out)
        return out

    def quantile(self, p):
        _check_prob(p)
        nu, xi = self.nu, self.xi
        mean, sd = self._moments()
        p = np.asarray(p, dtype=float)
        split = 1.0 / (1.0 + xi * xi)
        # Invert each branch of the piecewise CDF on its own region.
        p_low = np.clip(p * (1.0 + xi * xi) / 2.0, 1e-300, 1.0)
        z_low = stats.t.ppf(p_low, df=nu) / xi
        p_high = np.clip(0.5 + (p * (1.0 + xi * xi) - 1.0) / (2.0 * xi * xi), 0.0, 1.0)
        z_high = stats.t.ppf(p_high, df=nu) * xi
        z = np.where(p < split, z_low, z_high)
        out = (z - mean) / sd
        if np.ndim(p) == 0:
            return float(out)
        return out

    def sample(self, n, rng):
        return self.quantile(rng.random(n))


@dataclass(frozen=True)
class Uniform01:
    """Uniform distribution on [0, 1]."""

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= 0.0) & (x <= 1.0), 1.0, 0.0)

    def cdf(self, x):
        return np.clip(np.asarray(x, dtype=float), 0.0, 1.0)

    def quantile(self, p):
        _check_prob(p)
        return np.asarray(p, dtype=float)

    def sample(self, n, rng):
        return rng.random(n)


@dataclass(frozen=True)
class ChiSquare:
    """Chi-square distribution with df degrees of freedom."""

    df: float

    def __post_init__(self):
        if not (self.df >= 1.0):
            raise ParameterError(f"ChiSquare needs df >= 1, got {self.df}")

    def pdf(self, x):
        return stats.chi2.pdf(x, df=self.df)

    def cdf(self, x):
        return stats.chi2.cdf(x, df=self.df)

    def quantile(self, p):
        _check_prob(p)
        return stats.chi2.ppf(p, df=self.df)

    def sample(self, n, rng):
        return self.quantile(rng.random(n))


def _check_prob(p) -> None:
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise ParameterError("probability must lie strictly inside (0, 1)")


def pit(x, dist):
    """Map residual-scale values to the copula scale via the CDF of ``dist``.

    Output is clamped to [U_EPS, 1 - U_EPS] so downstream conditional-CDF
    inverses never see an exact 0 or 1.
    """
    u = np.asarray(dist.cdf(x), dtype=float)
    out = np.clip(u, U_EPS, 1.0 - U_EPS)
    if np.ndim(x) == 0:
        return float(out)
    return out


def inverse_pit(u, dist):
    """Map copula-scale values back to the residual scale via the quantile."""
    return dist.quantile(u)

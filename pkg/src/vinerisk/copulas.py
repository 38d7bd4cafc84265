"""Bivariate parametric copulas: CDF, density, h-functions, fitting.

Ten families (independence, gaussian, student_t, clayton, gumbel, frank, joe,
bb1, bb7, bb8) with quarter-turn rotations for the asymmetric ones. Every
base family here is exchangeable, so a single conditional-CDF kernel per
family serves both directions; rotations are applied as argument reflections
on top.

All kernels are written in the log domain against the parameter caps below,
so densities stay finite for copula data clamped to [1e-10, 1 - 1e-10].
Evaluation is vectorized over numpy arrays; fitting is per-edge maximum
likelihood with AIC selection.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate, optimize, special, stats

from .distributions import U_EPS, ParameterError

# Fixed candidate order; AIC ties keep the earlier entry so fits are
# reproducible across platforms.
FAMILY_ORDER = (
    "independence",
    "gaussian",
    "student_t",
    "clayton",
    "gumbel",
    "frank",
    "joe",
    "bb1",
    "bb7",
    "bb8",
)

# Families whose base form only covers positive dependence; these may carry a
# rotation. Elliptical families and frank handle negative dependence natively.
ROTATABLE = frozenset({"clayton", "gumbel", "joe", "bb1", "bb7", "bb8"})

N_PARAMS = {
    "independence": 0,
    "gaussian": 1,
    "student_t": 2,
    "clayton": 1,
    "gumbel": 1,
    "frank": 1,
    "joe": 1,
    "bb1": 2,
    "bb7": 2,
    "bb8": 2,
}

# Hard caps used during fitting; chosen so that every kernel stays inside
# float64 range at the 1e-10 clamps. The tau ceiling they imply (> 0.93) is
# far beyond anything daily-return residuals produce.
CLAYTON_MAX = 28.0
GUMBEL_MAX = 17.0
FRANK_MAX = 35.0
JOE_MAX = 17.0
BB1_THETA_MAX = 7.0
BB1_DELTA_MAX = 7.0
BB7_THETA_MAX = 8.0
BB7_DELTA_MAX = 18.0
BB8_THETA_MAX = 8.0

NU_MIN = 2.05
NU_MAX = 60.0

_MIN_DENSITY = 1e-300
_BISECT_MAX_STEPS = 200


class NumericError(RuntimeError):
    """Raised when a numeric routine fails to converge."""


class FitWarning(UserWarning):
    """Emitted when one candidate family is skipped during fitting."""


@dataclass(frozen=True)
class PairCopula:
    """A bivariate copula: family name, rotation in degrees, parameters."""

    family: str
    rotation: int = 0
    params: tuple = ()

    def __post_init__(self):
        _validate(self.family, self.rotation, self.params)


@dataclass(frozen=True)
class PairFitResult:
    copula: PairCopula
    loglik: float
    aic: float
    n_obs: int


def _validate(family: str, rotation: int, params: tuple) -> None:
    if family not in N_PARAMS:
        raise ParameterError(f"unknown copula family {family!r}")
    if rotation not in (0, 90, 180, 270):
        raise ParameterError(f"rotation must be one of 0/90/180/270, got {rotation}")
    if rotation != 0 and family not in ROTATABLE:
        raise ParameterError(f"family {family!r} does not admit rotations")
    if len(params) != N_PARAMS[family]:
        raise ParameterError(
            f"family {family!r} takes {N_PARAMS[family]} parameter(s), got {len(params)}"
        )
    if family == "gaussian":
        (rho,) = params
        if not (-1.0 < rho < 1.0):
            raise ParameterError(f"gaussian rho must be in (-1, 1), got {rho}")
    elif family == "student_t":
        rho, nu = params
        if not (-1.0 < rho < 1.0):
            raise ParameterError(f"student_t rho must be in (-1, 1), got {rho}")
        if not (nu > 2.0):
            raise ParameterError(f"student_t nu must exceed 2, got {nu}")
    elif family == "clayton":
        (delta,) = params
        if not (delta > 0.0):
            raise ParameterError(f"clayton delta must be positive, got {delta}")
    elif family in ("gumbel", "joe"):
        (delta,) = params
        if not (delta >= 1.0):
            raise ParameterError(f"{family} delta must be >= 1, got {delta}")
    elif family == "frank":
        (delta,) = params
        if delta == 0.0:
            raise ParameterError("frank delta must be nonzero")
    elif family == "bb1":
        theta, delta = params
        if not (theta > 0.0 and delta >= 1.0):
            raise ParameterError(f"bb1 needs theta > 0 and delta >= 1, got {params}")
    elif family == "bb7":
        theta, delta = params
        if not (theta >= 1.0 and delta > 0.0):
            raise ParameterError(f"bb7 needs theta >= 1 and delta > 0, got {params}")
    elif family == "bb8":
        theta, delta = params
        if not (theta >= 1.0 and 0.0 < delta <= 1.0):
            raise ParameterError(f"bb8 needs theta >= 1 and delta in (0, 1], got {params}")


INDEPENDENCE = PairCopula("independence")


def _clip01(u):
    return np.clip(np.asarray(u, dtype=float), U_EPS, 1.0 - U_EPS)


# ---------------------------------------------------------------------------
# base-form kernels (rotation 0)
#
# _cdf_*(u, v, params)    -> C(u, v)
# _logpdf_*(u, v, params) -> log c(u, v)
# _h_*(t, c, params)      -> conditional CDF of the target t given the
#                            conditioning value c, i.e. dC(t, c)/dc; by
#                            exchangeability this covers both directions.
# ---------------------------------------------------------------------------


def _cdf_independence(u, v, params):
    return u * v


def _logpdf_independence(u, v, params):
    return np.zeros(np.broadcast(u, v).shape)


def _h_independence(t, c, params):
    return t * np.ones_like(np.asarray(c, dtype=float))


def _bvn_cdf(x, y, rho):
    """Bivariate standard normal CDF via Owen's T function.

    P(X <= x, Y <= y) = (Phi(x) + Phi(y)) / 2 - T(x, qx) - T(y, qy) - beta
    with qx = (y - rho x) / (x sqrt(1 - rho^2)) and beta = 1/2 when the
    orthant correction applies. Exact zeros are nudged by 1e-13 to keep the
    q ratios finite; the induced error is far below the 1e-8 target.
    """
    x = np.where(np.abs(x) < 1e-13, 1e-13, x)
    y = np.where(np.abs(y) < 1e-13, 1e-13, y)
    s = math.sqrt(1.0 - rho * rho)
    qx = (y - rho * x) / (x * s)
    qy = (x - rho * y) / (y * s)
    beta = np.where(x * y > 0.0, 0.0, 0.5)
    val = (
        0.5 * (special.ndtr(x) + special.ndtr(y))
        - special.owens_t(x, qx)
        - special.owens_t(y, qy)
        - beta
    )
    return np.clip(val, 0.0, 1.0)


def _cdf_gaussian(u, v, params):
    (rho,) = params
    return _bvn_cdf(special.ndtri(u), special.ndtri(v), rho)


def _logpdf_gaussian(u, v, params):
    (rho,) = params
    x = special.ndtri(u)
    y = special.ndtri(v)
    r2 = 1.0 - rho * rho
    return -0.5 * math.log(r2) - (rho * rho * (x * x + y * y) - 2.0 * rho * x * y) / (
        2.0 * r2
    )


def _h_gaussian(t, c, params):
    (rho,) = params
    x = special.ndtri(t)
    y = special.ndtri(c)
    return special.ndtr((x - rho * y) / math.sqrt(1.0 - rho * rho))


def _cdf_student(u, v, params):
    # no elementary closed form; integrate the conditional CDF over the
    # conditioning coordinate: C(u, v) = int_0^v h(u | s) ds
    def one(ui, vi):
        val, _ = integrate.quad(
            lambda s: _h_student(ui, s, params), 0.0, vi, epsabs=1e-11, epsrel=1e-11, limit=200
        )
        return val

    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    out = np.vectorize(one)(u, v)
    return np.clip(out, 0.0, 1.0)


def _t_ppf(nu, p):
    # inverse t CDF through the regularized incomplete beta inverse; this is
    # the same Cephes kernel scipy's stdtrit wraps, minus its slow outer loop
    q = np.minimum(p, 1.0 - p) * 2.0
    m = special.betaincinv(0.5 * nu, 0.5, q)
    x = np.sqrt(nu * (1.0 - m) / np.maximum(m, 1e-300))
    return np.where(p < 0.5, -x, x)


def _t_logpdf(x, nu):
    return (
        special.gammaln((nu + 1.0) / 2.0)
        - special.gammaln(nu / 2.0)
        - 0.5 * math.log(nu * math.pi)
        - (nu + 1.0) / 2.0 * np.log1p(x * x / nu)
    )


def _logpdf_student(u, v, params):
    rho, nu = params
    u, v = np.broadcast_arrays(u, v)
    xy = _t_ppf(nu, np.concatenate([np.ravel(u), np.ravel(v)]))
    x = xy[: u.size].reshape(u.shape)
    y = xy[u.size :].reshape(v.shape)
    r2 = 1.0 - rho * rho
    quad_form = (x * x - 2.0 * rho * x * y + y * y) / (nu * r2)
    log_f2 = (
        special.gammaln((nu + 2.0) / 2.0)
        - special.gammaln(nu / 2.0)
        - math.log(nu * math.pi)
        - 0.5 * math.log(r2)
        - (nu + 2.0) / 2.0 * np.log1p(quad_form)
    )
    return log_f2 - _t_logpdf(x, nu) - _t_logpdf(y, nu)


def _h_student(t, c, params):
    """h(t | c) = T_{nu+1}((x - rho y) / s(y)), s(y)^2 = (nu + y^2)(1 - rho^2)/(nu + 1)."""
    rho, nu = params
    x = _t_ppf(nu, t)
    y = _t_ppf(nu, c)
    scale = np.sqrt((nu + y * y) * (1.0 - rho * rho) / (nu + 1.0))
    return special.stdtr(nu + 1.0, (x - rho * y) / scale)


def _clayton_log_s(u, v, delta):
    # s = u^-d + v^-d - 1 computed through logs
    a = -delta * np.log(u)
    b = -delta * np.log(v)
    m = np.maximum(a, b)
    return m + np.log(np.exp(a - m) + np.exp(b - m) - np.exp(-m))


def _cdf_clayton(u, v, params):
    (delta,) = params
    return np.exp(-_clayton_log_s(u, v, delta) / delta)


def _logpdf_clayton(u, v, params):
    (delta,) = params
    log_s = _clayton_log_s(u, v, delta)
    return (
        math.log(1.0 + delta)
        - (delta + 1.0) * (np.log(u) + np.log(v))
        - (2.0 + 1.0 / delta) * log_s
    )


def _h_clayton(t, c, params):
    (delta,) = params
    log_s = _clayton_log_s(t, c, delta)
    return np.exp(-(delta + 1.0) * np.log(c) - (1.0 + 1.0 / delta) * log_s)


def _gumbel_parts(u, v, delta):
    x = -np.log(u)
    y = -np.log(v)
    lx = delta * np.log(x)
    ly = delta * np.log(y)
    la = np.logaddexp(lx, ly) / delta  # log A, A = (x^d + y^d)^(1/d)
    return x, y, la


def _cdf_gumbel(u, v, params):
    (delta,) = params
    _, _, la = _gumbel_parts(u, v, delta)
    return np.exp(-np.exp(la))


def _logpdf_gumbel(u, v, params):
    (delta,) = params
    x, y, la = _gumbel_parts(u, v, delta)
    a = np.exp(la)
    return (
        -a
        + (delta - 1.0) * (np.log(x) + np.log(y))
        - np.log(u)
        - np.log(v)
        + (1.0 - 2.0 * delta) * la
        + np.log(a + delta - 1.0)
    )


def _h_gumbel(t, c, params):
    (delta,) = params
    x, y, la = _gumbel_parts(t, c, delta)
    # dC/dc = C * A^(1-d) * y^(d-1) / c with y = -log c
    return np.exp(-np.exp(la) + (1.0 - delta) * la + (delta - 1.0) * np.log(y) - np.log(c))


def _cdf_frank(u, v, params):
    (delta,) = params
    g1 = np.expm1(-delta)
    gu = np.expm1(-delta * u)
    gv = np.expm1(-delta * v)
    return -np.log1p(gu * gv / g1) / delta


def _logpdf_frank(u, v, params):
    (delta,) = params
    em = -np.expm1(-delta)
    emu = -np.expm1(-delta * u)
    emv = -np.expm1(-delta * v)
    denom = em - emu * emv
    num = delta * em * np.exp(-delta * (u + v))
    return np.log(np.maximum(num, _MIN_DENSITY)) - 2.0 * np.log(np.abs(denom))


def _h_frank(t, c, params):
    (delta,) = params
    gt = np.expm1(-delta * t)
    gc = np.expm1(-delta * c)
    g1 = np.expm1(-delta)
    return np.exp(-delta * c) * gt / (g1 + gt * gc)


def _joe_log_w(u, v, delta):
    # w = xb^d + yb^d - xb^d yb^d with xb = 1-u, yb = 1-v
    a = delta * np.log1p(-u)
    b = delta * np.log1p(-v)
    m = np.maximum(a, b)
    return m + np.log(np.exp(a - m) + np.exp(b - m) - np.exp(a + b - m))


def _cdf_joe(u, v, params):
    (delta,) = params
    return -np.expm1(_joe_log_w(u, v, delta) / delta)


def _logpdf_joe(u, v, params):
    (delta,) = params
    a = delta * np.log1p(-u)
    b = delta * np.log1p(-v)
    log_w = _joe_log_w(u, v, delta)
    tail = delta - (-np.expm1(a)) * (-np.expm1(b))
    return (
        (delta - 1.0) * (np.log1p(-u) + np.log1p(-v))
        + (1.0 / delta - 2.0) * log_w
        + np.log(tail)
    )


def _h_joe(t, c, params):
    (delta,) = params
    a = delta * np.log1p(-t)
    log_w = _joe_log_w(t, c, delta)
    return np.exp(
        (1.0 / delta - 1.0) * log_w
        + (delta - 1.0) * np.log1p(-c)
        + np.log(-np.expm1(a))
    )


def _bb1_parts(u, v, theta, delta):
    # x = (u^-t - 1)^d kept as log; w = (x + y)^(1/d) is float-safe
    tu = -theta * np.log(u)
    tv = -theta * np.log(v)
    lx = delta * (tu + np.log1p(-np.exp(-tu)))
    ly = delta * (tv + np.log1p(-np.exp(-tv)))
    lw = np.logaddexp(lx, ly) / delta
    return tu, tv, lw


def _cdf_bb1(u, v, params):
    theta, delta = params
    _, _, lw = _bb1_parts(u, v, theta, delta)
    return np.exp(-np.log1p(np.exp(lw)) / theta)


def _logpdf_bb1(u, v, params):
    theta, delta = params
    tu, tv, lw = _bb1_parts(u, v, theta, delta)
    log1pw = np.log1p(np.exp(lw))
    # g(t) = (t^-theta - 1)^(delta-1) * t^(-theta-1) in logs, with tu = -theta log t
    lg_u = (delta - 1.0) * (tu + np.log1p(-np.exp(-tu))) + (theta + 1.0) * tu / theta
    lg_v = (delta - 1.0) * (tv + np.log1p(-np.exp(-tv))) + (theta + 1.0) * tv / theta
    bracket = np.logaddexp(
        math.log(max(theta * (delta - 1.0), _MIN_DENSITY)) * np.ones_like(lw),
        math.log(1.0 + theta * delta) + lw,
    )
    return lg_u + lg_v + (-1.0 / theta - 2.0) * log1pw + (1.0 - 2.0 * delta) * lw + bracket


def _h_bb1(t, c, params):
    theta, delta = params
    tt, tc, lw = _bb1_parts(t, c, theta, delta)
    log1pw = np.log1p(np.exp(lw))
    log_h = (
        -(1.0 / theta + 1.0) * log1pw
        + (1.0 - delta) * lw
        + (delta - 1.0) * (tc + np.log1p(-np.exp(-tc)))
        + (theta + 1.0) * tc / theta
    )
    return np.exp(log_h)


def _bb7_parts(u, v, theta, delta):
    lp = np.log(-np.expm1(theta * np.log1p(-u)))  # log p, p = 1 - (1-u)^theta
    lq = np.log(-np.expm1(theta * np.log1p(-v)))
    a = -delta * lp
    b = -delta * lq
    m = np.maximum(a, b)
    ls = m + np.log(np.exp(a - m) + np.exp(b - m) - np.exp(-m))  # log s
    l1m = np.log(-np.expm1(-ls / delta))  # log(1 - s^(-1/delta))
    return lp, lq, ls, l1m


def _cdf_bb7(u, v, params):
    theta, delta = params
    _, _, _, l1m = _bb7_parts(u, v, theta, delta)
    return -np.expm1(l1m / theta)


def _logpdf_bb7(u, v, params):
    theta, delta = params
    lp, lq, ls, l1m = _bb7_parts(u, v, theta, delta)
    t2 = math.log(theta * (delta + 1.0)) + (1.0 / theta - 1.0) * l1m + (-1.0 / delta - 2.0) * ls
    if theta > 1.0:
        t1 = (
            math.log(theta - 1.0)
            + (1.0 / theta - 2.0) * l1m
            + (-2.0 / delta - 2.0) * ls
        )
        bracket = np.logaddexp(t1, t2)
    else:
        bracket = t2
    return (
        (theta - 1.0) * (np.log1p(-u) + np.log1p(-v))
        + (-delta - 1.0) * (lp + lq)
        + bracket
    )


def _h_bb7(t, c, params):
    theta, delta = params
    lp, lq, ls, l1m = _bb7_parts(t, c, theta, delta)
    log_h = (
        (1.0 / theta - 1.0) * l1m
        + (-1.0 / delta - 1.0) * ls
        + (-delta - 1.0) * lq
        + (theta - 1.0) * np.log1p(-c)
    )
    return np.exp(log_h)


def _bb8_parts(u, v, theta, delta):
    x = -np.expm1(theta * np.log1p(-delta * u))
    y = -np.expm1(theta * np.log1p(-delta * v))
    eta = -np.expm1(theta * math.log1p(-delta)) if delta < 1.0 else 1.0
    z = x * y / eta
    return x, y, eta, z


def _cdf_bb8(u, v, params):
    theta, delta = params
    _, _, _, z = _bb8_parts(u, v, theta, delta)
    return -np.expm1(np.log1p(-z) / theta) / delta


def _logpdf_bb8(u, v, params):
    theta, delta = params
    x, y, eta, z = _bb8_parts(u, v, theta, delta)
    return (
        math.log(delta)
        - math.log(eta)
        + (theta - 1.0) * (np.log1p(-delta * u) + np.log1p(-delta * v))
        + (1.0 / theta - 2.0) * np.log1p(-z)
        + np.log(theta - z)
    )


def _h_bb8(t, c, params):
    theta, delta = params
    x, y, eta, z = _bb8_parts(t, c, theta, delta)
    log_h = (
        (1.0 / theta - 1.0) * np.log1p(-z)
        + np.log(x)
        - math.log(eta)
        + (theta - 1.0) * np.log1p(-delta * c)
    )
    return np.exp(log_h)


_CDF = {
    "independence": _cdf_independence,
    "gaussian": _cdf_gaussian,
    "student_t": _cdf_student,
    "clayton": _cdf_clayton,
    "gumbel": _cdf_gumbel,
    "frank": _cdf_frank,
    "joe": _cdf_joe,
    "bb1": _cdf_bb1,
    "bb7": _cdf_bb7,
    "bb8": _cdf_bb8,
}

_LOGPDF = {
    "independence": _logpdf_independence,
    "gaussian": _logpdf_gaussian,
    "student_t": _logpdf_student,
    "clayton": _logpdf_clayton,
    "gumbel": _logpdf_gumbel,
    "frank": _logpdf_frank,
    "joe": _logpdf_joe,
    "bb1": _logpdf_bb1,
    "bb7": _logpdf_bb7,
    "bb8": _logpdf_bb8,
}

_H = {
    "independence": _h_independence,
    "gaussian": _h_gaussian,
    "student_t": _h_student,
    "clayton": _h_clayton,
    "gumbel": _h_gumbel,
    "frank": _h_frank,
    "joe": _h_joe,
    "bb1": _h_bb1,
    "bb7": _h_bb7,
    "bb8": _h_bb8,
}


# ---------------------------------------------------------------------------
# rotation layer
# ---------------------------------------------------------------------------

FIRST_GIVEN_SECOND = "1|2"
SECOND_GIVEN_FIRST = "2|1"


def pair_cdf(pc: PairCopula, u1, u2):
    """Copula CDF C(u1, u2) including the rotation.

    Quarter turns are reflections of the base CDF:
    90:  u2 - C(1-u1, u2); 180: u1 + u2 - 1 + C(1-u1, 1-u2); 270: u1 - C(u1, 1-u2).
    """
    u1 = _clip01(u1)
    u2 = _clip01(u2)
    base = _CDF[pc.family]
    if pc.rotation == 0:
        out = base(u1, u2, pc.params)
    elif pc.rotation == 90:
        out = u2 - base(1.0 - u1, u2, pc.params)
    elif pc.rotation == 180:
        out = u1 + u2 - 1.0 + base(1.0 - u1, 1.0 - u2, pc.params)
    else:
        out = u1 - base(u1, 1.0 - u2, pc.params)
    return np.clip(out, 0.0, 1.0)


def pair_density(pc: PairCopula, u1, u2):
    return np.exp(pair_log_density(pc, u1, u2))


def pair_log_density(pc: PairCopula, u1, u2):
    u1 = _clip01(u1)
    u2 = _clip01(u2)
    base = _LOGPDF[pc.family]
    if pc.rotation == 0:
        return base(u1, u2, pc.params)
    if pc.rotation == 90:
        return base(1.0 - u1, u2, pc.params)
    if pc.rotation == 180:
        return base(1.0 - u1, 1.0 - u2, pc.params)
    return base(u1, 1.0 - u2, pc.params)


def h_function(pc: PairCopula, direction: str, u_target, u_cond):
    """Conditional CDF of the target coordinate given the conditioning one.

    direction "1|2" treats u_target as the first coordinate and u_cond as the
    second; "2|1" the other way round. The base families are exchangeable, so
    direction only matters through the rotation reflections:

        90:  h_{1|2}(t|c) = 1 - h(1-t | c)      h_{2|1}(t|c) = h(t | 1-c)
        180: both directions: 1 - h(1-t | 1-c)
        270: h_{1|2}(t|c) = h(t | 1-c)          h_{2|1}(t|c) = 1 - h(1-t | c)
    """
    if direction not in (FIRST_GIVEN_SECOND, SECOND_GIVEN_FIRST):
        raise ValueError(f"direction must be '1|2' or '2|1', got {direction!r}")
    t = _clip01(u_target)
    c = _clip01(u_cond)
    base = _H[pc.family]
    rot = pc.rotation
    if rot == 0:
        out = base(t, c, pc.params)
    elif rot == 180:
        out = 1.0 - base(1.0 - t, 1.0 - c, pc.params)
    elif rot == 90:
        if direction == FIRST_GIVEN_SECOND:
            out = 1.0 - base(1.0 - t, c, pc.params)
        else:
            out = base(t, 1.0 - c, pc.params)
    else:  # 270
        if direction == FIRST_GIVEN_SECOND:
            out = base(t, 1.0 - c, pc.params)
        else:
            out = 1.0 - base(1.0 - t, c, pc.params)
    return np.clip(out, 0.0, 1.0)


def h_inverse(pc: PairCopula, direction: str, w, u_cond):
    """Invert the h-function in its target argument by monotone bisection.

    The bracket starts at the [1e-10, 1 - 1e-10] clamps and halves until
    |h(mid) - w| <= 1e-9 or the bracket is exhausted, which satisfies the
    1e-8 roundtrip contract for every family and rotation. For the
    elliptical families (never rotated) the same bisection runs on the
    quantile scale of the target, which avoids a quantile evaluation per
    step; the equation solved is identical.
    """
    if pc.family == "independence":
        return np.broadcast_to(np.asarray(w, dtype=float), np.broadcast(w, u_cond).shape).copy()
    w_arr = np.asarray(np.clip(w, U_EPS, 1.0 - U_EPS), dtype=float)
    c_arr = _clip01(u_cond)
    w_b, c_b = np.broadcast_arrays(w_arr, c_arr)
    shape = w_b.shape
    w_f = w_b.reshape(-1)
    c_f = c_b.reshape(-1)

    if pc.family in ("gaussian", "student_t"):
        out = _h_inverse_elliptical(pc, w_f, c_f)
    else:
        out = _h_inverse_generic(pc, direction, w_f, c_f)
    out = np.clip(out, U_EPS, 1.0 - U_EPS)
    if shape == ():
        return float(out[0])
    return out.reshape(shape)


def _h_inverse_generic(pc, direction, w, c):
    lo = np.full_like(w, U_EPS)
    hi = np.full_like(w, 1.0 - U_EPS)
    mid = 0.5 * (lo + hi)
    for _ in range(_BISECT_MAX_STEPS):
        mid = 0.5 * (lo + hi)
        val = h_function(pc, direction, mid, c)
        err = np.abs(val - w)
        width = hi - lo
        if np.all((err <= 1e-9) | (width <= 1e-15)):
            return mid
        go_up = val < w
        lo = np.where(go_up, mid, lo)
        hi = np.where(go_up, hi, mid)
    raise NumericError("h_inverse bisection did not converge in 200 steps")


def _h_inverse_elliptical(pc, w, c):
    if pc.family == "gaussian":
        to_z = special.ndtri
        to_u = special.ndtr

        def h_of_z(z, yc):
            (rho,) = pc.params
            return special.ndtr((z - rho * yc) / math.sqrt(1.0 - rho * rho))

    else:
        rho, nu = pc.params

        def to_z(u):
            return _t_ppf(nu, np.asarray(u, dtype=float))

        def to_u(z):
            return special.stdtr(nu, z)

        def h_of_z(z, yc):
            scale = np.sqrt((nu + yc * yc) * (1.0 - rho * rho) / (nu + 1.0))
            return special.stdtr(nu + 1.0, (z - rho * yc) / scale)

    yc = to_z(c)
    lo = np.full_like(w, float(to_z(U_EPS)))
    hi = np.full_like(w, float(to_z(1.0 - U_EPS)))
    mid = 0.5 * (lo + hi)
    for _ in range(_BISECT_MAX_STEPS):
        mid = 0.5 * (lo + hi)
        val = h_of_z(mid, yc)
        err = np.abs(val - w)
        width = hi - lo
        if np.all((err <= 1e-9) | (width <= 1e-12 * np.maximum(1.0, np.abs(mid)))):
            return to_u(mid)
        go_up = val < w
        lo = np.where(go_up, mid, lo)
        hi = np.where(go_up, hi, mid)
    raise NumericError("h_inverse bisection did not converge in 200 steps")


# ---------------------------------------------------------------------------
# Kendall's tau
# ---------------------------------------------------------------------------


def _debye1(x: float) -> float:
    """First Debye function D1(x) = (1/x) int_0^x t / (e^t - 1) dt."""

    def integrand(t):
        return np.where(t < 1e-12, 1.0 - t / 2.0, t / np.expm1(t))

    val, _ = integrate.quad(integrand, 0.0, x, limit=200)
    return val / x


def _tau_numeric(pc: PairCopula) -> float:
    """tau = 1 - 4 int int (dC/du)(dC/dv) du dv on a Gauss-Legendre grid."""
    nodes, weights = np.polynomial.legendre.leggauss(128)
    g = 0.5 * (nodes + 1.0)
    wts = 0.5 * weights
    uu, vv = np.meshgrid(g, g, indexing="ij")
    du = h_function(pc, SECOND_GIVEN_FIRST, vv, uu)  # dC/du at (u, v)
    dv = h_function(pc, FIRST_GIVEN_SECOND, uu, vv)  # dC/dv at (u, v)
    integral = float(np.einsum("i,j,ij->", wts, wts, du * dv))
    return 1.0 - 4.0 * integral


def kendall_tau(pc: PairCopula) -> float:
    """Population Kendall's tau of the pair copula.

    Elliptical: (2/pi) arcsin(rho). Single-parameter archimedean families use
    their standard formulas (clayton d/(d+2), gumbel 1 - 1/d, frank via the
    Debye function, joe via the generator integral). The bb families fall
    back to numerical integration. Quarter turns (90/270) negate tau.
    """
    fam = pc.family
    if fam == "independence":
        tau = 0.0
    elif fam in ("gaussian", "student_t"):
        tau = 2.0 / math.pi * math.asin(pc.params[0])
    elif fam == "clayton":
        d = pc.params[0]
        tau = d / (d + 2.0)
    elif fam == "gumbel":
        tau = 1.0 - 1.0 / pc.params[0]
    elif fam == "frank":
        d = pc.params[0]
        tau = 1.0 - 4.0 / abs(d) * (1.0 - _debye1(abs(d)))
        tau = math.copysign(tau, d)
    elif fam == "joe":
        d = pc.params[0]

        def integrand(t):
            inner = -np.expm1(d * np.log1p(-t))  # 1 - (1-t)^d
            return np.log(inner) * inner * (1.0 - t) ** (1.0 - d) / d

        # tau = 1 + 4 int phi/phi' with phi(t) = -log(1 - (1-t)^d); the
        # integrand above is phi/phi' written out (it is negative on (0,1))
        val, _ = integrate.quad(integrand, 0.0, 1.0, limit=200)
        tau = 1.0 + 4.0 * val
    else:
        tau = _tau_numeric(PairCopula(fam, 0, pc.params))
    if pc.rotation in (90, 270):
        return -tau
    return tau


def empirical_kendall_tau(u1, u2=None) -> float:
    """Concordance-based sample tau of paired copula observations."""
    if u2 is None:
        arr = np.asarray(u1, dtype=float)
        u1, u2 = arr[:, 0], arr[:, 1]
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    if u1.shape != u2.shape or u1.size < 2:
        raise ValueError("need at least two paired observations")
    res = stats.kendalltau(u1, u2)
    return float(res.statistic)


# ---------------------------------------------------------------------------
# sampling and fitting
# ---------------------------------------------------------------------------


def sample_pair(pc: PairCopula, n: int, seed) -> np.ndarray:
    """Draw n pairs via the conditional method: u1 = w1, u2 = h^-1(w2 | w1)."""
    rng = np.random.default_rng(seed)
    w = rng.random((n, 2))
    u1 = np.clip(w[:, 0], U_EPS, 1.0 - U_EPS)
    u2 = h_inverse(pc, SECOND_GIVEN_FIRST, w[:, 1], u1)
    return np.column_stack([u1, u2])


def _tau_start(family: str, tau: float):
    """Method-of-moments style starting point; tau is the (rotated) sample value."""
    t = min(max(abs(tau), 0.02), 0.9)
    if family == "gaussian":
        return (math.sin(math.pi * tau / 2.0),)
    if family == "student_t":
        return (math.sin(math.pi * tau / 2.0), 8.0)
    if family == "clayton":
        return (max(2.0 * t / (1.0 - t), 5e-2),)
    if family == "gumbel":
        return (1.0 / (1.0 - t),)
    if family == "frank":
        # crude inversion, good enough as a bracket center
        d = 12.0 * tau if abs(tau) < 0.45 else math.copysign(14.0 * abs(tau) ** 1.5 + 4.0, tau)
        return (d if d != 0.0 else 0.5,)
    if family == "joe":
        return (min(1.0 + 2.0 * t / max(1.0 - t, 0.05), JOE_MAX - 1.0),)
    if family == "bb1":
        theta0 = 0.5
        delta0 = min(max(1.0 / (1.0 - t) * 0.9, 1.001), BB1_DELTA_MAX - 0.5)
        return (theta0, delta0)
    if family == "bb7":
        return (min(1.0 + t, BB7_THETA_MAX - 1.0), max(2.0 * t / (1.0 - t), 0.1))
    if family == "bb8":
        return (min(1.0 + 2.0 * t, BB8_THETA_MAX - 1.0), 0.8)
    raise ValueError(family)


_SCALAR_BOUNDS = {
    "gaussian": (-6.0, 6.0),  # atanh(rho)
    "clayton": (math.log(1e-4), math.log(CLAYTON_MAX)),
    "gumbel": (math.log(1e-6), math.log(GUMBEL_MAX - 1.0)),
    "joe": (math.log(1e-6), math.log(JOE_MAX - 1.0)),
    "frank": (math.log(1e-3), math.log(FRANK_MAX)),
}


def _scalar_to_params(family: str, s: float, sign: float) -> tuple:
    if family == "gaussian":
        return (math.tanh(s),)
    if family == "clayton":
        return (math.exp(s),)
    if family in ("gumbel", "joe"):
        return (1.0 + math.exp(s),)
    if family == "frank":
        return (sign * math.exp(s),)
    raise ValueError(family)


def _params_to_scalar(family: str, params: tuple) -> float:
    if family == "gaussian":
        return math.atanh(min(max(params[0], -0.999999), 0.999999))
    if family == "clayton":
        return math.log(min(max(params[0], 1e-4), CLAYTON_MAX))
    if family in ("gumbel", "joe"):
        cap = GUMBEL_MAX if family == "gumbel" else JOE_MAX
        return math.log(min(max(params[0] - 1.0, 1e-6), cap - 1.0))
    if family == "frank":
        return math.log(min(max(abs(params[0]), 1e-3), FRANK_MAX))
    raise ValueError(family)


def _vec_to_params(family: str, vec) -> tuple:
    if family == "student_t":
        rho = math.tanh(vec[0])
        nu = min(max(2.0 + math.exp(min(vec[1], 30.0)), NU_MIN), NU_MAX)
        return (rho, nu)
    if family == "bb1":
        theta = min(math.exp(vec[0]), BB1_THETA_MAX)
        delta = min(1.0 + math.exp(vec[1]), BB1_DELTA_MAX)
        return (max(theta, 1e-6), delta)
    if family == "bb7":
        theta = min(1.0 + math.exp(vec[0]), BB7_THETA_MAX)
        delta = min(math.exp(vec[1]), BB7_DELTA_MAX)
        return (theta, max(delta, 1e-4))
    if family == "bb8":
        theta = min(1.0 + math.exp(vec[0]), BB8_THETA_MAX)
        delta = 1.0 / (1.0 + math.exp(-vec[1]))
        return (theta, max(delta, 1e-4))
    raise ValueError(family)


def _params_to_vec(family: str, params: tuple) -> list:
    if family == "student_t":
        rho, nu = params
        return [math.atanh(min(max(rho, -0.999999), 0.999999)), math.log(max(nu - 2.0, 1e-3))]
    if family == "bb1":
        return [math.log(max(params[0], 1e-6)), math.log(max(params[1] - 1.0, 1e-6))]
    if family == "bb7":
        return [math.log(max(params[0] - 1.0, 1e-6)), math.log(max(params[1], 1e-4))]
    if family == "bb8":
        d = min(max(params[1], 1e-4), 1.0 - 1e-9)
        return [math.log(max(params[0] - 1.0, 1e-6)), math.log(d / (1.0 - d))]
    raise ValueError(family)


def _fit_base_family(family: str, u1, u2, tau: float):
    """Maximize the base-form log likelihood on (already rotated) data."""
    n = u1.size

    def negll_params(params):
        try:
            with np.errstate(all="ignore"):
                ll = _LOGPDF[family](u1, u2, params)
        except (FloatingPointError, ValueError):
            return np.inf
        total = np.sum(ll)
        if not np.isfinite(total):
            return np.inf
        return -total

    if N_PARAMS[family] == 1:
        sign = 1.0 if tau >= 0 else -1.0
        lo, hi = _SCALAR_BOUNDS[family]
        start = _params_to_scalar(family, _tau_start(family, tau))
        res = optimize.minimize_scalar(
            lambda s: negll_params(_scalar_to_params(family, s, sign)),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-8},
        )
        cand = [res.x, start]
        vals = [negll_params(_scalar_to_params(family, s, sign)) for s in cand]
        best = cand[int(np.argmin(vals))]
        params = _scalar_to_params(family, best, sign)
        return params, -min(vals)

    x0 = _params_to_vec(family, _tau_start(family, tau))
    res = optimize.minimize(
        lambda v: negll_params(_vec_to_params(family, v)),
        x0,
        method="Nelder-Mead",
        options={"maxfev": 150, "fatol": 5e-5, "xatol": 2e-3},
    )
    vec = res.x if np.isfinite(res.fun) and res.fun <= negll_params(_vec_to_params(family, x0)) else x0
    params = _vec_to_params(family, vec)
    ll = -negll_params(params)
    return params, ll


_ROTATE_DATA = {
    0: lambda u1, u2: (u1, u2),
    90: lambda u1, u2: (1.0 - u1, u2),
    180: lambda u1, u2: (1.0 - u1, 1.0 - u2),
    270: lambda u1, u2: (u1, 1.0 - u2),
}


def fit_pair(pairs, allowed_families: Sequence[str] = FAMILY_ORDER) -> PairFitResult:
    """Fit every allowed family by MLE and return the minimum-AIC candidate.

    Asymmetric families are tried in the rotations matching the sign of the
    sample tau (0/180 for positive, 90/270 for negative); a rotated fit is
    the base-family fit on reflected data, since the reflections have unit
    Jacobian. Independence (zero parameters, AIC 0) is always a candidate,
    so selection degrades gracefully on noise. Ties keep the earlier
    candidate in the fixed family/rotation iteration order.
    """
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("pairs must be an (n, 2) array of copula data")
    if arr.shape[0] < 20:
        raise ValueError("need at least 20 observations to fit a pair copula")
    allowed = [f for f in FAMILY_ORDER if f in set(allowed_families)]
    if not allowed:
        raise ValueError("allowed_families must name at least one known family")
    u1 = np.clip(arr[:, 0], U_EPS, 1.0 - U_EPS)
    u2 = np.clip(arr[:, 1], U_EPS, 1.0 - U_EPS)
    n = arr.shape[0]
    tau = empirical_kendall_tau(u1, u2)

    best = PairFitResult(INDEPENDENCE, 0.0, 0.0, n)
    for family in allowed:
        if family == "independence":
            continue
        if family in ROTATABLE:
            rotations = (0, 180) if tau >= 0 else (90, 270)
        else:
            rotations = (0,)
        for rot in rotations:
            r1, r2 = _ROTATE_DATA[rot](u1, u2)
            rot_tau = -tau if rot in (90, 270) else tau
            try:
                params, ll = _fit_base_family(family, r1, r2, rot_tau)
            except Exception as exc:  # pragma: no cover - optimizer edge cases
                warnings.warn(
                    f"skipping {family} rotation {rot}: {exc}", FitWarning, stacklevel=2
                )
                continue
            if not np.isfinite(ll):
                warnings.warn(
                    f"skipping {family} rotation {rot}: non-finite likelihood",
                    FitWarning,
                    stacklevel=2,
                )
                continue
            k = N_PARAMS[family]
            aic = -2.0 * ll + 2.0 * k
            if aic < best.aic:
                best = PairFitResult(PairCopula(family, rot, tuple(params)), ll, aic, n)
    return best

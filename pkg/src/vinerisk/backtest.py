"""Backtests for VaR/ES forecast series.

Two groups. Traditional tests check a single series against its nominal
level: likelihood-ratio coverage tests on the violation process, a
bootstrap test on exceedance residuals, and Wald-type conditional
calibration tests built from identification functions. Comparative tests
score two competing series with strictly consistent scoring functions
(pinball for VaR, a joint function for the VaR/ES pair) and classify the
difference into a three-zone traffic light.

Sign conventions: returns and risk estimates live on the log-return scale,
losses are negative numbers, and a violation is a realized return strictly
below the VaR forecast.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import xlogy

from .distributions import ParameterError

STATUS_OK = "OK"
STATUS_NOT_APPLICABLE = "NOT_APPLICABLE"

ZONE_PASSED = "Passed"
ZONE_FAILED = "Failed"
ZONE_INVESTIGATE = "FurtherInvestigation"


@dataclass(frozen=True)
class ViolationProcess:
    """Binary VaR violation indicators with their nominal level."""

    indicators: np.ndarray
    level: float

    def __post_init__(self):
        ind = np.asarray(self.indicators, dtype=int)
        if ind.ndim != 1 or ind.size < 1:
            raise ParameterError("indicators must be a nonempty vector")
        if not np.all((ind == 0) | (ind == 1)):
            raise ParameterError("indicators must be 0/1")
        if not 0.0 < self.level < 1.0:
            raise ParameterError("level must lie in (0, 1)")
        object.__setattr__(self, "indicators", ind)

    @property
    def n(self) -> int:
        return int(self.indicators.size)

    @property
    def n_violations(self) -> int:
        return int(self.indicators.sum())


def violation_process(returns, var_series, level: float) -> ViolationProcess:
    """Indicator series 1{r_t < VaR_t} from aligned forecast/realization pairs."""
    r = np.asarray(returns, dtype=float)
    v = np.asarray(var_series, dtype=float)
    if r.shape != v.shape or r.ndim != 1:
        raise ParameterError("returns and var_series must be aligned vectors")
    return ViolationProcess((r < v).astype(int), level)


@dataclass(frozen=True)
class TestReport:
    test: str
    statistic: float
    p_value: float
    sided: str
    status: str = STATUS_OK
    aux: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.status == STATUS_OK and not (0.0 <= self.p_value <= 1.0):
            raise ParameterError("p-value out of [0, 1]")

    def to_dict(self) -> dict:
        return {
            "test": self.test,
            "statistic": None if math.isnan(self.statistic) else float(self.statistic),
            "p_value": None if math.isnan(self.p_value) else float(self.p_value),
            "sided": self.sided,
            "status": self.status,
            "aux": {k: (float(v) if isinstance(v, (int, float, np.floating)) else v)
                    for k, v in self.aux.items()},
        }


@dataclass(frozen=True)
class ComparativeResult:
    statistic: float
    phi: float
    zone: str
    eta: float

    def __post_init__(self):
        if self.zone not in (ZONE_PASSED, ZONE_FAILED, ZONE_INVESTIGATE):
            raise ParameterError(f"unknown zone {self.zone!r}")

    def to_dict(self) -> dict:
        return {
            "test": "comparative",
            "statistic": float(self.statistic),
            "phi": float(self.phi),
            "zone": self.zone,
            "eta": float(self.eta),
        }


# ---------------------------------------------------------------------------
# coverage LR tests
# ---------------------------------------------------------------------------


def lr_unconditional_coverage(vp: ViolationProcess) -> TestReport:
    """LR test of the violation frequency against the nominal level.

    Degenerate counts (0 or n violations) use the 0*log(0)=0 convention, so
    the statistic stays finite.
    """
    n, x = vp.n, vp.n_violations
    alpha = vp.level
    pi_hat = x / n
    ll0 = xlogy(n - x, 1.0 - alpha) + xlogy(x, alpha)
    ll1 = xlogy(n - x, 1.0 - pi_hat) + xlogy(x, pi_hat)
    lr = max(2.0 * (ll1 - ll0), 0.0)
    return TestReport(
        test="lr_unconditional_coverage",
        statistic=float(lr),
        p_value=float(stats.chi2.sf(lr, df=1)),
        sided="two",
        aux={"n": n, "violations": x, "level": alpha},
    )


def _transition_counts(ind):
    prev, cur = ind[:-1], ind[1:]
    n00 = int(np.sum((prev == 0) & (cur == 0)))
    n01 = int(np.sum((prev == 0) & (cur == 1)))
    n10 = int(np.sum((prev == 1) & (cur == 0)))
    n11 = int(np.sum((prev == 1) & (cur == 1)))
    return n00, n01, n10, n11


def lr_independence(vp: ViolationProcess) -> TestReport:
    """LR test of serial independence against a first-order Markov chain."""
    if vp.n < 2:
        raise ParameterError("need at least 2 observations")
    n00, n01, n10, n11 = _transition_counts(vp.indicators)
    r0, r1 = n00 + n01, n10 + n11
    pi01 = n01 / r0 if r0 else 0.0
    pi11 = n11 / r1 if r1 else 0.0
    pi2 = (n01 + n11) / (r0 + r1)
    ll1 = (xlogy(n00, 1.0 - pi01) + xlogy(n01, pi01)
           + xlogy(n10, 1.0 - pi11) + xlogy(n11, pi11))
    ll0 = xlogy(n00 + n10, 1.0 - pi2) + xlogy(n01 + n11, pi2)
    lr = max(2.0 * (ll1 - ll0), 0.0)
    return TestReport(
        test="lr_independence",
        statistic=float(lr),
        p_value=float(stats.chi2.sf(lr, df=1)),
        sided="two",
        aux={"n00": n00, "n01": n01, "n10": n10, "n11": n11},
    )


def lr_conditional_coverage(vp: ViolationProcess) -> TestReport:
    """Joint test: statistic is exactly LR_uc + LR_ind against chi2(2)."""
    uc = lr_unconditional_coverage(vp)
    ind = lr_independence(vp)
    lr = uc.statistic + ind.statistic
    aux = {"lr_uc": uc.statistic, "lr_ind": ind.statistic}
    aux.update(ind.aux)
    aux.update({"n": vp.n, "violations": vp.n_violations, "level": vp.level})
    return TestReport(
        test="lr_conditional_coverage",
        statistic=float(lr),
        p_value=float(stats.chi2.sf(lr, df=2)),
        sided="two",
        aux=aux,
    )


# ---------------------------------------------------------------------------
# exceedance residuals
# ---------------------------------------------------------------------------


def exceedance_residual_test(returns, var_series, es_series, sided: str = "one",
                             n_boot: int = 4999, seed: int = 0) -> TestReport:
    """Bootstrap test of zero-mean exceedance residuals r_t - ES_t.

    One-sided alternative: residual mean < 0, i.e. realized tail losses run
    below the ES forecasts. Residuals are recentered under the null and
    resampled n_boot times; p = (exceeding count + 1) / (n_boot + 1).
    """
    if sided not in ("one", "two"):
        raise ParameterError("sided must be 'one' or 'two'")
    r = np.asarray(returns, dtype=float)
    v = np.asarray(var_series, dtype=float)
    e = np.asarray(es_series, dtype=float)
    if not (r.shape == v.shape == e.shape) or r.ndim != 1:
        raise ParameterError("misaligned inputs")
    mask = r < v
    resid = r[mask] - e[mask]
    if resid.size == 0:
        return TestReport(
            test="exceedance_residual",
            statistic=float("nan"),
            p_value=float("nan"),
            sided=sided,
            status=STATUS_NOT_APPLICABLE,
            aux={"n_exceedances": 0},
        )
    observed = float(np.mean(resid))
    centered = resid - observed
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, resid.size, size=(int(n_boot), resid.size))
    boot_means = centered[idx].mean(axis=1)
    if sided == "one":
        count = int(np.sum(boot_means <= observed))
    else:
        count = int(np.sum(np.abs(boot_means) >= abs(observed)))
    p = (count + 1) / (int(n_boot) + 1)
    return TestReport(
        test="exceedance_residual",
        statistic=observed,
        p_value=float(p),
        sided=sided,
        aux={"n_exceedances": int(resid.size), "n_boot": int(n_boot)},
    )


# ---------------------------------------------------------------------------
# conditional calibration
# ---------------------------------------------------------------------------


def _identification_matrix(r, v, e, alpha):
    hit = (r < v).astype(float)
    v1 = alpha - hit
    if e is None:
        return v1[:, None]
    v2 = v - e - hit * (v - r) / alpha
    return np.column_stack([v1, v2])


def conditional_calibration_test(returns, var_series, es_series, alpha: float,
                                 sided: str = "two") -> TestReport:
    """Wald-type test that the identification functions average to zero.

    Uses the constant test function, so the statistic is n * Vbar' S^+ Vbar
    with S the non-centered second-moment matrix of the identification
    vector (VaR alone, or the VaR/ES pair when es_series is given). The
    one-sided variant tests each component for a significantly negative mean
    (anti-conservative forecasts) with a Bonferroni correction.
    """
    if sided not in ("one", "two"):
        raise ParameterError("sided must be 'one' or 'two'")
    r = np.asarray(returns, dtype=float)
    v = np.asarray(var_series, dtype=float)
    e = None if es_series is None else np.asarray(es_series, dtype=float)
    if r.shape != v.shape or (e is not None and e.shape != r.shape) or r.ndim != 1:
        raise ParameterError("misaligned inputs")
    n = r.size
    if n < 30:
        raise ParameterError("need at least 30 observations")
    if not 0.0 < alpha < 1.0:
        raise ParameterError("alpha must lie in (0, 1)")
    vmat = _identification_matrix(r, v, e, alpha)
    k = vmat.shape[1]
    vbar = vmat.mean(axis=0)
    sig = vmat.T @ vmat / n
    if np.linalg.matrix_rank(sig) == 0:
        return TestReport(
            test="conditional_calibration",
            statistic=float("nan"),
            p_value=float("nan"),
            sided=sided,
            status=STATUS_NOT_APPLICABLE,
            aux={"k": k, "n": n},
        )
    if sided == "two":
        stat = float(n * vbar @ np.linalg.pinv(sig) @ vbar)
        p = float(stats.chi2.sf(stat, df=k))
    else:
        diag = np.sqrt(np.diag(sig))
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(diag > 0, math.sqrt(n) * vbar / diag, np.inf)
        p = float(min(1.0, k * stats.norm.cdf(z).min()))
        stat = float(z.min())
    return TestReport(
        test="conditional_calibration",
        statistic=stat,
        p_value=p,
        sided=sided,
        aux={"k": k, "n": n, "vbar": [float(x) for x in vbar]},
    )


# ---------------------------------------------------------------------------
# scoring functions and comparative backtest
# ---------------------------------------------------------------------------


def pinball_score(m: float, x: float, alpha: float) -> float:
    """Quantile check loss: (1{x < m} - alpha) * m - 1{x < m} * x."""
    hit = 1.0 if x < m else 0.0
    return (hit - alpha) * m - hit * x


def joint_var_es_score(m_var: float, m_es: float, x: float, alpha: float) -> float:
    """Strictly consistent score for the (VaR, ES) pair; needs m_es <= m_var < 0."""
    if not (m_es <= m_var < 0.0):
        raise ParameterError("joint score requires m_es <= m_var < 0")
    hit = 1.0 if x < m_var else 0.0
    return hit * (x - m_var) / m_es + alpha * (m_var / m_es - 1.0 + math.log(-m_es))


def comparative_backtest(returns, internal_var, internal_es, standard_var,
                         standard_es, measure: str, alpha: float,
                         eta: float = 0.05) -> ComparativeResult:
    """Three-zone comparison of an internal model against a standard one.

    Scores each day (pinball for VaR, joint score for ES), forms the mean
    score difference internal - standard studentized by its sample standard
    deviation, and maps Phi(T) into Passed / Failed / FurtherInvestigation
    at confidence eta. Negative T favors the internal model.
    """
    r = np.asarray(returns, dtype=float)
    vi = np.asarray(internal_var, dtype=float)
    vs = np.asarray(standard_var, dtype=float)
    if not (r.shape == vi.shape == vs.shape) or r.ndim != 1:
        raise ParameterError("misaligned inputs")
    n = r.size
    if n < 30:
        raise ParameterError("need at least 30 observations")
    if measure == "VaR":
        s_int = np.array([pinball_score(m, x, alpha) for m, x in zip(vi, r)])
        s_std = np.array([pinball_score(m, x, alpha) for m, x in zip(vs, r)])
    elif measure in ("ES_mean", "ES_median", "ES_mc", "ES"):
        ei = np.asarray(internal_es, dtype=float)
        es = np.asarray(standard_es, dtype=float)
        if ei.shape != r.shape or es.shape != r.shape:
            raise ParameterError("misaligned ES inputs")
        s_int = np.array([joint_var_es_score(mv, me, x, alpha)
                          for mv, me, x in zip(vi, ei, r)])
        s_std = np.array([joint_var_es_score(mv, me, x, alpha)
                          for mv, me, x in zip(vs, es, r)])
    else:
        raise ParameterError(f"unknown measure {measure!r}")
    delta = s_int - s_std
    sd = float(np.std(delta, ddof=1))
    if sd == 0.0:
        t_comp = 0.0
    else:
        t_comp = float(np.mean(delta) / (sd / math.sqrt(n)))
    phi = float(stats.norm.cdf(t_comp))
    if phi <= eta:
        zone = ZONE_PASSED
    elif 1.0 - phi <= eta:
        zone = ZONE_FAILED
    else:
        zone = ZONE_INVESTIGATE
    return ComparativeResult(statistic=t_comp, phi=phi, zone=zone, eta=float(eta))

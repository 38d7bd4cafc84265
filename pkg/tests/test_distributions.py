import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from vinerisk.distributions import (
    ChiSquare,
    Normal,
    ParameterError,
    SkewedStudentT,
    StudentT,
    Uniform01,
    _t_logpdf,
    inverse_pit,
    pit,
)

INNOVATIONS = [Normal(), StudentT(5.0), SkewedStudentT(6.0, 0.7),
               SkewedStudentT(4.2, 1.4)]


@pytest.mark.parametrize("dist", INNOVATIONS, ids=lambda d: type(d).__name__)
def test_pdf_integrates_to_one(dist):
    total, _ = integrate.quad(lambda x: float(dist.pdf(x)), -np.inf, np.inf,
                              limit=200)
    assert abs(total - 1.0) < 1e-8


@pytest.mark.parametrize("dist", INNOVATIONS, ids=lambda d: type(d).__name__)
def test_standardized_moments(dist):
    """Innovation laws are scaled to mean 0, variance 1 by construction."""
    mean, _ = integrate.quad(lambda x: x * float(dist.pdf(x)), -np.inf, np.inf,
                             limit=200)
    second, _ = integrate.quad(lambda x: x * x * float(dist.pdf(x)),
                               -np.inf, np.inf, limit=200)
    assert abs(mean) < 1e-7
    assert abs(second - 1.0) < 1e-6


@pytest.mark.parametrize("dist", INNOVATIONS, ids=lambda d: type(d).__name__)
def test_cdf_quantile_roundtrip(dist):
    p = np.linspace(0.001, 0.999, 199)
    back = dist.cdf(dist.quantile(p))
    np.testing.assert_allclose(back, p, atol=1e-9)


@pytest.mark.parametrize("dist", INNOVATIONS, ids=lambda d: type(d).__name__)
def test_cdf_matches_integrated_pdf(dist):
    for x in (-2.5, -0.7, 0.0, 0.4, 1.9):
        val, _ = integrate.quad(lambda t: float(dist.pdf(t)), -np.inf, x,
                                limit=200)
        assert abs(val - float(dist.cdf(x))) < 1e-8, x


def test_t_logpdf_matches_scipy():
    x = np.linspace(-30.0, 30.0, 4001)
    for nu in (2.05, 3.0, 4.7, 12.0, 80.0, 199.9):
        np.testing.assert_allclose(_t_logpdf(x, nu), stats.t.logpdf(x, df=nu),
                                   atol=1e-13)


def test_student_t_tail_heavier_than_normal():
    t5 = StudentT(5.0)
    assert float(t5.cdf(-4.0)) > float(Normal().cdf(-4.0))


def test_skewed_student_reduces_to_symmetric():
    sym = SkewedStudentT(7.0, 1.0)
    t = StudentT(7.0)
    x = np.linspace(-4, 4, 41)
    np.testing.assert_allclose(sym.pdf(x), t.pdf(x), atol=1e-12)


def test_skew_direction():
    """xi < 1 puts more mass in the left tail than the right."""
    left = SkewedStudentT(6.0, 0.7)
    assert float(left.cdf(-2.0)) > 1.0 - float(left.cdf(2.0))
    right = SkewedStudentT(6.0, 1.4)
    assert float(right.cdf(-2.0)) < 1.0 - float(right.cdf(2.0))


def test_parameter_domains():
    with pytest.raises(ParameterError):
        StudentT(0.0)
    with pytest.raises(ParameterError):
        SkewedStudentT(2.0, 1.0)
    with pytest.raises(ParameterError):
        SkewedStudentT(5.0, 0.0)
    with pytest.raises(ParameterError):
        ChiSquare(0)
    with pytest.raises(ParameterError):
        Normal().quantile(1.5)


def test_chi_square_against_scipy():
    c = ChiSquare(3)
    x = np.linspace(0.1, 20.0, 50)
    np.testing.assert_allclose(c.cdf(x), stats.chi2.cdf(x, df=3), atol=1e-12)
    p = np.linspace(0.01, 0.99, 25)
    np.testing.assert_allclose(c.quantile(p), stats.chi2.ppf(p, df=3),
                               atol=1e-10)


def test_uniform01():
    u = Uniform01()
    assert float(u.cdf(0.3)) == 0.3
    assert float(u.cdf(-1.0)) == 0.0
    assert float(u.cdf(2.0)) == 1.0
    g = np.random.default_rng(1)
    s = u.sample(1000, g)
    assert np.all((s >= 0) & (s <= 1))


@pytest.mark.parametrize("dist", INNOVATIONS, ids=lambda d: type(d).__name__)
def test_sampling_matches_cdf(dist):
    g = np.random.default_rng(99)
    s = dist.sample(40_000, g)
    d, _ = stats.kstest(s, lambda x: np.asarray(dist.cdf(x)))
    assert d < 0.012


def test_pit_roundtrip():
    dist = SkewedStudentT(5.5, 0.8)
    z = np.random.default_rng(2).normal(size=500) * 2.0
    u = pit(z, dist)
    assert np.all((u > 0.0) & (u < 1.0))
    back = inverse_pit(u, dist)
    np.testing.assert_allclose(back, z, atol=1e-7)


def test_pit_clamps_extremes():
    u = pit(np.array([-1e6, 1e6]), Normal())
    assert 0.0 < u[0] and u[1] < 1.0


@given(nu=st.floats(2.1, 60.0), xi=st.floats(0.3, 3.0),
       p=st.floats(0.001, 0.999))
@settings(max_examples=150, deadline=None)
def test_quantile_cdf_inverse_property(nu, xi, p):
    dist = SkewedStudentT(nu, xi)
    assert abs(float(dist.cdf(dist.quantile(p))) - p) < 1e-8


@given(nu=st.floats(2.1, 60.0), xi=st.floats(0.3, 3.0))
@settings(max_examples=60, deadline=None)
def test_quantile_monotone_property(nu, xi):
    dist = SkewedStudentT(nu, xi)
    q = dist.quantile(np.linspace(0.01, 0.99, 51))
    assert np.all(np.diff(q) > 0)

import numpy as np
import pytest
from scipy import stats

from vinerisk import margins as M
from vinerisk.distributions import Normal, SkewedStudentT

from conftest import simulate_arma_garch, simulate_skewt_garch

MEAN_PARAMS = (0.02, 0.45, -0.25)
VOL_PARAMS = (0.05, 0.12, 0.78)


def loop_filter(r, mp, vp, init_mean, init_var):
    """Explicit-loop oracle for the ARMA/GARCH recursions."""
    phi0, phi1, theta1 = mp
    a0, a1, b1 = vp
    T = len(r)
    mu = np.empty(T + 1)
    s2 = np.empty(T + 1)
    eps = np.empty(T)
    mu[0] = init_mean
    s2[0] = init_var
    eps[0] = r[0] - mu[0]
    for t in range(1, T):
        mu[t] = phi0 + phi1 * r[t - 1] + theta1 * eps[t - 1]
        eps[t] = r[t] - mu[t]
    for t in range(1, T + 1):
        s2[t] = a0 + a1 * eps[t - 1] ** 2 + b1 * s2[t - 1]
    mu[T] = phi0 + phi1 * r[T - 1] + theta1 * eps[T - 1]
    return mu, np.sqrt(s2), eps


def test_filters_match_loop_oracle():
    rng = np.random.default_rng(7)
    r = rng.normal(0.01, 1.3, size=400)
    init_mean = float(np.mean(r))
    init_var = float(np.var(r, ddof=1))
    eps_v, mu_v = M._filter_mean(r, MEAN_PARAMS, init_mean)
    s2_v = M._filter_variance(eps_v, VOL_PARAMS, init_var)
    mu_o, sig_o, eps_o = loop_filter(r, MEAN_PARAMS, VOL_PARAMS,
                                     init_mean, init_var)
    np.testing.assert_allclose(mu_v, mu_o, atol=1e-10)
    np.testing.assert_allclose(eps_v, eps_o, atol=1e-10)
    np.testing.assert_allclose(np.sqrt(s2_v), sig_o, atol=1e-10)


def _manual_fit(mean_params, vol_params):
    return M.ArmaGarchFit(mean_params, vol_params, Normal(),
                          np.zeros(5), np.ones(5), 0.0, 1.0, 1.0)


def test_forecast_hand_examples():
    hist = np.ones(150)
    mu, sig = M.forecast_one_step(_manual_fit((0.0, 0.5, 0.0), (0.1, 0.0, 0.0)),
                                  hist)
    assert abs(mu - 0.5) < 1e-12
    assert abs(sig - np.sqrt(0.1)) < 1e-12
    mu2, _ = M.forecast_one_step(_manual_fit((0.2, 0.0, 0.0), (0.1, 0.0, 0.0)),
                                 hist)
    assert abs(mu2 - 0.2) < 1e-12


def test_filter_series_returns_one_step_forecast_row():
    rng = np.random.default_rng(8)
    r = rng.normal(size=120)
    fit = M.fit_arma_garch(r, "normal")
    mu, sig = M.filter_series(fit, r)
    assert mu.shape == (121,) and sig.shape == (121,)
    f_mu, f_sig = M.forecast_one_step(fit, r)
    assert mu[-1] == f_mu and sig[-1] == f_sig


def test_ljung_box_zero_autocorrelation():
    x = np.tile([1.0, 0.0, -1.0, 0.0], 25)  # lag-1 autocovariance exactly 0
    rep = M.ljung_box(x, [1])
    assert rep.statistics[0] < 1e-20
    assert rep.p_values[0] == 1.0


def test_ljung_box_hand_arithmetic():
    # T=100, single lag with rho_1 = 0.2: Q = T(T+2) rho^2 / (T-1)
    q = 100 * 102 * 0.04 / 99
    assert abs(q - 4.121212121212121) < 1e-12
    assert abs(stats.chi2.sf(q, 1) - 0.0424) < 5e-4


def test_ljung_box_against_statsmodels():
    from statsmodels.stats.diagnostic import acorr_ljungbox

    y = np.random.default_rng(7).normal(size=300)
    rep = M.ljung_box(y, [5, 10])
    sm = acorr_ljungbox(y, lags=[5, 10])
    np.testing.assert_allclose(rep.statistics, sm["lb_stat"].values, atol=1e-8)
    np.testing.assert_allclose(rep.p_values, sm["lb_pvalue"].values, atol=1e-8)


def test_ljung_box_report_rows():
    y = np.random.default_rng(9).normal(size=200)
    rep = M.ljung_box(y, [5, 10])
    rows = rep.rows()
    assert [h for h, _, _ in rows] == [5, 10]
    for _, q, p in rows:
        assert q >= 0.0 and 0.0 <= p <= 1.0


def test_parameter_recovery_on_simulated_path():
    r = simulate_arma_garch(3000, 0.0, 0.5, -0.3, 0.05, 0.1, 0.8, seed=42)
    fit = M.fit_arma_garch(r, "normal")
    truth = dict(phi0=0.0, phi1=0.5, theta1=-0.3, a0=0.05, a1=0.1, b1=0.8)
    est = dict(zip(truth, fit.mean_params + fit.vol_params))
    worst = max(abs(est[k] - truth[k]) for k in truth)
    assert worst < 0.1, est


def test_iid_normal_degenerates_gracefully():
    """On white noise the ARCH coefficient collapses and sigma levels at the
    sample scale (beta1 is unidentified when alpha1 is 0, so only alpha1
    and the fitted scale are pinned down)."""
    r = np.random.default_rng(5).normal(size=2000)
    fit = M.fit_arma_garch(r, "normal")
    assert fit.vol_params[1] < 0.05
    assert np.all(np.abs(fit.fitted_sigma - 1.0) < 0.1)


def test_fit_errors():
    with pytest.raises(M.FitError):
        M.fit_arma_garch(np.ones(200), "normal")
    with pytest.raises(M.FitError):
        M.fit_arma_garch(np.random.default_rng(0).normal(size=50), "normal")
    bad = np.random.default_rng(0).normal(size=200)
    bad[7] = np.nan
    with pytest.raises(M.FitError):
        M.fit_arma_garch(bad, "normal")
    from vinerisk.distributions import ParameterError

    with pytest.raises(ParameterError):
        M.fit_arma_garch(np.random.default_rng(0).normal(size=300), "cauchy")


def test_fit_validates_stationarity_invariants():
    fit = M.fit_arma_garch(
        simulate_arma_garch(800, 0.0, 0.3, 0.2, 0.1, 0.15, 0.7, seed=3),
        "normal")
    assert abs(fit.mean_params[1]) < 1.0
    assert abs(fit.mean_params[2]) < 1.0
    assert fit.vol_params[0] > 0.0
    assert fit.vol_params[1] >= 0.0 and fit.vol_params[2] >= 0.0
    assert fit.vol_params[1] + fit.vol_params[2] < 1.0
    assert np.all(fit.fitted_sigma > 0.0)


def test_copula_scale_roundtrip_and_refilter():
    r = simulate_arma_garch(1500, 0.0, 0.5, -0.3, 0.05, 0.1, 0.8, seed=42)
    fit = M.fit_arma_garch(r, "normal")
    z = M.standardized_residuals(fit, r)
    u = M.to_copula_scale(fit, z)
    assert np.all((u > 0.0) & (u < 1.0))
    z_back = M.from_copula_scale(fit, u, 0.0, 1.0)
    np.testing.assert_allclose(z_back, z, atol=1e-6)
    # return scale: mu + sigma * quantile
    r_back = M.from_copula_scale(fit, u, fit.fitted_mu, fit.fitted_sigma)
    np.testing.assert_allclose(r_back, r, atol=1e-5)
    mu_re, sig_re = M.filter_series(fit, r)
    assert np.array_equal(mu_re[:-1], fit.fitted_mu)
    assert np.array_equal(sig_re[:-1], fit.fitted_sigma)


def test_from_copula_scale_validates_domain():
    fit = _manual_fit((0.0, 0.0, 0.0), (1.0, 0.0, 0.0))
    with pytest.raises(ValueError):
        M.from_copula_scale(fit, np.array([0.0, 0.5]), 0.0, 1.0)
    with pytest.raises(ValueError):
        M.from_copula_scale(fit, np.array([0.5, 1.0]), 0.0, 1.0)
    with pytest.raises(ValueError):
        M.from_copula_scale(fit, np.array([0.5]), 0.0, -1.0)


def test_skewed_t_shape_recovery():
    r = simulate_skewt_garch(3000, nu=6.0, xi=0.7, seed=11)
    fit = M.fit_arma_garch(r, "skewed_student_t")
    assert isinstance(fit.innovation, SkewedStudentT)
    assert abs(fit.innovation.nu - 6.0) < 3.0
    assert abs(fit.innovation.xi - 0.7) < 0.15


def test_student_t_on_normal_data_hits_nu_cap():
    """Normal data pushes nu towards infinity; the fit caps it rather than
    wandering along the flat likelihood ridge."""
    r = simulate_arma_garch(3000, 0.0, 0.5, -0.3, 0.05, 0.1, 0.8, seed=42)
    fit = M.fit_arma_garch(r, "student_t")
    assert 2.0 < fit.innovation.nu <= 200.0


def test_refit_bit_identical():
    r = simulate_arma_garch(1000, 0.0, 0.4, -0.2, 0.05, 0.1, 0.8, seed=13)
    a = M.fit_arma_garch(r, "skewed_student_t")
    b = M.fit_arma_garch(r, "skewed_student_t")
    assert a.mean_params == b.mean_params
    assert a.vol_params == b.vol_params
    assert np.array_equal(a.fitted_mu, b.fitted_mu)
    assert np.array_equal(a.fitted_sigma, b.fitted_sigma)


def test_loglik_consistent_with_reported_filter():
    """Dual route: the stored loglik must equal the innovation log density
    evaluated through the stored mu/sigma paths."""
    r = simulate_arma_garch(700, 0.0, 0.3, -0.1, 0.08, 0.1, 0.8, seed=21)
    fit = M.fit_arma_garch(r, "normal")
    z = (r - fit.fitted_mu) / fit.fitted_sigma
    manual = float(np.sum(fit.innovation.logpdf(z) - np.log(fit.fitted_sigma)))
    assert abs(manual - fit.loglik) < 1e-8


def test_filter_series_extends_beyond_fit_window():
    r = simulate_arma_garch(600, 0.0, 0.3, -0.1, 0.08, 0.1, 0.8, seed=22)
    fit = M.fit_arma_garch(r[:400], "normal")
    mu, sig = M.filter_series(fit, r)
    assert mu.shape == (601,)
    np.testing.assert_array_equal(mu[:400], fit.fitted_mu)
    np.testing.assert_array_equal(sig[:400], fit.fitted_sigma)
    assert np.all(sig > 0.0)


def test_boundary_fit_warns_not_raises():
    """A persistence-saturating series produces a usable fit plus a warning
    rather than an exception."""
    rng = np.random.default_rng(17)
    trend = np.cumsum(rng.normal(size=300) * np.linspace(0.1, 3.0, 300))
    with pytest.warns(M.MarginFitWarning):
        fit = M.fit_arma_garch(np.diff(trend), "normal")
    assert fit.vol_params[1] + fit.vol_params[2] < 1.0

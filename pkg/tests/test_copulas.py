import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from vinerisk import copulas as cp
from vinerisk.distributions import ParameterError

# One representative parameter point per family/rotation used across the
# kernel checks below; the acceptance suite sweeps a denser grid.
CASES = [
    cp.PairCopula("independence", 0, ()),
    cp.PairCopula("gaussian", 0, (0.55,)),
    cp.PairCopula("gaussian", 0, (-0.8,)),
    cp.PairCopula("student_t", 0, (0.45, 4.5)),
    cp.PairCopula("student_t", 0, (-0.3, 12.0)),
    cp.PairCopula("clayton", 0, (2.2,)),
    cp.PairCopula("clayton", 90, (1.4,)),
    cp.PairCopula("clayton", 180, (0.7,)),
    cp.PairCopula("clayton", 270, (3.0,)),
    cp.PairCopula("gumbel", 0, (1.9,)),
    cp.PairCopula("gumbel", 90, (1.3,)),
    cp.PairCopula("gumbel", 180, (3.5,)),
    cp.PairCopula("frank", 0, (4.0,)),
    cp.PairCopula("frank", 0, (-6.0,)),
    cp.PairCopula("joe", 0, (2.4,)),
    cp.PairCopula("joe", 270, (1.8,)),
    cp.PairCopula("bb1", 0, (0.6, 1.7)),
    cp.PairCopula("bb1", 180, (1.2, 2.5)),
    cp.PairCopula("bb7", 0, (1.6, 1.1)),
    cp.PairCopula("bb7", 90, (2.0, 0.9)),
    cp.PairCopula("bb8", 0, (3.0, 0.7)),
    cp.PairCopula("bb8", 180, (2.0, 1.0)),
]

IDS = [f"{pc.family}-{pc.rotation}-{pc.params}" for pc in CASES]


@pytest.mark.parametrize("pc", CASES, ids=IDS)
def test_h_is_cdf_derivative(pc):
    """h(u1|u2) must equal dC(u1,u2)/du2 (central finite difference)."""
    rng = np.random.default_rng(42)
    u1, u2 = rng.uniform(0.03, 0.97, size=(2, 40))
    eps = 1e-5
    fd12 = (cp.pair_cdf(pc, u1, u2 + eps) - cp.pair_cdf(pc, u1, u2 - eps)) / (2 * eps)
    np.testing.assert_allclose(cp.h_function(pc, "1|2", u1, u2), fd12, atol=5e-6)
    fd21 = (cp.pair_cdf(pc, u1 + eps, u2) - cp.pair_cdf(pc, u1 - eps, u2)) / (2 * eps)
    np.testing.assert_allclose(cp.h_function(pc, "2|1", u2, u1), fd21, atol=5e-6)


@pytest.mark.parametrize("pc", CASES, ids=IDS)
def test_density_is_h_derivative(pc):
    rng = np.random.default_rng(43)
    u1, u2 = rng.uniform(0.03, 0.97, size=(2, 40))
    eps = 1e-5
    fd = (cp.h_function(pc, "1|2", u1 + eps, u2)
          - cp.h_function(pc, "1|2", u1 - eps, u2)) / (2 * eps)
    dens = cp.pair_density(pc, u1, u2)
    assert np.max(np.abs(fd - dens) / np.maximum(dens, 1.0)) < 5e-4


@pytest.mark.parametrize("pc", CASES, ids=IDS)
def test_h_inverse_roundtrip(pc):
    rng = np.random.default_rng(44)
    w = rng.uniform(0.001, 0.999, size=200)
    c = rng.uniform(0.001, 0.999, size=200)
    for direction in ("1|2", "2|1"):
        t = cp.h_inverse(pc, direction, w, c)
        back = cp.h_function(pc, direction, t, c)
        np.testing.assert_allclose(back, w, atol=1e-8)


@pytest.mark.parametrize("pc", CASES, ids=IDS)
def test_density_mass_and_boundaries(pc):
    nodes, wts = np.polynomial.legendre.leggauss(160)
    g = 0.5 * (nodes + 1.0)
    ww = 0.5 * wts
    uu, vv = np.meshgrid(g, g, indexing="ij")
    mass = float(np.einsum("i,j,ij->", ww, ww, cp.pair_density(pc, uu, vv)))
    assert abs(mass - 1.0) < 2e-2
    gu = np.linspace(0.05, 0.95, 7)
    np.testing.assert_allclose(cp.pair_cdf(pc, gu, 1.0 - 1e-12), gu, atol=5e-7)
    np.testing.assert_allclose(cp.pair_cdf(pc, 1.0 - 1e-12, gu), gu, atol=5e-7)
    assert np.max(cp.pair_cdf(pc, gu, 1e-12)) < 5e-7


@pytest.mark.parametrize("pc", CASES, ids=IDS)
def test_sampled_tau_matches_population_tau(pc):
    s = cp.sample_pair(pc, 20_000, 7)
    tau_emp = cp.empirical_kendall_tau(s)
    tau_pop = cp.kendall_tau(pc)
    assert abs(tau_emp - tau_pop) < 0.025


def test_cdf_against_density_quadrature():
    """Dual route: C(a,b) vs numerical integral of the density."""
    pc = cp.PairCopula("gaussian", 0, (0.65,))
    for a, b in [(0.3, 0.7), (0.05, 0.9), (0.5, 0.5)]:
        val, _ = integrate.dblquad(
            lambda y, x: float(cp.pair_density(pc, x, y)), 0, a, 0, b,
            epsabs=1e-10)
        assert abs(val - float(cp.pair_cdf(pc, a, b))) < 1e-7
    pt = cp.PairCopula("student_t", 0, (0.5, 5.0))
    val, _ = integrate.dblquad(
        lambda y, x: float(cp.pair_density(pt, x, y)), 0, 0.4, 0, 0.6,
        epsabs=1e-10)
    assert abs(val - float(cp.pair_cdf(pt, 0.4, 0.6))) < 1e-7


def test_nested_families_collapse():
    """BB1(theta->0), BB7(theta=1) are Clayton; BB8(delta=1) is Joe."""
    rng = np.random.default_rng(45)
    u, v = rng.uniform(0.05, 0.95, size=(2, 50))
    d_bb1 = cp.pair_density(cp.PairCopula("bb1", 0, (1.8, 1.0)), u, v)
    np.testing.assert_allclose(
        d_bb1, cp.pair_density(cp.PairCopula("clayton", 0, (1.8,)), u, v),
        atol=1e-9)
    d_bb7 = cp.pair_density(cp.PairCopula("bb7", 0, (1.0, 2.2)), u, v)
    np.testing.assert_allclose(
        d_bb7, cp.pair_density(cp.PairCopula("clayton", 0, (2.2,)), u, v),
        atol=1e-9)
    d_bb8 = cp.pair_density(cp.PairCopula("bb8", 0, (2.6, 1.0)), u, v)
    np.testing.assert_allclose(
        d_bb8, cp.pair_density(cp.PairCopula("joe", 0, (2.6,)), u, v),
        atol=1e-9)
    d_joe1 = cp.pair_density(cp.PairCopula("joe", 0, (1.0,)), u, v)
    np.testing.assert_allclose(d_joe1, 1.0, atol=1e-9)


def test_kendall_tau_closed_forms():
    assert abs(cp.kendall_tau(cp.PairCopula("clayton", 0, (2.0,))) - 0.5) < 1e-12
    assert abs(cp.kendall_tau(cp.PairCopula("gumbel", 0, (2.0,))) - 0.5) < 1e-12
    assert abs(cp.kendall_tau(cp.PairCopula("gaussian", 0, (0.5,)))
               - 1.0 / 3.0) < 1e-12
    assert cp.kendall_tau(cp.INDEPENDENCE) == 0.0
    # bb1 closed form: 1 - 2/(delta*(theta+2))
    t_num = cp.kendall_tau(cp.PairCopula("bb1", 0, (1.3, 2.1)))
    assert abs(t_num - (1.0 - 2.0 / (2.1 * (1.3 + 2.0)))) < 5e-3


def test_frank_tau_odd_in_parameter():
    plus = cp.kendall_tau(cp.PairCopula("frank", 0, (5.0,)))
    minus = cp.kendall_tau(cp.PairCopula("frank", 0, (-5.0,)))
    assert abs(plus + minus) < 1e-12


def test_rotation_tau_signs():
    """90/270 rotations flip the sign of tau; 180 preserves it."""
    base = cp.PairCopula("gumbel", 0, (2.2,))
    tau = cp.kendall_tau(base)
    assert tau > 0
    assert abs(cp.kendall_tau(cp.PairCopula("gumbel", 90, (2.2,))) + tau) < 1e-9
    assert abs(cp.kendall_tau(cp.PairCopula("gumbel", 270, (2.2,))) + tau) < 1e-9
    assert abs(cp.kendall_tau(cp.PairCopula("gumbel", 180, (2.2,))) - tau) < 1e-9


def test_rotation_density_relations():
    """Rotated densities are the base density at reflected arguments."""
    rng = np.random.default_rng(46)
    u, v = rng.uniform(0.05, 0.95, size=(2, 30))
    base = cp.PairCopula("clayton", 0, (1.7,))
    d180 = cp.pair_density(cp.PairCopula("clayton", 180, (1.7,)), u, v)
    np.testing.assert_allclose(d180, cp.pair_density(base, 1 - u, 1 - v),
                               atol=1e-10)
    d90 = cp.pair_density(cp.PairCopula("clayton", 90, (1.7,)), u, v)
    np.testing.assert_allclose(d90, cp.pair_density(base, 1 - u, v),
                               atol=1e-10)
    d270 = cp.pair_density(cp.PairCopula("clayton", 270, (1.7,)), u, v)
    np.testing.assert_allclose(d270, cp.pair_density(base, u, 1 - v),
                               atol=1e-10)


def test_parameter_validation():
    with pytest.raises(ParameterError):
        cp.PairCopula("gaussian", 0, (1.2,))
    with pytest.raises(ParameterError):
        cp.PairCopula("clayton", 0, (-0.5,))
    with pytest.raises(ParameterError):
        cp.PairCopula("gumbel", 0, (0.9,))
    with pytest.raises(ParameterError):
        cp.PairCopula("frank", 0, (0.0,))
    with pytest.raises(ParameterError):
        cp.PairCopula("student_t", 0, (0.5, 1.5))
    with pytest.raises(ParameterError):
        cp.PairCopula("gaussian", 45, (0.5,))
    with pytest.raises(ParameterError):
        cp.PairCopula("gaussian", 90, (0.5,))  # elliptical: no rotations
    with pytest.raises(ParameterError):
        cp.PairCopula("nope", 0, ())


def test_empirical_tau_against_scipy():
    from scipy.stats import kendalltau

    rng = np.random.default_rng(47)
    x, y = rng.normal(size=(2, 300))
    y = y + 0.8 * x
    ours = cp.empirical_kendall_tau(x, y)
    theirs, _ = kendalltau(x, y)
    assert abs(ours - theirs) < 1e-12


@pytest.mark.parametrize("family,params", [
    ("gaussian", (0.6,)),
    ("student_t", (0.55, 6.0)),
    ("clayton", (2.0,)),
    ("gumbel", (2.0,)),
    ("frank", (5.0,)),
    ("joe", (2.5,)),
    ("bb1", (0.8, 1.6)),
])
def test_fit_recovers_generating_family_tau(family, params):
    """fit_pair on synthetic data lands near the generator's tau."""
    true = cp.PairCopula(family, 0, params)
    s = cp.sample_pair(true, 4000, 123)
    res = cp.fit_pair(s)
    tau_true = cp.kendall_tau(true)
    tau_fit = cp.kendall_tau(res.copula)
    assert abs(tau_fit - tau_true) < 0.05
    # the selected model cannot be much worse than the generator in-sample
    ll_true = float(np.sum(cp.pair_log_density(true, s[:, 0], s[:, 1])))
    assert res.loglik >= ll_true - 1e-6 * s.shape[0]


def test_fit_pair_restricts_to_allowed_families():
    s = cp.sample_pair(cp.PairCopula("clayton", 0, (2.0,)), 2000, 5)
    res = cp.fit_pair(s, allowed_families=("gaussian", "frank"))
    assert res.copula.family in ("gaussian", "frank")


def test_fit_pair_negative_dependence_uses_rotation():
    base = cp.sample_pair(cp.PairCopula("clayton", 0, (2.0,)), 3000, 6)
    flipped = np.column_stack([1.0 - base[:, 0], base[:, 1]])
    res = cp.fit_pair(flipped, allowed_families=("clayton",))
    assert res.copula.rotation in (90, 270)
    assert cp.kendall_tau(res.copula) < -0.3


def test_fit_pair_near_independence():
    rng = np.random.default_rng(8)
    s = rng.uniform(size=(3000, 2))
    res = cp.fit_pair(s)
    assert abs(cp.kendall_tau(res.copula)) < 0.05


def test_aic_selection_consistency():
    s = cp.sample_pair(cp.PairCopula("gaussian", 0, (0.5,)), 2500, 9)
    res = cp.fit_pair(s)
    k = len(res.copula.params)
    assert abs(res.aic - (2.0 * k - 2.0 * res.loglik)) < 1e-9
    # the winner beats every single-family refit on AIC
    for family in cp.FAMILY_ORDER:
        single = cp.fit_pair(s, allowed_families=(family,))
        assert res.aic <= single.aic + 1e-9, family


@given(st.floats(-0.95, 0.95), st.floats(0.05, 0.95), st.floats(0.05, 0.95))
@settings(max_examples=120, deadline=None)
def test_gaussian_h_bounds_property(rho, t, c):
    pc = cp.PairCopula("gaussian", 0, (rho,))
    h = float(cp.h_function(pc, "1|2", t, c))
    assert 0.0 <= h <= 1.0


@given(st.sampled_from(["clayton", "gumbel", "joe", "frank"]),
       st.floats(0.01, 0.99), st.floats(0.05, 0.95), st.floats(0.05, 0.95))
@settings(max_examples=120, deadline=None)
def test_h_inverse_identity_property(family, w, c, raw):
    params = {"clayton": (0.5 + 3 * raw,), "gumbel": (1.1 + 2 * raw,),
              "joe": (1.1 + 2 * raw,), "frank": (6 * raw - 3 + 0.5,)}[family]
    pc = cp.PairCopula(family, 0, params)
    t = float(cp.h_inverse(pc, "1|2", w, c))
    assert abs(float(cp.h_function(pc, "1|2", t, c)) - w) < 1e-7


def test_cdf_monotone_in_each_argument():
    grid = np.linspace(0.05, 0.95, 10)
    for pc in CASES:
        along_u = cp.pair_cdf(pc, grid, 0.6)
        along_v = cp.pair_cdf(pc, 0.6, grid)
        assert np.all(np.diff(along_u) >= -1e-12), pc
        assert np.all(np.diff(along_v) >= -1e-12), pc

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from fracdisloc.kernels import (HorizonKernel, Q_cell_average, Q_eval, Q_l1_norm, bound_audit,
                                gamma_riesz, kernel_stencil, make_profile, q_radial)


def _gamma_mp(a):
    a = mpmath.mpf(a)
    return float(mpmath.pi * 2 ** a * mpmath.gamma(a / 2) / mpmath.gamma(1 - a / 2))


def test_gamma_at_one():
    assert gamma_riesz(1.0) == pytest.approx(2 * np.pi, rel=1e-15)


def test_gamma_small_alpha_limit():
    a = 1e-6
    assert a * gamma_riesz(a) == pytest.approx(2 * np.pi, rel=1e-4)


@pytest.mark.parametrize("a", [0.05, 0.5, 1.3, 1.9])
def test_gamma_vs_mpmath(a):
    assert gamma_riesz(a) == pytest.approx(_gamma_mp(a), rel=1e-13)


def test_gamma_half_value():
    assert gamma_riesz(0.5) == pytest.approx(13.1450, abs=5e-5)


@pytest.mark.parametrize("a", [0.0, 2.0, -1.0])
def test_gamma_domain(a):
    with pytest.raises(ValueError):
        gamma_riesz(a)


def test_q_outside_support_is_zero():
    k = HorizonKernel(0.3, 0.8)
    assert q_radial(k, 0.8) == 0.0 and q_radial(k, 2.0) == 0.0
    assert k.q(1.0) == 0.0 and k.q(1.5) == 0.0


@pytest.mark.parametrize("s", [-0.5, 0.1, 0.9])
def test_q_lower_bound_on_flat_part(s):
    # integrating only over [t, rho/2] where wbar = 1
    k = HorizonKernel(s, 1.0)
    for t in np.linspace(0.01, 0.5, 12):
        assert q_radial(k, t) >= 1.0 - (2 * t) ** (1 + s) - 1e-14


def test_q_radial_vs_trapezoid():
    s, t = 0.9, 0.25
    k = HorizonKernel(s, 1.0)
    u = np.linspace(t, 1.0, 1_000_001)
    f = make_profile()(u) * u ** (-2 - s)
    oracle = (1 + s) * t ** (1 + s) * np.trapezoid(f, u)
    val = q_radial(k, t)
    assert 0.0 < val <= 1.0
    assert val == pytest.approx(oracle, abs=1e-8)


@pytest.mark.parametrize("s", [-0.8, 0.0, 0.5, 0.95])
def test_q_cache_matches_quadrature(s):
    k = HorizonKernel(s, 0.6)
    t = np.linspace(0.0, 1.1, 45)
    np.testing.assert_allclose(k.q(t), [q_radial(k, x * k.rho) for x in t], atol=1e-9)


def test_Q_vanishes_outside_support():
    k = HorizonKernel.for_alpha(0.3, 0.5)
    x = np.array([[0.5, 0.0], [0.4, 0.31], [3.0, -2.0]])
    np.testing.assert_array_equal(Q_eval(k, x), 0.0)


@pytest.mark.parametrize("alpha, rho", [(0.05, 0.1), (0.3, 0.5), (0.8, 2.0)])
def test_Q_bound(alpha, rho):
    rep = bound_audit(HorizonKernel.for_alpha(alpha, rho), samples=2000, rng=7)
    assert rep["ok"]
    assert rep["max_ratio"] <= 1.0 + 1e-10


def test_Q_diagnostic_attains_bound():
    k = HorizonKernel.for_alpha(0.4, 1.0, "indicator-diagnostic")
    r = np.geomspace(1e-3, 1e3, 50)
    ratio = k.Q(r) * k.gamma * r ** (2 - 0.4)
    np.testing.assert_allclose(ratio, 1.0, rtol=1e-14)


def test_Q_monotone(rng):
    k = HorizonKernel.for_alpha(0.2, 1.0)
    r = np.sort(rng.uniform(1e-4, 1.2, 1000))
    Q = k.Q(r)
    # absolute slack: the tabulated band carries ~1e-24 interpolation noise where q ~ 0
    assert np.all(np.diff(Q) <= 1e-15 * Q.max())


def test_Q_scaling():
    # Q_rho(lam x) = lam^(-1-s) Q_{rho/lam}(x)
    s, lam = 0.7, 2.5
    k1, k2 = HorizonKernel(s, 1.0), HorizonKernel(s, 1.0 / lam)
    r = np.linspace(0.01, 0.39, 30)
    np.testing.assert_allclose(k1.Q(lam * r), lam ** (-1 - s) * k2.Q(r), rtol=1e-12)


def _l1_fubini(alpha, rho):
    # ||Q||_1 = 2 pi rho^(1-s) (1+s) / (2 gamma) int_0^1 wbar(u) u^(-s) du, s = 1 - alpha
    s = 1 - alpha
    f = lambda u: float(make_profile()(u))
    # algebraic endpoint weight u^(-s) handled exactly by QAWS
    I = integrate.quad(f, 0.0, 0.5, weight="alg", wvar=(-s, 0.0))[0]
    I += integrate.quad(lambda u: f(u) * u ** (-s), 0.5, 1.0, epsrel=1e-13)[0]
    return 2 * np.pi * rho ** (1 - s) * (1 + s) / 2 / gamma_riesz(alpha) * I


@pytest.mark.parametrize("alpha, rho", [(0.1, 0.5), (0.5, 1.0), (0.9, 3.0)])
def test_l1_norm_vs_fubini(alpha, rho):
    k = HorizonKernel.for_alpha(alpha, rho)
    assert Q_l1_norm(k) == pytest.approx(_l1_fubini(alpha, rho), rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.02, 0.98), st.floats(0.01, 10.0))
def test_l1_norm_bound(alpha, rho):
    k = HorizonKernel.for_alpha(alpha, rho)
    assert Q_l1_norm(k) <= 2 * np.pi * rho ** alpha / (alpha * gamma_riesz(alpha)) * (1 + 1e-8)


def test_l1_norm_bound_near_alpha_one():
    assert Q_l1_norm(HorizonKernel.for_alpha(0.999, 1.0)) <= 1.0


@pytest.mark.parametrize("alpha", [0.1, 0.6])
def test_l1_norm_scaling(alpha):
    a = Q_l1_norm(HorizonKernel.for_alpha(alpha, 1.0))
    b = Q_l1_norm(HorizonKernel.for_alpha(alpha, 0.5))
    assert b / a == pytest.approx(2 ** -alpha, rel=1e-6)


def test_cell_average_far_cell_second_order():
    k = HorizonKernel.for_alpha(0.3, 1.0)
    c = np.array([0.3, 0.2])
    exact = float(Q_eval(k, c))
    errs = [abs(Q_cell_average(k, c, h) - exact) for h in (0.02, 0.01)]
    assert errs[1] < errs[0]
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def test_cell_average_origin_disc_closed_form():
    a, h = 0.3, 0.05
    k = HorizonKernel.for_alpha(a, 1.0, "indicator-diagnostic")
    r_eq = h / np.sqrt(np.pi)
    # mean of |x|^(a-2)/gamma over the disc of radius r_eq
    expected = 2 * np.pi * r_eq ** a / a / gamma_riesz(a) / (np.pi * r_eq ** 2)
    assert Q_cell_average(k, (0.0, 0.0), h, method="disc") == pytest.approx(expected, rel=1e-14)


def test_cell_average_outside_support():
    k = HorizonKernel.for_alpha(0.3, 0.5)
    assert Q_cell_average(k, (0.6, 0.0), 0.1) == 0.0


def test_stencil_mass_matches_l1():
    k = HorizonKernel.for_alpha(0.4, 0.5)
    h = 0.02
    st_, m = kernel_stencil(k, h)
    assert st_.sum() * h ** 2 == pytest.approx(Q_l1_norm(k), rel=1e-9)
    np.testing.assert_allclose(st_, st_[::-1, ::-1], rtol=1e-13)


def test_kernel_rejects_bad_parameters():
    with pytest.raises(ValueError):
        HorizonKernel(1.2, 1.0)
    with pytest.raises(ValueError):
        HorizonKernel.for_alpha(0.5, -1.0)
    with pytest.raises(ValueError):
        make_profile("box")

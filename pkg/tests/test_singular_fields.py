import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracdisloc.elastic_core import ElasticTensor, make_isotropic
from fracdisloc.singular_fields import (divergence_residual, eta_eval, loop_circulation,
                                        psi_density, solve_eta, solve_eta_collocation,
                                        zeta_field, zeta_profile, zeta_xy)

ANISO = ElasticTensor.from_voigt([[3.0, 1.0, 0.3], [1.0, 2.0, 0.2], [0.3, 0.2, 1.2]])
E1, E2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])


@pytest.fixture(scope="module")
def eta1(iso):
    return solve_eta(iso, E1)


def test_zeta_closed_form():
    Z = zeta_field(E2, (1.0, 0.0))
    expected = np.zeros((2, 2))
    expected[1, 1] = 1 / (2 * np.pi)
    np.testing.assert_allclose(Z, expected, atol=1e-17)


def test_zeta_circulation():
    c = loop_circulation(zeta_xy(np.array([0.3, -1.2])), radius=1.0, n=10_000)
    np.testing.assert_allclose(c, [0.3, -1.2], atol=1e-8)


@settings(max_examples=40)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0.01, 10), st.floats(0, 2 * np.pi))
def test_zeta_magnitude(a, b, r, th):
    xi = np.array([a, b])
    Z = zeta_field(xi, (r * np.cos(th), r * np.sin(th)))
    assert np.linalg.norm(Z) == pytest.approx(np.linalg.norm(xi) / (2 * np.pi * r), rel=1e-12,
                                              abs=1e-300)


def test_zeta_rejects_origin():
    with pytest.raises(ValueError):
        zeta_field(E1, (0.0, 0.0))


def test_eta_zero_burgers(iso):
    prof = solve_eta(iso, [0.0, 0.0])
    np.testing.assert_array_equal(prof.values, 0.0)


@pytest.mark.parametrize("C", [make_isotropic(1.0, 1.0), make_isotropic(3.0, 0.5), ANISO],
                         ids=["iso11", "iso3", "aniso"])
@pytest.mark.parametrize("xi", [E1, np.array([0.3, 0.7])])
def test_eta_vs_collocation(C, xi):
    prof = solve_eta(C, xi)
    th, G, a, c = solve_eta_collocation(C, xi)
    np.testing.assert_allclose(prof.eval(th), G, atol=1e-7)
    np.testing.assert_allclose(prof.log_coeff, a, atol=1e-7)


def test_eta_linear_in_burgers():
    a, b = 0.7, -1.9
    P = solve_eta(ANISO, a * E1 + b * E2)
    P1, P2 = solve_eta(ANISO, E1), solve_eta(ANISO, E2)
    np.testing.assert_allclose(P.values, a * P1.values + b * P2.values, atol=1e-10)


def test_eta_homogeneity_and_periodicity(eta1, rng):
    x = rng.uniform(-2, 2, (50, 2))
    np.testing.assert_allclose(eta_eval(eta1, 2 * x), 0.5 * eta_eval(eta1, x), rtol=1e-13)
    th = rng.uniform(0, 2 * np.pi, 20)
    np.testing.assert_allclose(eta1.eval(th + 2 * np.pi), eta1.eval(th), atol=1e-13)


def test_eta_bound(eta1, rng):
    x = rng.uniform(-3, 3, (200, 2))
    r = np.hypot(x[:, 0], x[:, 1])
    assert np.all(np.linalg.norm(eta_eval(eta1, x), axis=(1, 2)) <= eta1.K / r * (1 + 1e-12))


@pytest.mark.parametrize("center, radius, expected", [
    ((0.0, 0.0), 1.0, E1), ((0.2, -0.1), 0.5, E1), ((3.0, 0.0), 1.0, 0 * E1)])
def test_eta_circulation(eta1, center, radius, expected):
    np.testing.assert_allclose(loop_circulation(eta1.eval_xy, center, radius), expected,
                               atol=1e-7)


def test_eta_weak_divergence(eta1):
    tests = [((1.5, 0.5), 1.0, E1), ((0.0, 0.0), 1.0, E2), ((0.3, 0.1), 2.0, np.ones(2)),
             ((-2.0, 0.0), 1.5, np.array([0.3, -1.0]))]
    assert max(divergence_residual(eta1, tests)) < 1e-6


def test_zeta_is_not_equilibrated(iso):
    # the explicit field is not in equilibrium away from the core
    z = zeta_profile(iso, E1)
    tests = [((1.5, 0.5), 1.0, E1), ((1.5, 0.5), 1.0, E2), ((0.0, 1.5), 1.0, E2)]
    assert max(divergence_residual(z, tests)) > 1e-2


def test_psi_zero(iso):
    assert psi_density(solve_eta(iso, [0.0, 0.0])) == 0.0


def test_psi_quadratic(iso):
    assert psi_density(solve_eta(iso, 2 * E1)) == pytest.approx(
        4 * psi_density(solve_eta(iso, E1)), rel=1e-10)


def test_psi_quadrature_orders(eta1):
    assert psi_density(eta1, 4096) == pytest.approx(psi_density(eta1, 1024), abs=1e-9)


@pytest.mark.parametrize("lam, mu", [(1.0, 1.0), (2.0, 0.5), (0.0, 1.0)])
def test_psi_isotropic_edge_prefactor(lam, mu):
    # classical edge-dislocation prefactor mu / (4 pi (1 - nu)), nu = lam / (2 (lam + mu))
    nu = lam / (2 * (lam + mu))
    expected = mu / (4 * np.pi * (1 - nu))
    assert psi_density(solve_eta(make_isotropic(lam, mu), E1)) == pytest.approx(expected,
                                                                                rel=1e-12)


def test_psi_positive_on_circle():
    vals = [psi_density(solve_eta(ANISO, [np.cos(t), np.sin(t)]))
            for t in np.linspace(0, np.pi, 32, endpoint=False)]
    assert min(vals) > 0


def test_eta_energy_below_zeta(iso):
    # eta minimises the angular energy among curl carriers with the same xi
    z = zeta_profile(iso, E1)
    assert psi_density(solve_eta(iso, E1)) < psi_density(z)


def test_profile_exports(eta1, tmp_path):
    eta1.to_csv(tmp_path / "p.csv")
    eta1.to_json(tmp_path / "p.json")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "theta,G11,G12,G21,G22" and len(lines) == 1 + eta1.theta.size
    meta = json.loads((tmp_path / "p.json").read_text())
    assert meta["xi"] == [1.0, 0.0] and meta["n_modes"] == eta1.n_modes

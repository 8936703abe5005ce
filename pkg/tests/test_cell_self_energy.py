import numpy as np
import pytest

from fracdisloc.cell_self_energy import (BurgersLattice, CellProblem, EtaPotential,
                                         assemble_base_field, cell_convergence_study,
                                         lemma47_check, limit_gap, minimize_cell, phi_bruteforce,
                                         psi_quadratic_form, relax_phi, sandwich_check)
from fracdisloc.elastic_core import make_isotropic
from fracdisloc.riesz_transform import riesz_horizon_point, scaling_identity_check
from fracdisloc.singular_fields import psi_density, solve_eta, zeta_profile

E1 = np.array([1.0, 0.0])


@pytest.fixture(scope="module")
def sol01():
    return minimize_cell(CellProblem(E1, 0.1, 0.5, 64))


# -- base field -------------------------------------------------------------------

def test_base_field_zero_burgers():
    B = assemble_base_field(CellProblem([0.0, 0.0], 0.2, 0.5, 64))
    np.testing.assert_array_equal(B.values, 0.0)


def test_base_field_pointwise_vs_quadrature():
    p = CellProblem(E1, 0.2, 0.5, 64)
    pot, prof, K = p.potential(), p.profile(), p.kernel
    ang = np.linspace(0, 2 * np.pi, 8, endpoint=False)
    probes = [(r * np.cos(t), r * np.sin(t)) for r in (0.15, 0.4) for t in ang]
    for x in probes:
        ref = riesz_horizon_point(prof.eval_xy, K, x, singular=((0.0, 0.0), 1.0))
        np.testing.assert_allclose(pot.eval_xy(*x), ref, atol=1e-4)


def test_base_field_cell_averages():
    p = CellProblem(E1, 0.2, 0.5, 64)
    B, pot = assemble_base_field(p), p.potential()
    X, Y = B.centers()
    g, w = np.polynomial.legendre.leggauss(6)
    for j, i in [(40, 40), (50, 20), (10, 30), (32, 50)]:
        px, py = np.meshgrid(X[j, i] + 0.5 * B.h * g, Y[j, i] + 0.5 * B.h * g)
        avg = np.einsum("a,b,abij->ij", w, w, pot.eval_xy(px, py)) / 4
        np.testing.assert_allclose(B.values[j, i], avg, atol=1e-7)


def test_base_field_scaling_probe():
    p = CellProblem(E1, 0.2, 0.5, 64)
    res = scaling_identity_check(p.profile(), 0.2, 0.5, (0.25, 0.1))
    assert max(res.values()) < 1e-5


# -- minimisation -------------------------------------------------------------------

def test_minimize_zero_burgers():
    s = minimize_cell(CellProblem([0.0, 0.0], 0.2, 0.5, 64))
    assert s.psi_hat == 0.0
    np.testing.assert_array_equal(s.corrector.values, 0.0)


def test_minimize_quadratic(sol01):
    s2 = minimize_cell(CellProblem(2 * E1, 0.1, 0.5, 64))
    assert s2.psi_hat == pytest.approx(4 * sol01.psi_hat, rel=1e-8)


def test_minimize_below_base_energy(sol01):
    assert 0 < sol01.psi_hat < sol01.upper
    assert sol01.gap > 0


def test_upper_matches_parseval(sol01):
    # staircase quadrature of the base energy vs the Parseval disc energy
    assert sol01.upper == pytest.approx(sol01.upper_disc, rel=1e-3)


def test_competitors_above_minimum(iso, sol01):
    # beta = zeta and beta = eta are admissible; their potentials' energies bound Psi
    for prof in (zeta_profile(iso, E1), solve_eta(iso, E1)):
        assert 0.5 * EtaPotential(prof, 0.1, 0.5).disc_energy() >= sol01.psi_hat


def test_grid_refinement_cauchy():
    vals = [minimize_cell(CellProblem(E1, 0.1, 0.5, n)).psi_hat for n in (64, 128, 256)]
    assert abs(vals[2] - vals[1]) < abs(vals[1] - vals[0])


def test_sandwich_zero():
    assert sandwich_check(CellProblem([0.0, 0.0], 0.2, 0.5, 64))["gap"] == 0.0


def test_sandwich_gap_nonnegative_and_bounded(iso):
    ref = limit_gap(iso, E1, n=64)
    for a in (0.3, 0.1):
        rep = sandwich_check(CellProblem(E1, a, 0.5, 64))
        assert rep["gap"] >= -1e-6
        assert rep["gap_ratio"] <= 1.05 * ref


def test_limit_gap_scale_free(iso):
    assert limit_gap(iso, E1, n=64) == pytest.approx(limit_gap(iso, E1, n=128), rel=5e-3)


def test_cell_problem_validation():
    with pytest.raises(ValueError):
        CellProblem(E1, 0.6, 0.5)
    with pytest.raises(ValueError):
        CellProblem(E1, 0.1, 1.5)
    with pytest.raises(ValueError):
        CellProblem(E1, 0.1, 0.5, n=63)


# -- limits in alpha and rho ------------------------------------------------------------

def _log_linear_limit(rows):
    # log(2 alpha Psi) is affine in alpha up to O(alpha^2): Richardson on the log
    (a0, v0), (a1, v1) = [(r["alpha"], np.log(r["two_alpha_psi"])) for r in rows]
    return float(np.exp(v1 + (v1 - v0) * a1 / (a0 - a1)))


@pytest.fixture(scope="module")
def rho_sweep():
    return {rho: cell_convergence_study(E1, rho, [0.1, 0.05], n=64) for rho in (0.3, 0.5, 0.8)}


def test_horizon_scaling_exact(rho_sweep):
    # Psi(alpha, rho) = rho^(2 alpha) Psi(alpha, 1)
    for j in range(2):
        vals = [rows[j]["psi_hat"] / rho ** (2 * rows[j]["alpha"])
                for rho, rows in rho_sweep.items()]
        np.testing.assert_allclose(vals, vals[0], rtol=2e-3)


def test_limit_independent_of_rho(rho_sweep):
    lims = [_log_linear_limit(rows) for rows in rho_sweep.values()]
    assert max(lims) / min(lims) - 1 < 0.02


def test_limit_with_shrinking_horizon(rho_sweep):
    rows = cell_convergence_study(E1, None, [0.1, 0.05], n=64, rho_of_alpha=lambda a: a)
    # remove the exact horizon factor rho_alpha^(2 alpha) before extrapolating
    scaled = [dict(r, two_alpha_psi=r["two_alpha_psi"] / r["rho"] ** (2 * r["alpha"]) * 0.5 **
                   (2 * r["alpha"])) for r in rows]
    assert _log_linear_limit(scaled) == pytest.approx(_log_linear_limit(rho_sweep[0.5]), rel=0.02)


def test_extrapolated_limit_near_psi(rho_sweep):
    psi = rho_sweep[0.5][0]["psi_limit"]
    assert _log_linear_limit(rho_sweep[0.5]) == pytest.approx(psi, rel=0.02)


def test_psi_lower_bound_tail(rho_sweep):
    # 2 alpha Psi >= c |xi|^2 with c > 0 along the tail
    assert min(r["two_alpha_psi"] for rows in rho_sweep.values() for r in rows) > 0.05


# -- horizon shift ------------------------------------------------------------------------

@pytest.fixture(scope="module")
def lemma_rows():
    om = np.linspace(0, 2 * np.pi, 4, endpoint=False)
    return lemma47_check(E1, [0.2, 0.1, 0.05], [1.5, 10.0], om)


def test_horizon_shift_linear_in_alpha(lemma_rows):
    worst = {a: max(r["delta"] for r in lemma_rows if r["alpha"] == a) for a in (0.2, 0.1, 0.05)}
    assert worst[0.1] / worst[0.2] <= 0.5 * 1.3
    assert worst[0.05] / worst[0.1] <= 0.5 * 1.3


def test_horizon_shift_scales_with_burgers(lemma_rows):
    rows3 = lemma47_check(3 * E1, [0.2], [1.5], [0.7])
    ref = lemma47_check(E1, [0.2], [1.5], [0.7])
    assert rows3[0]["delta"] == pytest.approx(3 * ref[0]["delta"], rel=1e-12)


def test_horizon_shift_vanishes_without_cutoff():
    rows = lemma47_check(E1, [0.2], [1.5, 10.0], [0.0, 1.0], cutoff="indicator-diagnostic")
    assert max(r["delta"] for r in rows) == 0.0


# -- lattice relaxation --------------------------------------------------------------------

@pytest.fixture(scope="module")
def tri_lattice():
    return BurgersLattice([1.0, 0.0], [0.5, np.sqrt(3) / 2])


@pytest.fixture(scope="module")
def P(iso):
    return psi_quadratic_form(iso)


def test_psi_form_matches_density(iso, P):
    xi = np.array([0.3, -0.8])
    assert xi @ P @ xi == pytest.approx(psi_density(solve_eta(iso, xi)), rel=1e-10)


def test_phi_zero(tri_lattice, P):
    r = relax_phi(tri_lattice, P, [0.0, 0.0])
    assert r["phi"] == 0.0 and r["decomposition"] == []


def test_phi_below_psi_on_generators(tri_lattice, P):
    b1 = tri_lattice.b1
    r = relax_phi(tri_lattice, P, b1)
    assert r["phi"] <= b1 @ P @ b1 + 1e-15


def test_phi_homogeneous(tri_lattice, P, rng):
    for xi in rng.normal(size=(10, 2)):
        assert relax_phi(tri_lattice, P, 2 * xi)["phi"] == pytest.approx(
            2 * relax_phi(tri_lattice, P, xi)["phi"], rel=1e-10)


@pytest.mark.parametrize("form", ["iso", "aniso"])
def test_phi_vs_bruteforce(tri_lattice, P, form, rng):
    Q = P if form == "iso" else np.array([[1.0, 0.3], [0.3, 0.2]])
    for xi in rng.normal(size=(20, 2)) * 2:
        r = relax_phi(tri_lattice, Q, xi)
        assert r["phi"] == pytest.approx(phi_bruteforce(tri_lattice, Q, xi), abs=1e-9)
        lam = np.array([l for l, _ in r["decomposition"]])
        vecs = np.array([v for _, v in r["decomposition"]])
        np.testing.assert_allclose(lam @ vecs, xi, atol=1e-10)
        assert np.all(lam > 0) and r["M"] <= 2


def test_phi_midpoint_convex(tri_lattice, P, rng):
    for a, b in rng.normal(size=(200, 2, 2)):
        lhs = relax_phi(tri_lattice, P, 0.5 * (a + b))["phi"]
        rhs = 0.5 * (relax_phi(tri_lattice, P, a)["phi"] + relax_phi(tri_lattice, P, b)["phi"])
        assert lhs <= rhs + 1e-9


def test_phi_decomposition_on_lattice(tri_lattice, P):
    r = relax_phi(tri_lattice, P, [0.2, 1.3])
    assert all(tri_lattice.contains(v) for _, v in r["decomposition"])


def test_lattice_validation():
    with pytest.raises(ValueError):
        BurgersLattice([2.0, 0.0], [0.0, 1.0])
    with pytest.raises(ValueError):
        BurgersLattice([1.0, 0.0], [1.0, 0.0])

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fracdisloc.elastic_core import (ElasticTensor, apply_rotation_J, best_skew, check_axioms,
                                     ddot, make_isotropic, skew_part, sym_part)
from fracdisloc.gridfield import GridField

J = np.array([[0.0, -1.0], [1.0, 0.0]])
I = np.eye(2)

mats = arrays(np.float64, (2, 2), elements=st.floats(-1e3, 1e3))


@pytest.mark.parametrize("A, expected", [
    ([[0, 1], [0, 0]], [[0, 0.5], [0.5, 0]]),
    (I, I),
    (J, np.zeros((2, 2))),
])
def test_sym_part(A, expected):
    np.testing.assert_array_equal(sym_part(np.array(A, dtype=float)), expected)


@pytest.mark.parametrize("A, expected", [
    (I, J),
    (J, -I),
    ([[1, 0], [0, 0]], [[0, -1], [0, 0]]),
])
def test_apply_rotation_J(A, expected):
    np.testing.assert_array_equal(apply_rotation_J(np.array(A, dtype=float)), expected)


@given(mats)
def test_sym_skew_orthogonal(A):
    tol = 1e-12 * max(1.0, np.abs(A).max()) ** 2
    assert abs(ddot(sym_part(A), skew_part(A))) <= tol


def test_isotropic_identity_on_sym():
    C = make_isotropic(0.0, 0.5)
    F = np.array([[1.0, 2.0], [-3.0, 0.5]])
    np.testing.assert_allclose(C.apply(F), sym_part(F), atol=1e-15)
    assert C.nu1 == pytest.approx(1.0) and C.nu2 == pytest.approx(1.0)


def test_isotropic_lame_value():
    # C I = 2 mu I + lam tr(I) I = 4 I, so C I : I = 8
    C = make_isotropic(1.0, 1.0)
    np.testing.assert_allclose(C.apply(I), 4 * I, atol=1e-14)
    assert C.energy_density(I) == pytest.approx(8.0, abs=1e-13)


def test_isotropic_rejects_non_elliptic():
    with pytest.raises(ValueError):
        make_isotropic(-2.0, 1.0)


def test_axioms_isotropic():
    # on sym 2x2 the Lame operator has eigenvalues 2 mu (deviatoric) and 2 mu + 2 lam
    rep = check_axioms(make_isotropic(1.0, 1.0), samples=1000)
    assert rep.ok
    assert rep.nu1 == pytest.approx(2.0, abs=1e-13)
    assert rep.nu2 == pytest.approx(4.0, abs=1e-13)


def test_axioms_zero_tensor_fails_ellipticity():
    rep = check_axioms(ElasticTensor(np.zeros((3, 3))))
    assert not rep.ok and "C3" in rep.failed and rep.nu1 == 0.0


def test_axioms_asymmetric_fails_major_symmetry():
    M = make_isotropic(1.0, 1.0).matrix.copy()
    M[0, 1] += 0.3
    rep = check_axioms(ElasticTensor(M))
    assert "C2" in rep.failed


@settings(max_examples=50)
@given(mats)
def test_apply_reads_only_sym_part(F):
    C = make_isotropic(1.3, 0.7)
    np.testing.assert_array_equal(C.apply(F), C.apply(sym_part(F)))


def test_quadratic_form_bounds(rng):
    C = make_isotropic(0.4, 1.1)
    F = rng.standard_normal((1000, 2, 2))
    s = ddot(sym_part(F), sym_part(F))
    q = C.energy_density(F)
    assert np.all(q >= C.nu1 * s * (1 - 1e-12))
    assert np.all(q <= C.nu2 * s * (1 + 1e-12))


def test_voigt_round_trip():
    C = make_isotropic(1.0, 2.0)
    D = ElasticTensor.from_config(C.to_config())
    np.testing.assert_allclose(D.matrix, C.matrix, atol=1e-14)


def _const(A, n=8):
    return GridField((0.0, 0.0), 0.1, np.broadcast_to(A, (n, n, 2, 2)).copy())


@pytest.mark.parametrize("A, S", [(J, J), (I, np.zeros((2, 2)))])
def test_best_skew_exact(A, S):
    np.testing.assert_allclose(best_skew(_const(A)), S, atol=1e-15)


def test_best_skew_symmetric_noise(rng):
    noise = rng.standard_normal((16, 16, 2, 2))
    vals = J + sym_part(noise)
    np.testing.assert_allclose(best_skew(GridField((0, 0), 0.1, vals)), J, atol=1e-14)

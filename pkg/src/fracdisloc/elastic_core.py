"""2x2 matrix algebra, the rotation J and plane elasticity tensors.

Matrices are numpy arrays whose last two axes have shape (2, 2); every
function broadcasts over leading axes.
"""

from dataclasses import dataclass, field

import numpy as np

J = np.array([[0.0, -1.0], [1.0, 0.0]])

_S2 = np.sqrt(2.0)
# orthonormal basis of symmetric 2x2 matrices
SYM_BASIS = np.array([
    [[1.0, 0.0], [0.0, 0.0]],
    [[0.0, 0.0], [0.0, 1.0]],
    [[0.0, 1.0 / _S2], [1.0 / _S2, 0.0]],
])


def sym_part(A):
    A = np.asarray(A, dtype=float)
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def skew_part(A):
    A = np.asarray(A, dtype=float)
    return 0.5 * (A - np.swapaxes(A, -1, -2))


def apply_rotation_J(A):
    """Right multiplication ``A @ J``."""
    return np.asarray(A, dtype=float) @ J


def ddot(A, B):
    """Frobenius product ``A : B`` over the last two axes."""
    return np.einsum("...ij,...ij->...", A, B)


def to_sym_coords(F):
    F = np.asarray(F, dtype=float)
    return np.stack([F[..., 0, 0], F[..., 1, 1],
                     (F[..., 0, 1] + F[..., 1, 0]) / _S2], axis=-1)


def from_sym_coords(c):
    return np.einsum("...k,kij->...ij", c, SYM_BASIS)


@dataclass(frozen=True)
class ElasticTensor:
    """Elasticity tensor stored as a 3x3 matrix on the symmetric subspace.

    ``apply`` reads only the symmetric part of its argument, so the map
    F -> C F factors through F^sym by construction.  ``nu1``/``nu2`` are the
    extreme eigenvalues of the quadratic form on symmetric matrices.
    """

    matrix: np.ndarray
    nu1: float = field(init=False)
    nu2: float = field(init=False)

    def __post_init__(self):
        M = np.array(self.matrix, dtype=float)
        if M.shape != (3, 3):
            raise ValueError("elasticity matrix must be 3x3")
        M.setflags(write=False)
        object.__setattr__(self, "matrix", M)
        ev = np.linalg.eigvalsh(0.5 * (M + M.T))
        object.__setattr__(self, "nu1", float(ev[0]))
        object.__setattr__(self, "nu2", float(ev[-1]))

    def apply(self, F):
        return from_sym_coords(to_sym_coords(F) @ self.matrix.T)

    def energy_density(self, F):
        """``C F : F``."""
        c = to_sym_coords(F)
        return np.einsum("...i,ij,...j->...", c, self.matrix, c)

    def as_flat_operator(self):
        """4x4 matrix acting on row-major flattened F (F11, F12, F21, F22)."""
        E = np.eye(4).reshape(4, 2, 2)
        return self.apply(E).reshape(4, 4).T

    @classmethod
    def from_voigt(cls, voigt):
        """Voigt matrix in (11, 22, 12) with engineering shear strain."""
        V = np.asarray(voigt, dtype=float).reshape(3, 3)
        D = np.diag([1.0, 1.0, _S2])
        return cls(D @ V @ D)

    def to_voigt(self):
        Dinv = np.diag([1.0, 1.0, 1.0 / _S2])
        return Dinv @ self.matrix @ Dinv

    @classmethod
    def from_config(cls, cfg):
        kind = cfg.get("type")
        if kind == "isotropic":
            return make_isotropic(cfg["lambda"], cfg["mu"])
        if kind == "general":
            return cls.from_voigt(cfg["voigt"])
        raise ValueError(f"unknown elasticity type {kind!r}")

    def to_config(self):
        return {"type": "general", "voigt": [float(v) for v in self.to_voigt().ravel()]}


def make_isotropic(lam, mu):
    """Lame tensor ``C F = 2 mu F^sym + lam tr(F) I``."""
    if not mu > 0 or not lam + mu > 0:
        raise ValueError(f"non-elliptic Lame parameters lambda={lam}, mu={mu}")
    return ElasticTensor.from_voigt([[lam + 2 * mu, lam, 0.0],
                                     [lam, lam + 2 * mu, 0.0],
                                     [0.0, 0.0, mu]])


@dataclass
class AxiomReport:
    ok: bool
    nu1: float
    nu2: float
    failed: list


def check_axioms(C, samples=1000, rng=None, tol=1e-12):
    """Check (C1) minor symmetry, (C2) major symmetry, (C3) ellipticity on random F."""
    rng = np.random.default_rng(0) if rng is None else rng
    F1 = rng.standard_normal((samples, 2, 2))
    F2 = rng.standard_normal((samples, 2, 2))
    CF1 = C.apply(F1)
    scale = max(1.0, np.abs(C.matrix).max())
    failed = []
    c1 = (np.abs(CF1 - C.apply(sym_part(F1))).max() <= tol * scale
          and np.abs(CF1 - sym_part(CF1)).max() <= tol * scale)
    if not c1:
        failed.append("C1")
    if np.abs(ddot(CF1, F2) - ddot(F1, C.apply(F2))).max() > tol * scale * 10:
        failed.append("C2")
    q = C.energy_density(F1)
    s = ddot(sym_part(F1), sym_part(F1))
    c3 = (C.nu1 > tol * scale
          and np.all(q >= C.nu1 * s - tol * scale * s)
          and np.all(q <= C.nu2 * s + tol * scale * s))
    if not c3:
        failed.append("C3")
    return AxiomReport(not failed, C.nu1, C.nu2, failed)


def best_skew(beta):
    """Constant skew matrix closest to ``beta`` in the discrete L2 sense.

    The minimizer of sum |beta - S|^2 over skew S is the mean skew part.
    """
    act = beta.active()
    if not act.any():
        raise ValueError("empty grid")
    return skew_part(beta.values[act].mean(axis=0))

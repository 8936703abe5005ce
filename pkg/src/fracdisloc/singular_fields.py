"""Curl carriers of a point dislocation: the explicit field zeta and the
equilibrated field eta, both homogeneous of degree -1.

``eta = zeta + grad u`` with ``u = a log r + U(theta)``.  In polar form
``eta = (g(theta) (x) e_theta + a (x) e_r) / r`` with ``g = xi/2pi + U'``.
Equilibrium away from the core reduces to ``(C eta) e_theta = const / r``;
the log coefficient ``a`` removes the net force on the core, so that
``Div C eta = 0`` holds in the whole plane.
"""

import csv
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .elastic_core import ElasticTensor
from .kernels import _smooth_step_exp
from .quadrature import gauss_panels, periodic_nodes


def _check_point(x):
    x = np.asarray(x, dtype=float)
    if np.any(np.hypot(x[..., 0], x[..., 1]) == 0.0):
        raise ValueError("singular fields are not defined at the origin")
    return x


def zeta_field(xi, x):
    """``(xi / 2pi) (x) J x / |x|^2`` at points ``x`` (shape (..., 2))."""
    x = _check_point(x)
    xi = np.asarray(xi, dtype=float)
    r2 = x[..., 0] ** 2 + x[..., 1] ** 2
    jx = np.stack([-x[..., 1], x[..., 0]], axis=-1) / r2[..., None]
    return np.einsum("i,...j->...ij", xi / (2.0 * np.pi), jx)


def zeta_xy(xi):
    """Vectorized closure ``f(X, Y)`` of zeta_field."""
    return lambda X, Y: zeta_field(xi, np.stack([X, Y], axis=-1))


def _polar_frames(theta):
    er = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    et = np.stack([-np.sin(theta), np.cos(theta)], axis=-1)
    return er, et


def _tensor4(C):
    return C.as_flat_operator().reshape(2, 2, 2, 2)


def _acoustic(C4, m, n):
    """``(A v)_i = C_ijkl m_j v_k n_l`` for direction arrays m, n."""
    return np.einsum("ijkl,tj,tl->tik", C4, m, n)


def _modes(samples, kmax):
    """Fourier coefficients ``f_k``, k = -kmax..kmax, of uniform samples."""
    n = samples.shape[0]
    F = np.fft.fft(samples, axis=0) / n
    idx = np.arange(-kmax, kmax + 1) % n
    return F[idx]


@dataclass
class AngularProfile:
    """Angular profile ``G(theta)`` of ``eta = G(theta) / r``.

    ``w_modes`` are the Fourier modes of ``g - xi/2pi`` (k = -n..n, zero mode
    zero); ``log_coeff`` is ``a``; ``traction`` is the constant
    ``(C G) e_theta``.  ``gamma_modes`` hold the matrix Fourier coefficients
    of G for k = -(n+1)..n+1.
    """

    xi: np.ndarray
    elasticity: ElasticTensor
    n_modes: int
    w_modes: np.ndarray
    log_coeff: np.ndarray
    traction: np.ndarray
    theta: np.ndarray = field(repr=False, default=None)
    values: np.ndarray = field(repr=False, default=None)
    gamma_modes: np.ndarray = field(repr=False, default=None)
    K: float = 0.0
    tail: float = 0.0

    def g(self, theta):
        theta = np.asarray(theta, dtype=float)
        k = np.arange(-self.n_modes, self.n_modes + 1)
        ph = np.exp(1j * theta[..., None] * k)
        return self.xi / (2.0 * np.pi) + np.real(ph @ self.w_modes)

    def eval(self, theta):
        """``G(theta)``, shape ``theta.shape + (2, 2)``."""
        theta = np.asarray(theta, dtype=float)
        er, et = _polar_frames(theta)
        return (np.einsum("...i,...j->...ij", self.g(theta), et)
                + np.einsum("i,...j->...ij", self.log_coeff, er))

    def eval_xy(self, X, Y):
        r = np.hypot(X, Y)
        return self.eval(np.arctan2(Y, X)) / r[..., None, None]

    @property
    def kmax(self):
        return self.n_modes + 1

    # export
    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["theta", "G11", "G12", "G21", "G22"])
            for t, G in zip(self.theta, self.values):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in G.ravel()])

    def metadata(self):
        return {"xi": [float(v) for v in self.xi], "elasticity": self.elasticity.to_config(),
                "K": self.K, "n_modes": self.n_modes,
                "log_coeff": [float(v) for v in self.log_coeff],
                "traction": [float(v) for v in self.traction], "tail": self.tail}

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.metadata(), fh, indent=2)


def _frame_blocks(C, n):
    th, _ = periodic_nodes(n)
    er, et = _polar_frames(th)
    C4 = _tensor4(C)
    return th, {"tt": _acoustic(C4, et, et), "tr": _acoustic(C4, et, er),
                "rt": _acoustic(C4, er, et), "rr": _acoustic(C4, er, er)}


def solve_eta(C, xi, n_modes=64, n_samples=1024):
    """Fourier-Galerkin solve for the angular profile of eta.

    Unknowns: the modes ``w_k`` (k != 0) of ``U'`` and the log coefficient
    ``a``.  Equations: vanishing nonzero modes of ``(C G) e_theta`` and zero
    net force ``int (C G) e_r dtheta = 0``.  The coefficient blocks are
    trigonometric polynomials of degree 2, so the system is banded; it is
    solved as one dense system.
    """
    if n_modes < 8:
        raise ValueError("n_modes must be at least 8")
    xi = np.asarray(xi, dtype=float)
    N = int(n_modes)
    _, B = _frame_blocks(C, 16)
    hat = {key: _modes(val, 2) for key, val in B.items()}   # index k + 2
    ks = [k for k in range(-N, N + 1) if k != 0]
    pos = {k: i for i, k in enumerate(ks)}
    n_unk = 2 * len(ks) + 2
    A = np.zeros((n_unk, n_unk), dtype=complex)
    b = np.zeros(n_unk, dtype=complex)
    xs = xi / (2.0 * np.pi)
    for k in ks:
        r = 2 * pos[k]
        for l in ks:
            d = k - l
            if abs(d) <= 2:
                A[r:r + 2, 2 * pos[l]:2 * pos[l] + 2] = hat["tt"][d + 2]
        if abs(k) <= 2:
            A[r:r + 2, -2:] = hat["tr"][k + 2]
            b[r:r + 2] = -hat["tt"][k + 2] @ xs
    for l in ks:
        if abs(l) <= 2:
            A[-2:, 2 * pos[l]:2 * pos[l] + 2] = hat["rt"][-l + 2]
    A[-2:, -2:] = hat["rr"][2]
    b[-2:] = -hat["rt"][2] @ xs
    cond = np.linalg.cond(A)
    if cond > 1e12:
        raise np.linalg.LinAlgError(f"mode system ill-conditioned (cond={cond:.3g})")
    sol = np.linalg.solve(A, b)
    w = np.zeros((2 * N + 1, 2), dtype=complex)
    for k in ks:
        w[k + N] = sol[2 * pos[k]:2 * pos[k] + 2]
    a = np.real(sol[-2:])
    tail = float(max(np.abs(w[0]).max(), np.abs(w[-1]).max()))
    scale = max(np.linalg.norm(xi), 1e-300)
    if tail > 1e-10 * scale:
        warnings.warn(f"eta Fourier tail {tail:.2e} exceeds 1e-10 |xi|")
    prof = AngularProfile(xi, C, N, w, a, np.zeros(2))
    th, _ = periodic_nodes(n_samples)
    G = prof.eval(th)
    _, Bs = _frame_blocks(C, n_samples)
    prof.traction = np.mean(np.einsum("tij,tj->ti", Bs["tt"], prof.g(th))
                            + Bs["tr"] @ a, axis=0)
    prof.theta, prof.values = th, G
    prof.gamma_modes = _modes(G, N + 1)
    prof.K = float(np.linalg.norm(G, axis=(1, 2)).max() / scale) if scale > 1e-300 else 0.0
    prof.tail = tail
    return prof


def zeta_profile(C, xi, n_modes=8):
    """AngularProfile of the explicit field ``zeta = (xi / 2pi) (x) e_theta / r``."""
    xi = np.asarray(xi, dtype=float)
    N = int(n_modes)
    prof = AngularProfile(xi, C, N, np.zeros((2 * N + 1, 2), dtype=complex), np.zeros(2),
                          np.zeros(2))
    th, _ = periodic_nodes(8 * N)
    prof.theta, prof.values = th, prof.eval(th)
    prof.gamma_modes = _modes(prof.values, N + 1)
    # zeta is not equilibrated: this is only the mean of (C G) e_theta
    prof.traction = np.mean(np.einsum("tij,tj->ti", C.apply(prof.values), _polar_frames(th)[1]),
                            axis=0)
    scale = np.linalg.norm(xi)
    prof.K = float(np.linalg.norm(prof.values, axis=(1, 2)).max() / scale) if scale > 0 else 0.0
    return prof


def solve_eta_collocation(C, xi, n_nodes=4096):
    """Independent nodal solve.  Pointwise ``g = A_tt^-1 (c - A_tr a)``; the
    constants ``c`` and ``a`` follow from ``int g = xi`` and zero net force,
    with integrals by the trapezoid rule.  Returns ``(theta, G, a, c)``."""
    xi = np.asarray(xi, dtype=float)
    th, B = _frame_blocks(C, n_nodes)
    wq = 2.0 * np.pi / n_nodes
    Ainv = np.linalg.inv(B["tt"])
    P = Ainv @ B["tr"]                      # g = Ainv c - P a
    I1 = Ainv.sum(axis=0) * wq
    I2 = P.sum(axis=0) * wq
    F1 = (B["rt"] @ Ainv).sum(axis=0) * wq
    F2 = (B["rr"] - B["rt"] @ P).sum(axis=0) * wq
    M = np.block([[I1, -I2], [F1, F2]])
    sol = np.linalg.solve(M, np.concatenate([xi, np.zeros(2)]))
    c, a = sol[:2], sol[2:]
    g = Ainv @ c - P @ a
    er, et = _polar_frames(th)
    G = np.einsum("ti,tj->tij", g, et) + np.einsum("i,tj->tij", a, er)
    return th, G, a, c


def eta_eval(profile, x):
    x = _check_point(x)
    return profile.eval_xy(x[..., 0], x[..., 1])


def psi_density(profile, n_quad=1024):
    """``1/2 int_0^{2pi} C G : G dtheta`` by the periodic trapezoid rule."""
    th, w = periodic_nodes(n_quad)
    G = profile.eval(th)
    return float(0.5 * w @ profile.elasticity.energy_density(G))


def loop_circulation(fn, center=(0.0, 0.0), radius=1.0, n=10000):
    """``oint fn(x) tau ds`` over a circle (rows of a matrix field)."""
    th, w = periodic_nodes(n)
    er, et = _polar_frames(th)
    pts = np.asarray(center, dtype=float) + radius * er
    vals = fn(pts[:, 0], pts[:, 1])
    return radius * np.einsum("t,tij,tj->i", w, vals, et)


def divergence_residual(profile, tests, n_r=4, n_theta=256):
    """Weak residual ``int C eta : grad Phi`` for bumps ``Phi = v b(|x - x0| / R)``.

    ``tests`` is a list of ``(x0, R, v)``; the annulus ``R/2 < |x - x0| < R``
    carrying ``grad Phi`` must avoid the origin.  Returns the residuals
    normalised by ``int |C eta| |grad Phi|``.
    """
    out = []
    th, wth = periodic_nodes(n_theta)
    er, _ = _polar_frames(th)
    for x0, R, v in tests:
        x0 = np.asarray(x0, dtype=float)
        v = np.asarray(v, dtype=float)
        d0 = np.hypot(*x0)
        if R / 2 <= d0 <= R:
            raise ValueError("test annulus contains the singular point")
        r, wr = gauss_panels(np.linspace(R / 2, R, n_r + 1), 24)
        eps = 1e-7 * R
        db = (_smooth_step_exp(r / R + eps / R) - _smooth_step_exp(r / R - eps / R)) / (2 * eps)
        pts = x0 + r[:, None, None] * er[None, :, :]
        S = profile.elasticity.apply(eta_eval(profile, pts))
        gradphi = np.einsum("i,rtj->rtij", v, db[:, None, None] * er[None, :, :])
        wgt = (wr * r)[:, None] * wth[None, :]
        num = np.einsum("rt,rtij,rtij->", wgt, S, gradphi)
        den = np.einsum("rt,rt->", wgt, np.linalg.norm(S, axis=(2, 3))
                        * np.linalg.norm(gradphi, axis=(2, 3)))
        out.append(float(abs(num) / den))
    return out

"""Cell self-energy of a single dislocation and the lattice relaxation.

The cell energy is minimised in the L^2 form

    Psi_hat = min_v 1/2 int_{B_rho} C (B + grad v) : (B + grad v),

where ``B = I^alpha_rho eta_xi`` is the finite-horizon potential of the
equilibrated dislocation field.  ``B`` is evaluated through its angular
modes (see ``riesz_transform.ModalTable``); cells at the core are
integrated in polar coordinates, so no singular sampling is needed.  The
corrector ``v`` is continuous piecewise linear on two triangles per active
cell of a staircase approximation of the disc.
"""

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .elastic_core import ElasticTensor, make_isotropic
from .gridfield import GridField
from .kernels import HorizonKernel, polygon_polar_integral
from .quadrature import power_rule
from .riesz_transform import modal_table
from .singular_fields import psi_density, solve_eta


# -- potential of eta through its angular modes --------------------------------

def _duffy(n):
    g, w = np.polynomial.legendre.leggauss(n)
    u, wu = 0.5 * (g + 1), 0.5 * w
    U, V = np.meshgrid(u, u, indexing="ij")
    W = np.outer(wu, wu) * (1 - U)
    # reference triangle (0,0), (1,0), (0,1); weights sum to 1/2
    return np.stack([U.ravel(), (V * (1 - U)).ravel()], axis=1), W.ravel()


class EtaPotential:
    """``I^alpha_rho eta_xi`` as ``r^(alpha-1) sum_k G_k e^{ik phi} h_|k|(r/rho)``."""

    def __init__(self, profile, alpha, rho, cutoff="exp-splice", mode_tol=1e-13):
        self.profile = profile
        self.alpha, self.rho, self.cutoff = float(alpha), float(rho), cutoff
        G = profile.gamma_modes
        kk = np.arange(-profile.kmax, profile.kmax + 1)
        size = np.abs(G).max(axis=(1, 2))
        keep = size > mode_tol * max(size.max(), 1e-300)
        self.ks = kk[keep]
        self.coeffs = G[keep]
        kmax = int(np.abs(self.ks).max()) if self.ks.size else 0
        self.table = modal_table(self.alpha, cutoff, max(kmax, 1))
        self.C = profile.elasticity

    def reduced(self, r, th):
        """``r^(1-alpha) B``: bounded, smooth in the angle."""
        r = np.asarray(r, dtype=float)
        th = np.asarray(th, dtype=float)
        if self.ks.size == 0:
            return np.zeros(r.shape + (2, 2))
        H = self.table.h(r / self.rho)[..., np.abs(self.ks)]
        ph = np.exp(1j * th[..., None] * self.ks) * H
        return np.real(np.einsum("...k,kij->...ij", ph, self.coeffs))

    def eval_xy(self, X, Y):
        r = np.hypot(X, Y)
        return r[..., None, None] ** (self.alpha - 1.0) * self.reduced(r, np.arctan2(Y, X))

    def _cum_mass(self, R, th):
        # int_0^R B r dr along the ray at angle th
        if self.ks.size == 0:
            return np.zeros(np.shape(R) + (2, 2))
        cum = self.table.cumulative(np.asarray(R) / self.rho)[..., np.abs(self.ks)]
        ph = np.exp(1j * np.asarray(th)[..., None] * self.ks) * cum
        return self.rho ** (1 + self.alpha) * np.real(np.einsum("...k,kij->...ij", ph, self.coeffs))

    def polygon_integral(self, vertices):
        """``int_P B`` over a polygon (origin anywhere)."""
        return polygon_polar_integral(self._cum_mass, vertices, n=24)

    def _cum_energy(self, R, th):
        # int_0^R C B : B r dr = int_0^R r^(2 alpha - 1) C Bt : Bt dr
        s, w = power_rule(2 * self.alpha, 0.0, 1.0)
        R = np.asarray(R, dtype=float)
        Bt = self.reduced(R[:, None] * s[None, :], np.broadcast_to(th[:, None], (R.size, s.size)))
        e = self.C.energy_density(Bt)
        return R ** (2 * self.alpha) * (e @ w)

    def polygon_energy(self, vertices):
        """``int_P C B : B``."""
        return float(polygon_polar_integral(self._cum_energy, vertices, n=24))

    def disc_energy(self):
        """``int_{B_rho} C B : B`` by Parseval over the angular modes."""
        e = np.array([self.C.energy_density(c.real) + self.C.energy_density(c.imag)
                      for c in self.coeffs])
        eu = self.table.energy_unit[np.abs(self.ks)]
        return float(2 * np.pi * self.rho ** (2 * self.alpha) * (e * eu).sum())


# -- discretisation of the disc -------------------------------------------------

@lru_cache(maxsize=8)
def _disc_mesh(n, rho):
    h = 2.0 * rho / n
    idx = np.arange(n)
    cx = -rho + (idx + 0.5) * h
    CX, CY = np.meshgrid(cx, cx)
    active = CX ** 2 + CY ** 2 < rho ** 2
    J, I = np.nonzero(active)
    vid = lambda j, i: j * (n + 1) + i
    v00, v10, v11, v01 = vid(J, I), vid(J, I + 1), vid(J + 1, I + 1), vid(J + 1, I)
    tris = np.concatenate([np.stack([v00, v10, v11], 1), np.stack([v00, v11, v01], 1)])
    used = np.unique(tris)
    remap = -np.ones((n + 1) ** 2, dtype=int)
    remap[used] = np.arange(used.size)
    tl = remap[tris]
    nc = J.size
    g1 = np.array([[-1.0, 0.0], [1.0, -1.0], [0.0, 1.0]]) / h
    g2 = np.array([[0.0, -1.0], [1.0, 0.0], [-1.0, 1.0]]) / h
    grads = np.concatenate([np.broadcast_to(g1, (nc, 3, 2)), np.broadcast_to(g2, (nc, 3, 2))])
    nt = tl.shape[0]
    rows, cols, vals = [], [], []
    for a in range(3):
        for i in range(2):
            for j in range(2):
                rows.append(4 * np.arange(nt) + 2 * i + j)
                cols.append(2 * tl[:, a] + i)
                vals.append(grads[:, a, j])
    G = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(4 * nt, 2 * used.size))
    vy, vx = np.divmod(used, n + 1)
    verts = np.stack([-rho + vx * h, -rho + vy * h], axis=1)
    # triangle vertex coordinates
    tv = verts[tl]
    return {"h": h, "active": active, "cells": (J, I), "tris": tl, "G": G,
            "verts": verts, "tri_xy": tv, "n_vert": used.size, "vertex_ids": used}


def _triangle_averages(pot, tri_xy, h, near):
    """Averages of B over triangles (polar integration near the core)."""
    nt = tri_xy.shape[0]
    out = np.empty((nt, 2, 2))
    cen = tri_xy.mean(axis=1)
    is_near = np.max(np.abs(cen), axis=1) < near * h
    area = 0.5 * h * h
    for t in np.nonzero(is_near)[0]:
        out[t] = pot.polygon_integral(tri_xy[t]) / area
    far = np.nonzero(~is_near)[0]
    ref, w = _duffy(4)
    for chunk in np.array_split(far, max(1, far.size // 4000)):
        P0 = tri_xy[chunk, 0]
        E1 = tri_xy[chunk, 1] - P0
        E2 = tri_xy[chunk, 2] - P0
        pts = P0[:, None, :] + ref[None, :, 0, None] * E1[:, None, :] + ref[None, :, 1, None] * E2[:, None, :]
        vals = pot.eval_xy(pts[..., 0], pts[..., 1])
        out[chunk] = 2.0 * np.einsum("q,tqij->tij", w, vals)
    return out


def _cell_energy(pot, mesh, near):
    """``int_{D_h} C B : B`` over the staircase disc."""
    J, I = mesh["cells"]
    h = mesh["h"]
    n = mesh["active"].shape[0]
    rho = n * h / 2
    x0 = -rho + I * h
    y0 = -rho + J * h
    cx, cy = x0 + h / 2, y0 + h / 2
    is_near = np.maximum(np.abs(cx), np.abs(cy)) < near * h
    total = 0.0
    for k in np.nonzero(is_near)[0]:
        sq = np.array([[x0[k], y0[k]], [x0[k] + h, y0[k]], [x0[k] + h, y0[k] + h], [x0[k], y0[k] + h]])
        total += pot.polygon_energy(sq)
    g, w = np.polynomial.legendre.leggauss(6)
    off = 0.5 * h * (g + 1)
    far = np.nonzero(~is_near)[0]
    for chunk in np.array_split(far, max(1, far.size // 4000)):
        X = x0[chunk, None, None] + off[None, :, None]
        Y = y0[chunk, None, None] + off[None, None, :]
        e = pot.C.energy_density(pot.eval_xy(X, Y))
        total += 0.25 * h * h * np.einsum("i,j,tij->", w, w, e)
    return float(total)


def _kernel_basis(verts):
    """Orthonormal basis of the null space of the elastic form: translations, rotation."""
    nv = verts.shape[0]
    t1 = np.zeros((nv, 2)); t1[:, 0] = 1
    t2 = np.zeros((nv, 2)); t2[:, 1] = 1
    rot = np.stack([-verts[:, 1], verts[:, 0]], axis=1)
    Q, _ = np.linalg.qr(np.stack([t1.ravel(), t2.ravel(), rot.ravel()], axis=1))
    return Q


def conjugate_gradient(A, b, tol=1e-8, maxiter=10000, project=None, precond=None):
    """CG for symmetric positive semidefinite ``A`` restricted to the range of
    ``project`` (an orthonormal basis of the null space to remove).

    ``precond`` is an optional array of inverse diagonal entries (Jacobi).
    Stops when ``|r| <= tol |b|`` and returns ``(x, iterations, |r| / |b|)``.
    """
    proj = (lambda x: x) if project is None else (lambda x: x - project @ (project.T @ x))
    prec = (lambda r: r) if precond is None else (lambda r: precond * r)
    b = proj(b)
    x = np.zeros_like(b)
    nb = np.linalg.norm(b)
    if nb == 0.0:
        return x, 0, 0.0
    r = b.copy()
    z = proj(prec(r))
    p = z.copy()
    rz = r @ z
    for it in range(1, maxiter + 1):
        Ap = proj(A @ p)
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        nr = np.linalg.norm(r)
        if nr <= tol * nb:
            return x, it, float(nr / nb)
        z = proj(prec(r))
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise RuntimeError(f"CG did not converge in {maxiter} iterations "
                       f"(relative residual {nr / nb:.3e})")


# -- cell problem ---------------------------------------------------------------

@dataclass
class CellProblem:
    xi: np.ndarray
    alpha: float
    rho: float
    n: int = 128
    elasticity: ElasticTensor = field(default_factory=lambda: make_isotropic(1.0, 1.0))
    cutoff: str = "exp-splice"
    n_modes: int = 64

    def __post_init__(self):
        self.xi = np.asarray(self.xi, dtype=float)
        if not 0.0 < self.alpha < 0.5:
            raise ValueError("cell problems need alpha in (0, 1/2)")
        if not 0.0 < self.rho < 1.0:
            raise ValueError("cell problems need rho in (0, 1)")
        if self.n < 64 or self.n % 2:
            raise ValueError("need an even number >= 64 of cells across the diameter")

    @property
    def kernel(self):
        return HorizonKernel.for_alpha(self.alpha, self.rho, self.cutoff)

    def profile(self):
        return solve_eta(self.elasticity, self.xi, self.n_modes)

    def potential(self):
        return EtaPotential(self.profile(), self.alpha, self.rho, self.cutoff)


@dataclass
class CellSolution:
    corrector: GridField
    base: GridField
    psi_hat: float
    upper: float
    gap: float
    iterations: int
    residual: float
    upper_disc: float = 0.0


def assemble_base_field(p, near=4):
    """Cell averages of ``I^alpha_rho eta_xi`` on the disc cells (GridField)."""
    pot = p.potential()
    mesh = _disc_mesh(p.n, p.rho)
    h = mesh["h"]
    tri = _triangle_averages(pot, mesh["tri_xy"], h, near)
    nc = tri.shape[0] // 2
    J, I = mesh["cells"]
    vals = np.zeros((p.n, p.n, 2, 2))
    vals[J, I] = 0.5 * (tri[:nc] + tri[nc:])
    return GridField((-p.rho, -p.rho), h, vals, mesh["active"])


class _PlainEta:
    """eta itself as a base field (the alpha -> 0 limit of the potential)."""

    def __init__(self, profile):
        self.profile = profile

    def eval_xy(self, X, Y):
        return self.profile.eval_xy(X, Y)

    def polygon_integral(self, vertices):
        return polygon_polar_integral(lambda R, th: R[:, None, None] * self.profile.eval(th),
                                      vertices, n=24)


def _corrector(pot, mesh, C, tol, near):
    h = mesh["h"]
    C4 = C.as_flat_operator()
    tri = _triangle_averages(pot, mesh["tri_xy"], h, near)
    nt = tri.shape[0]
    area = 0.5 * h * h
    W = sparse.kron(sparse.identity(nt), sparse.csr_matrix(area * C4), format="csr")
    G = mesh["G"]
    K = (G.T @ W @ G).tocsr()
    rhs = -(G.T @ (W @ tri.reshape(-1)))
    v, its, res = conjugate_gradient(K, rhs, tol=tol, project=_kernel_basis(mesh["verts"]))
    return tri, v, 0.5 * float(v @ (K @ v)), its, res


def limit_gap(elasticity, xi, n=128, tol=1e-8, near=4):
    """Energy released by the optimal corrector for the base field eta itself.

    The problem is scale invariant, so the value does not depend on the disc
    radius; it is the alpha -> 0 reference for the sandwich gap.
    """
    mesh = _disc_mesh(n, 0.5)
    return _corrector(_PlainEta(solve_eta(elasticity, xi)), mesh, elasticity, tol, near)[2]


def minimize_cell(p, tol=1e-8, near=4):
    pot = p.potential()
    mesh = _disc_mesh(p.n, p.rho)
    h = mesh["h"]
    tri, v, gap, its, res = _corrector(pot, mesh, p.elasticity, tol, near)
    nt = tri.shape[0]
    upper = 0.5 * _cell_energy(pot, mesh, near)
    nc = nt // 2
    J, I = mesh["cells"]
    base = np.zeros((p.n, p.n, 2, 2))
    base[J, I] = 0.5 * (tri[:nc] + tri[nc:])
    vv = np.zeros(((p.n + 1) ** 2, 2))
    vv[mesh["vertex_ids"]] = v.reshape(-1, 2)
    vmask = np.zeros((p.n + 1) ** 2, dtype=bool)
    vmask[mesh["vertex_ids"]] = True
    corr = GridField((-p.rho - h / 2, -p.rho - h / 2), h, vv.reshape(p.n + 1, p.n + 1, 2),
                     vmask.reshape(p.n + 1, p.n + 1))
    return CellSolution(corr, GridField((-p.rho, -p.rho), h, base, mesh["active"]),
                        upper - gap, upper, gap, its, res, 0.5 * pot.disc_energy())


def sandwich_check(p):
    """``{"psi", "upper", "gap", "gap_ratio"}`` with ``gap = upper - psi``."""
    if not np.any(p.xi):
        return {"psi": 0.0, "upper": 0.0, "gap": 0.0, "gap_ratio": 0.0}
    s = minimize_cell(p)
    return {"psi": s.psi_hat, "upper": s.upper, "gap": s.gap,
            "gap_ratio": s.gap / float(p.xi @ p.xi)}


def cell_convergence_study(xi, rho, alphas, n=128, elasticity=None, cutoff="exp-splice",
                           rho_of_alpha=None):
    """Rows (alpha, psi_hat, two_alpha_psi, upper, psi_limit, rel_err)."""
    C = make_isotropic(1.0, 1.0) if elasticity is None else elasticity
    psi = psi_density(solve_eta(C, xi))
    rows = []
    for a in alphas:
        r = rho if rho_of_alpha is None else rho_of_alpha(a)
        s = minimize_cell(CellProblem(xi, a, r, n, C, cutoff))
        two = 2 * a * s.psi_hat
        rows.append({"alpha": a, "rho": r, "psi_hat": s.psi_hat, "two_alpha_psi": two,
                     "upper": s.upper, "gap": s.gap, "psi_limit": psi,
                     "rel_err": abs(two / psi - 1.0)})
    return rows


def horizon_shift(profile, alpha, varrho, omega, cutoff="exp-splice"):
    """``I^alpha_varrho eta(omega) - I^alpha eta(omega)`` for unit ``omega`` (angle or point)."""
    phi = float(omega) if np.ndim(omega) == 0 else float(np.arctan2(omega[1], omega[0]))
    pot = EtaPotential(profile, alpha, 1.0, cutoff)
    T = pot.table
    if T.diagnostic:
        return np.zeros((2, 2))
    hk = T.at_horizon(varrho) if varrho <= T.t_max else T.M
    d = (hk - T.M)[np.abs(pot.ks)]
    return np.real(np.einsum("k,kij->ij", np.exp(1j * phi * pot.ks) * d, pot.coeffs))


def lemma47_check(xi, alphas, varrhos, omegas, elasticity=None, cutoff="exp-splice"):
    """Rows (alpha, varrho, omega, |Delta|, |Delta| / (|xi| alpha))."""
    C = make_isotropic(1.0, 1.0) if elasticity is None else elasticity
    prof = solve_eta(C, xi)
    nx = np.linalg.norm(xi)
    rows = []
    for a in alphas:
        for vr in varrhos:
            for om in omegas:
                D = np.linalg.norm(horizon_shift(prof, a, vr, om, cutoff))
                rows.append({"alpha": a, "varrho": vr, "omega": om, "delta": D,
                             "ratio": D / (nx * a) if nx > 0 else 0.0})
    return rows


# -- lattice relaxation ---------------------------------------------------------

@dataclass
class BurgersLattice:
    b1: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        self.b1 = np.asarray(self.b1, dtype=float)
        self.b2 = np.asarray(self.b2, dtype=float)
        for b in (self.b1, self.b2):
            if abs(np.linalg.norm(b) - 1.0) > 1e-12:
                raise ValueError("lattice generators must be unit vectors")
        if abs(np.linalg.det(self.basis)) < 1e-12:
            raise ValueError("lattice generators must be linearly independent")
        self._cache = {}

    @property
    def basis(self):
        return np.column_stack([self.b1, self.b2])

    def points(self, R):
        """Nonzero lattice vectors with ``|xi| <= R`` and their integer coordinates."""
        if R not in self._cache:
            Binv = np.linalg.inv(self.basis)
            m = int(np.ceil(R * np.linalg.norm(Binv, 2))) + 1
            a, b = np.meshgrid(np.arange(-m, m + 1), np.arange(-m, m + 1))
            ints = np.stack([a.ravel(), b.ravel()], axis=1)
            vec = ints @ self.basis.T
            keep = (np.linalg.norm(vec, axis=1) <= R + 1e-12) & np.any(ints != 0, axis=1)
            self._cache[R] = (vec[keep], ints[keep])
        return self._cache[R]

    def coordinates(self, xi):
        return np.linalg.solve(self.basis, np.asarray(xi, dtype=float))

    def contains(self, xi, tol=1e-9):
        c = self.coordinates(xi)
        return bool(np.all(np.abs(c - np.round(c)) <= tol))


def psi_quadratic_form(elasticity):
    """Matrix P with ``psi(xi) = xi . P xi``."""
    p1 = psi_density(solve_eta(elasticity, [1.0, 0.0]))
    p2 = psi_density(solve_eta(elasticity, [0.0, 1.0]))
    p12 = psi_density(solve_eta(elasticity, [1.0, 1.0]))
    off = 0.5 * (p12 - p1 - p2)
    return np.array([[p1, off], [off, p2]])


def _psi_values(psi, vecs):
    if callable(psi):
        return np.asarray(psi(vecs), dtype=float)
    P = np.asarray(psi, dtype=float)
    return np.einsum("ti,ij,tj->t", vecs, P, vecs)


def _lp(vecs, costs, xi):
    res = linprog(costs, A_eq=vecs.T, b_eq=xi, bounds=(0, None), method="highs")
    if res.status != 0:
        raise ValueError(f"relaxation LP failed: {res.message}")
    lam = res.x
    supp = np.nonzero(lam > 1e-12)[0]
    # polish on the support: exact solve of the basic system
    if 0 < supp.size <= 2:
        A = vecs[supp].T
        lam_s = np.linalg.lstsq(A, xi, rcond=None)[0]
        if np.all(lam_s >= 0) and np.allclose(A @ lam_s, xi, atol=1e-12):
            lam = np.zeros_like(lam)
            lam[supp] = lam_s
    return float(costs @ lam), lam


def relax_phi(lattice, psi, xi, M_max=3, R0=2.0, tol=1e-9, R_max=64.0):
    """``phi(xi) = min sum lam_k psi(xi_k)`` over lattice decompositions.

    ``psi`` is a callable on arrays of vectors or a 2x2 quadratic form.  The
    enumeration radius is doubled until phi changes by less than ``tol``.
    Returns ``{"phi", "decomposition": [(lam, xi_k)], "M", "R"}``.
    """
    xi = np.asarray(xi, dtype=float)
    if not np.any(xi):
        return {"phi": 0.0, "decomposition": [], "M": 0, "R": 0.0}
    R = max(R0, 2.0 * np.linalg.norm(xi))
    prev = None
    while True:
        vecs, _ = lattice.points(R)
        phi, lam = _lp(vecs, _psi_values(psi, vecs), xi)
        if prev is not None and abs(phi - prev[0]) <= tol * max(1.0, abs(phi)):
            break
        if R >= R_max:
            break
        prev = (phi, lam, vecs)
        R *= 2.0
    supp = np.nonzero(lam > 0)[0]
    if supp.size > M_max:
        raise RuntimeError(f"decomposition uses {supp.size} > M_max lattice vectors")
    dec = [(float(lam[k]), vecs[k].copy()) for k in supp]
    return {"phi": phi, "decomposition": dec, "M": len(dec), "R": R}


def phi_bruteforce(lattice, psi, xi, radius=3.0):
    """Exhaustive search over single vectors, pairs and triples with ``|xi_k| <= radius``."""
    xi = np.asarray(xi, dtype=float)
    if not np.any(xi):
        return 0.0
    vecs, _ = lattice.points(radius)
    cost = _psi_values(psi, vecs)
    best = np.inf
    # singles: xi = lam v
    for v, c in zip(vecs, cost):
        cr = v[0] * xi[1] - v[1] * xi[0]
        lam = (v @ xi) / (v @ v)
        if abs(cr) < 1e-12 and lam >= 0:
            best = min(best, lam * c)
    # pairs: 2x2 systems
    n = len(vecs)
    I, Jx = np.triu_indices(n, 1)
    A = np.stack([vecs[I], vecs[Jx]], axis=2)          # (m, 2, 2)
    det = np.linalg.det(A)
    ok = np.abs(det) > 1e-12
    lam = np.linalg.solve(A[ok], np.broadcast_to(xi, (ok.sum(), 2))[..., None])[..., 0]
    good = np.all(lam >= -1e-14, axis=1)
    if good.any():
        vals = lam[good, 0] * cost[I[ok][good]] + lam[good, 1] * cost[Jx[ok][good]]
        best = min(best, vals.min())
    # triples: the feasible set of lam >= 0 is a segment lam0 + t n; check its endpoints
    T = np.array(list(combinations(range(n), 3)))
    if T.size:
        Va, Vb, Vc = vecs[T[:, 0]], vecs[T[:, 1]], vecs[T[:, 2]]
        cross = lambda u, v: u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]
        null = np.stack([cross(Vb, Vc), cross(Vc, Va), cross(Va, Vb)], axis=1)
        M = np.stack([Va, Vb, Vc], axis=2)                 # (m, 2, 3)
        MMt = M @ np.swapaxes(M, 1, 2)
        ok = np.abs(np.linalg.det(MMt)) > 1e-12
        M, null, T = M[ok], null[ok], T[ok]
        y = np.linalg.solve(M @ np.swapaxes(M, 1, 2), np.broadcast_to(xi, (len(M), 2))[..., None])
        lam0 = (np.swapaxes(M, 1, 2) @ y)[..., 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            tk = -lam0 / null
        pos, neg = null > 1e-14, null < -1e-14
        lo = np.max(np.where(pos, tk, -np.inf), axis=1)
        hi = np.min(np.where(neg, tk, np.inf), axis=1)
        flat = ~pos & ~neg
        bad = np.any(flat & (lam0 < -1e-14), axis=1)
        feas = (lo <= hi + 1e-14) & np.isfinite(lo) & np.isfinite(hi) & ~bad
        cc = cost[T[feas]]
        for t in (lo[feas], hi[feas]):
            lam3 = np.maximum(lam0[feas] + t[:, None] * null[feas], 0.0)
            if lam3.size:
                best = min(best, float(np.min(np.sum(cc * lam3, axis=1))))
    return float(best)

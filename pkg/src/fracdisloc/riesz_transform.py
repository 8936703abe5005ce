"""Classical and finite-horizon Riesz potentials in the plane.

Point evaluations use polar coordinates about the evaluation point, so the
kernel singularity is absorbed into a power-law quadrature weight.  Fields
with a declared point singularity are split by a smooth partition of unity
and the singular part is integrated in polar coordinates about that point.

Grid potentials convolve cell values with the cell-averaged kernel stencil,
either directly or by zero-padded FFT.

``ModalTable`` handles fields homogeneous of degree -1, ``G(theta) / r``:
their potential is ``sum_k G_k e^{ik phi} r^(alpha-1) h_k(r / rho)`` with
one tabulated radial factor per angular mode.
"""

import os
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import fft as sfft
from scipy import ndimage, special
from scipy.interpolate import CubicSpline

from .gridfield import GridField, cell_centers
from .kernels import (HorizonKernel, _smooth_step_exp, gamma_riesz, kernel_stencil,
                      make_profile, polygon_radial_integral)
from .quadrature import gauss_panels, geometric_edges, periodic_nodes, power_rule

__all__ = [
    "GridField", "PotentialResult", "riesz_point", "riesz_horizon_point",
    "riesz_horizon_grid", "grid_sampler", "ModalTable", "classical_mode_factor",
    "scaling_identity_check", "composition_check", "curl_grid", "square_loop", "circulation",
    "curl_identity_check",
]


def _workers():
    try:
        return max(1, int(os.environ.get("FRAC_THREADS", "1")))
    except ValueError:
        return 1


# -- point quadrature -------------------------------------------------------

def _ring_sums(f, center, r, n_theta, weight=None):
    """``int_0^{2pi} f(center + r e_theta) [weight] dtheta`` for each radius."""
    th, wth = periodic_nodes(n_theta)
    X = center[0] + r[:, None] * np.cos(th)[None, :]
    Y = center[1] + r[:, None] * np.sin(th)[None, :]
    F = np.asarray(f(X, Y), dtype=float)
    if weight is not None:
        w = weight(X, Y)
        F = F * w.reshape(w.shape + (1,) * (F.ndim - 2))
    return np.tensordot(wth, F, axes=(0, 1))


def _apply(w, vals):
    return np.tensordot(w, vals, axes=(0, 0))


def _cutoff(X, Y, p, radius):
    # 1 within radius/2 of p, 0 beyond radius, C-infinity in between
    return _smooth_step_exp(np.hypot(X - p[0], Y - p[1]) / radius)


def _classical_radial(alpha, x, d, singular, decay, extent, r_near):
    """Nodes/weights in r for int r^(alpha-1) F(r) dr about x (weights include r^(alpha-1))."""
    rn, wn = power_rule(alpha, 0.0, r_near)
    parts = [(rn, wn)]
    if extent is not None:
        R0 = np.hypot(*x) + extent
    else:
        R0 = 4.0 * max(np.hypot(*x), d, r_near, 1.0)
    if R0 > r_near:
        rm, wm = gauss_panels(geometric_edges(r_near, R0, growth=1.2), 16)
        parts.append((rm, wm * rm ** (alpha - 1.0)))
    r = np.concatenate([p[0] for p in parts])
    w = np.concatenate([p[1] for p in parts])
    tail = None
    if extent is None:
        t, wt = power_rule(decay - alpha, 0.0, 1.0)
        tail = (R0 / t, R0 ** alpha * wt * t ** -decay)
    return r, w, tail


def riesz_point(f, alpha, x, singular=None, decay=None, extent=None, n_theta=256):
    """Classical potential ``(1/gamma_alpha) int f(y) |x-y|^(alpha-2) dy``.

    ``f(X, Y)`` is vectorized (or a GridField, sampled piecewise constant).
    The growth condition is declarative: pass ``decay`` (``|f(y)| <~ |y|^-decay``,
    ``decay > alpha`` required) or ``extent`` (f vanishes outside B_extent(0)).
    ``singular=(p, kappa)`` declares ``|f(y)| <~ |y-p|^-kappa`` near ``p``.
    """
    if isinstance(f, GridField):
        extent = _grid_extent(f) if extent is None else extent
        f = grid_sampler(f)
    if decay is None and extent is None:
        raise ValueError("declare either a decay exponent or a support extent")
    if decay is not None and decay <= alpha:
        raise ValueError(f"nonintegrable declared decay {decay} <= alpha={alpha}")
    g = gamma_riesz(alpha)
    x = np.asarray(x, dtype=float)
    kern = lambda X, Y: np.hypot(X - x[0], Y - x[1]) ** (alpha - 2.0) / g
    return _potential(f, x, singular, kern, alpha,
                      lambda d, r_near: _classical_radial(alpha, x, d, singular, decay, extent, r_near),
                      n_theta, scale=g)


def _horizon_radial(kernel, d):
    """Radial rule about x for the finite-horizon kernel; returns nodes, weights
    with weights including ``r * Q(r)`` (so the ring sums are plain)."""
    a, rho, g, cq = kernel.alpha, kernel.rho, kernel.gamma, kernel.cq
    half = 0.5 * rho
    near = min(half, d)
    rs, ws = [], []
    # r Q(r) = (r^(a-1) + cq rho^(a-2) r) / g on [0, rho/2]
    r1, w1 = power_rule(a, 0.0, near)
    r2, w2 = gauss_panels([0.0, near], 16)
    rs += [r1, r2]
    ws += [w1 / g, w2 * r2 * cq * rho ** (a - 2.0) / g]
    if near < half:
        r3, w3 = gauss_panels(geometric_edges(near, half, growth=1.4), 16)
        rs.append(r3)
        ws.append(w3 * (r3 ** (a - 1.0) + cq * rho ** (a - 2.0) * r3) / g)
    r4, w4 = gauss_panels(np.linspace(half, rho, 7), 16)
    rs.append(r4)
    ws.append(w4 * r4 * kernel.Q(r4))
    return np.concatenate(rs), np.concatenate(ws)


def riesz_horizon_point(f, kernel, x, singular=None, n_theta=256, decay=None, extent=None):
    """Finite-horizon potential ``int_{B_rho(x)} f(y) Q(x - y) dy``."""
    if isinstance(f, GridField):
        f = grid_sampler(f)
    x = np.asarray(x, dtype=float)
    if kernel.profile.diagnostic:
        if decay is None and extent is None:
            raise ValueError("diagnostic kernel has unbounded support: declare decay or extent")
        return riesz_point(f, kernel.alpha, x, singular, decay, extent, n_theta)
    kern = lambda X, Y: kernel.Q(np.hypot(X - x[0], Y - x[1]))
    if singular is None:
        r, w = _horizon_radial(kernel, kernel.rho)
        return _apply(w, _ring_sums(f, x, r, n_theta))
    p, kappa = np.asarray(singular[0], dtype=float), float(singular[1])
    d = float(np.hypot(*(x - p)))
    if d == 0.0:
        raise ValueError("evaluation at the declared singular point")
    r, w = _horizon_radial(kernel, 0.5 * d)
    total = _apply(w, _ring_sums(f, x, r, n_theta,
                                 weight=lambda X, Y: 1.0 - _cutoff(X, Y, p, 0.5 * d)))
    if d < 2.0 * kernel.rho:
        total = total + _singular_part(f, p, kappa, 0.5 * d, kern, n_theta)
    return total


def _singular_part(f, p, kappa, radius, kern, n_theta):
    # polar about p on B_radius(p) of cutoff * f * kernel
    s, ws = power_rule(2.0 - kappa, 0.0, radius)
    wt = lambda X, Y: _cutoff(X, Y, p, radius) * kern(X, Y)
    vals = _ring_sums(f, p, s, n_theta, weight=wt)
    return _apply(ws * s ** kappa, vals)


def _potential(f, x, singular, kern, alpha, radial, n_theta, scale):
    if singular is None:
        r, w, tail = radial(0.0, 1.0)
        total = _apply(w, _ring_sums(f, x, r, n_theta)) / scale
        if tail is not None:
            total = total + _apply(tail[1], _ring_sums(f, x, tail[0], n_theta)) / scale
        return total
    p, kappa = np.asarray(singular[0], dtype=float), float(singular[1])
    d = float(np.hypot(*(x - p)))
    if d == 0.0:
        raise ValueError("evaluation at the declared singular point")
    r, w, tail = radial(d, 0.5 * d)
    wt = lambda X, Y: 1.0 - _cutoff(X, Y, p, 0.5 * d)
    total = _apply(w, _ring_sums(f, x, r, n_theta, weight=wt)) / scale
    if tail is not None:
        total = total + _apply(tail[1], _ring_sums(f, x, tail[0], n_theta, weight=wt)) / scale
    return total + _singular_part(f, p, kappa, 0.5 * d, kern, n_theta)


# -- grids ----------------------------------------------------------------

def _grid_extent(field):
    X, Y = field.centers()
    return float(np.max(np.hypot(X, Y)) + field.h)


def grid_sampler(field):
    """Piecewise-constant closure over a GridField (zero outside the active cells)."""
    act = field.active()
    comp = field.component_shape

    def f(X, Y):
        i = np.floor((np.asarray(X) - field.origin[0]) / field.h).astype(int)
        j = np.floor((np.asarray(Y) - field.origin[1]) / field.h).astype(int)
        ok = (i >= 0) & (i < field.nx) & (j >= 0) & (j < field.ny)
        ic, jc = np.where(ok, i, 0), np.where(ok, j, 0)
        ok &= act[jc, ic]
        out = field.values[jc, ic]
        return np.where(ok.reshape(ok.shape + (1,) * len(comp)), out, 0.0)

    return f


@dataclass
class PotentialResult:
    field: GridField
    method: str
    accuracy: float


def _convolve_direct(v, st, m):
    ny, nx = v.shape
    P = np.pad(v, m)
    out = np.zeros_like(v)
    for B, A in zip(*np.nonzero(st)):
        out += st[B, A] * P[2 * m - B:2 * m - B + ny, 2 * m - A:2 * m - A + nx]
    return out


def _next_pow2(n):
    return 1 << (int(n) - 1).bit_length()


def _convolve_fft(v, st_hat, m, shape):
    ny, nx = v.shape
    full = sfft.irfft2(sfft.rfft2(v, s=shape, workers=_workers()) * st_hat, s=shape,
                       workers=_workers())
    return full[m:m + ny, m:m + nx]


def riesz_horizon_grid(f, kernel, omega_mask=None, method="fft", stencil=None):
    """Grid potential ``I^alpha_rho f`` at cell centres.

    ``f`` is zero outside its active cells.  With ``omega_mask`` the output
    is restricted to those cells, and every cell within the kernel support of
    them must carry data, otherwise ``ValueError`` (insufficient neighborhood
    data) is raised.
    """
    h = f.h
    st, m = kernel_stencil(kernel, h) if stencil is None else stencil
    st_h = st * h ** 2
    act = f.active()
    if omega_mask is not None:
        omega_mask = np.asarray(omega_mask, dtype=bool)
        need = ndimage.binary_dilation(np.pad(omega_mask, m), structure=st != 0)
        inner = need[m:-m, m:-m]
        if need.sum() != inner.sum() or np.any(inner & ~act):
            raise ValueError("insufficient neighborhood data: mask smaller than the rho-neighborhood")
    comp = f.component_shape
    V = np.where(act.reshape(act.shape + (1,) * len(comp)), f.values, 0.0)
    V = V.reshape(f.ny, f.nx, -1)
    out = np.empty_like(V)
    if method == "direct":
        for c in range(V.shape[2]):
            out[..., c] = _convolve_direct(V[..., c], st_h, m)
    elif method == "fft":
        shape = (_next_pow2(f.ny + 2 * m), _next_pow2(f.nx + 2 * m))
        st_hat = sfft.rfft2(st_h, s=shape, workers=_workers())
        for c in range(V.shape[2]):
            out[..., c] = _convolve_fft(V[..., c], st_hat, m, shape)
    else:
        raise ValueError(f"unknown method {method!r}")
    out = out.reshape(f.values.shape)
    mask = omega_mask if omega_mask is not None else f.mask
    if mask is not None:
        out = np.where(mask.reshape(mask.shape + (1,) * len(comp)), out, 0.0)
    defect = abs(st_h.sum() - kernel.l1_norm()) * float(np.max(np.abs(V), initial=0.0))
    return PotentialResult(GridField(f.origin, h, out, mask), method, defect)


# -- modal potentials of degree -1 fields ------------------------------------

def classical_mode_factor(k, alpha):
    """``I^alpha[e^{ik theta} / r](e_1)`` in closed form."""
    k = np.abs(np.asarray(k, dtype=float))
    return 2.0 ** -alpha * np.exp(special.gammaln((k + 1 - alpha) / 2)
                                  - special.gammaln((k + 1 + alpha) / 2))


class ModalTable:
    """Radial factors ``h_k(t)``, ``t = r / rho``, of the finite-horizon potential
    of ``e^{ik theta} / r``:  ``I^alpha_rho[e^{ik theta}/r](r e_phi) =
    e^{ik phi} r^(alpha-1) h_k(r / rho)``.

    ``h_k -> classical_mode_factor(k)`` as ``t -> 0``; below ``t_min`` the
    table is continued by ``M_k - c t^(1 - alpha + |k|)`` and above ``t_max``
    by the far-field expansion ``t^-alpha (mass + c_k t^-2)``.
    """

    def __init__(self, alpha, cutoff="exp-splice", kmax=16, t_min=1e-4, t_max=128.0,
                 per_decade=16, n_theta=256, build=True):
        self.alpha = float(alpha)
        self.cutoff = cutoff
        self.kmax = int(kmax)
        self.ks = np.arange(self.kmax + 1)
        self.M = classical_mode_factor(self.ks, alpha)
        self.kernel = HorizonKernel(1.0 - alpha, 1.0, make_profile(cutoff))
        self.diagnostic = self.kernel.profile.diagnostic
        self.n_theta = n_theta
        if self.diagnostic or not build:
            return
        n = int(np.ceil(np.log10(t_max / t_min) * per_decade)) + 1
        coarse = t_min * (t_max / t_min) ** (np.arange(n) / (n - 1))
        # the factors vary fastest where the horizon sphere passes the origin
        fine = np.geomspace(0.25, 4.0, 4 * per_decade + 1)
        self.t = np.unique(np.concatenate([coarse[(coarse < 0.25) | (coarse > 4.0)], fine]))
        H = np.array([self._h_at(1.0 / t, n_theta) for t in self.t])
        self.H = H
        self._spl = CubicSpline(np.log(self.t), H, axis=0)
        self.t_min, self.t_max = self.t[0], self.t[-1]
        self.p = 1.0 - alpha + self.ks
        self.c = (self.M - H[0]) / self.t_min ** self.p
        self.mass = self.kernel.l1_norm()
        self.c_far = H[-1] * self.t_max ** alpha - self.mass
        self._build_cumulative()

    def at_horizon(self, vr):
        """``h_k`` for the horizon ratio ``vr = rho / r`` (all k), computed afresh."""
        if self.diagnostic:
            return self.M.copy()
        return self._h_at(vr, self.n_theta)

    # h_k(rho_ratio) at the unit point, all k
    def _h_at(self, vr, n_theta):
        if vr <= 0.5:
            return self._direct(vr, n_theta)
        return self.M - self._defect(vr, n_theta)

    def _D(self, z, vr):
        K = self.kernel
        a, g = self.alpha, K.gamma
        out = np.empty_like(z)
        lo = z < 0.5 * vr
        out[lo] = -K.cq * vr ** (a - 2.0) / g
        hi = z >= vr
        out[hi] = z[hi] ** (a - 2.0) / g
        mid = ~lo & ~hi
        zm = z[mid]
        out[mid] = (1.0 - K.q(zm / vr)) / (g * zm ** (2.0 - a))
        return out

    def _defect(self, vr, n_theta):
        # int_0^inf int e^{ik theta} (classical - horizon)(|e1 - r e_theta|) dtheta dr
        a = self.alpha
        th, _ = periodic_nodes(n_theta)
        R0 = vr + 2.0
        step = min(0.025 * vr, 0.05)
        edges = np.unique(np.concatenate([np.arange(0.0, min(3.0, R0), step),
                                          np.linspace(0.0, R0, int(np.ceil(40 * R0 / vr)) + 1)]))
        edges = edges[edges <= R0]
        if edges[-1] < R0:
            edges = np.append(edges, R0)
        r, w = gauss_panels(edges, 16)
        t, wt = power_rule(1.0 - a, 0.0, 1.0)
        rt = R0 / t
        r_all = np.concatenate([r, rt])
        w_all = np.concatenate([w, R0 * wt * t ** (a - 2.0)])
        out = np.zeros(self.kmax + 1)
        for sl in np.array_split(np.arange(r_all.size), max(1, r_all.size // 256)):
            rr = r_all[sl]
            z = np.sqrt(np.maximum(1.0 + rr[:, None] ** 2 - 2.0 * rr[:, None] * np.cos(th)[None, :], 0.0))
            Dv = self._D(z.ravel(), vr).reshape(z.shape)
            modes = sfft.rfft(Dv, axis=1).real[:, :self.kmax + 1] * (2.0 * np.pi / n_theta)
            out += w_all[sl] @ modes
        return out

    def _direct(self, vr, n_theta):
        # polar about e1 over B_vr(e1) of e^{ik theta_y} / |y| * Q_vr(z)
        K = self.kernel
        a, g, cq = self.alpha, K.gamma, K.cq
        phi, wphi = periodic_nodes(n_theta)
        half = 0.5 * vr
        z1, w1 = power_rule(a, 0.0, half)
        z2, w2 = gauss_panels([0.0, half], 16)
        z3, w3 = gauss_panels(np.linspace(half, vr, 9), 16)
        z = np.concatenate([z1, z2, z3])
        w = np.concatenate([w1 / g, w2 * z2 * cq * vr ** (a - 2.0) / g,
                            w3 * z3 * K.q(z3 / vr) / (g * z3 ** (2.0 - a))])
        Y1 = 1.0 + z[:, None] * np.cos(phi)[None, :]
        Y2 = z[:, None] * np.sin(phi)[None, :]
        ang = np.arctan2(Y2, Y1)
        inv = 1.0 / np.hypot(Y1, Y2)
        out = np.empty(self.kmax + 1)
        for k in self.ks:
            out[k] = w @ ((np.cos(k * ang) * inv) @ wphi)
        return out

    def _build_cumulative(self):
        # C_q(t) = int_0^t u^q h_k(u) du for q = alpha and the energy integral
        a = self.alpha
        tm = self.t_min
        x, w = gauss_panels(self.t, 16)
        hx = self._spl(np.log(x))
        base = self.M * tm ** (1 + a) / (1 + a) - self.c * tm ** (1 + a + self.p) / (1 + a + self.p)
        pieces = ((w * x ** a)[:, None] * hx).reshape(-1, 16, self.kmax + 1).sum(axis=1)
        cum = np.vstack([base, base + np.cumsum(pieces, axis=0)])
        self._cum = CubicSpline(np.log(self.t), cum, axis=0)
        # energy: int_0^1 t^(2a-1) h_k^2 dt
        i1 = np.searchsorted(self.t, 1.0)
        e0 = (self.M ** 2 * tm ** (2 * a) / (2 * a)
              - 2 * self.M * self.c * tm ** (2 * a + self.p) / (2 * a + self.p)
              + self.c ** 2 * tm ** (2 * a + 2 * self.p) / (2 * a + 2 * self.p))
        edges = np.concatenate([self.t[:i1], [1.0]])
        x, w = gauss_panels(edges, 16)
        hx = self._spl(np.log(x))
        self.energy_unit = e0 + ((w * x ** (2 * a - 1))[:, None] * hx ** 2).sum(axis=0)

    def h(self, t):
        """``h_k(t)``, shape ``t.shape + (kmax + 1,)``."""
        t = np.asarray(t, dtype=float)
        if self.diagnostic:
            return np.broadcast_to(self.M, t.shape + self.M.shape).copy()
        tc = np.clip(t, self.t_min, self.t_max)
        out = self._spl(np.log(tc))
        small = t < self.t_min
        if np.any(small):
            ts = t[small][..., None]
            out[small] = self.M - self.c * ts ** self.p
        big = t > self.t_max
        if np.any(big):
            # far field: t^alpha h_k = mass + c_k t^-2 + O(t^-4), c_k ~ 1 - k^2
            tb = t[big][..., None]
            out[big] = tb ** -self.alpha * (self.mass + self.c_far * (self.t_max / tb) ** 2)
        return out

    def cumulative(self, t):
        """``int_0^t u^alpha h_k(u) du``."""
        t = np.asarray(t, dtype=float)
        a = self.alpha
        if self.diagnostic:
            return self.M * t[..., None] ** (1 + a) / (1 + a)
        out = self._cum(np.log(np.clip(t, self.t_min, self.t_max)))
        small = t < self.t_min
        if np.any(small):
            ts = t[small][..., None]
            out[small] = self.M * ts ** (1 + a) / (1 + a) - self.c * ts ** (1 + a + self.p) / (1 + a + self.p)
        return out


@lru_cache(maxsize=32)
def modal_table(alpha, cutoff="exp-splice", kmax=16):
    """Cached ModalTable; tables are deterministic functions of their arguments."""
    return ModalTable(alpha, cutoff, kmax)


# -- identities ---------------------------------------------------------------

def composition_check(alpha, beta, points):
    """Relative errors of the kernel-level composition identity: the classical
    potential of order ``alpha`` of ``|y|^(beta-2) / gamma_beta`` is
    ``|x|^(alpha+beta-2) / gamma_(alpha+beta)``."""
    if not alpha + beta < 2:
        raise ValueError("composition needs alpha + beta < 2")
    gb = gamma_riesz(beta)
    f = lambda X, Y: np.hypot(X, Y) ** (beta - 2.0) / gb
    gab = gamma_riesz(alpha + beta)
    errs = []
    for x in np.atleast_2d(np.asarray(points, dtype=float)):
        v = riesz_point(f, alpha, x, singular=((0.0, 0.0), 2.0 - beta), decay=2.0 - beta)
        ex = np.hypot(*x) ** (alpha + beta - 2.0) / gab
        errs.append(abs(v / ex - 1.0))
    return np.array(errs)


def scaling_identity_check(profile, alpha, rho, x, cutoff="exp-splice"):
    """Relative residuals of the homogeneity identities of the potentials of a
    degree -1 field: ``I f(x) = |x|^(alpha-1) I f(x/|x|)`` and the same with the
    horizon rescaled to ``rho/|x|``."""
    x = np.asarray(x, dtype=float)
    lam = float(np.hypot(*x))
    u = x / lam
    f = profile.eval_xy
    sing = ((0.0, 0.0), 1.0)
    lhs = riesz_point(f, alpha, x, singular=sing, decay=1.0)
    rhs = lam ** (alpha - 1.0) * riesz_point(f, alpha, u, singular=sing, decay=1.0)
    k1 = HorizonKernel.for_alpha(alpha, rho, cutoff)
    k2 = HorizonKernel.for_alpha(alpha, rho / lam, cutoff)
    lhs_h = riesz_horizon_point(f, k1, x, singular=sing)
    rhs_h = lam ** (alpha - 1.0) * riesz_horizon_point(f, k2, u, singular=sing)
    rel = lambda a, b: float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))
    return {"classical": rel(lhs, rhs), "horizon": rel(lhs_h, rhs_h)}


def curl_grid(f):
    """Row-wise curl ``(d1 f12 - d2 f11, d1 f22 - d2 f21)`` by centred differences."""
    v = f.values
    d1 = np.gradient(v, f.h, axis=1, edge_order=2)
    d2 = np.gradient(v, f.h, axis=0, edge_order=2)
    c = d1[..., :, 1] - d2[..., :, 0]
    return f.like(c)


def square_loop(field, center, half):
    """Axis-aligned square loop through cell centres, counter-clockwise."""
    X, Y = field.centers()
    xs, ys = X[0], Y[:, 0]
    i0 = int(np.argmin(np.abs(xs - (center[0] - half))))
    i1 = int(np.argmin(np.abs(xs - (center[0] + half))))
    j0 = int(np.argmin(np.abs(ys - (center[1] - half))))
    j1 = int(np.argmin(np.abs(ys - (center[1] + half))))
    return (i0, j0, i1, j1)


def loop_vertices(field, loop):
    i0, j0, i1, j1 = loop
    X, Y = field.centers()
    x0, x1, y0, y1 = X[0, i0], X[0, i1], Y[j0, 0], Y[j1, 0]
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])


def circulation(field, loop):
    """``oint f . tau ds`` along a grid loop by the trapezoid rule (matrix rows)."""
    i0, j0, i1, j1 = loop
    v, h = field.values, field.h

    def trap(seg):
        return h * (seg[1:] + seg[:-1]).sum(axis=0) / 2.0

    bottom = trap(v[j0, i0:i1 + 1, ..., 0])
    right = trap(v[j0:j1 + 1, i1, ..., 1])
    top = -trap(v[j1, i0:i1 + 1, ..., 0])
    left = -trap(v[j0:j1 + 1, i0, ..., 1])
    return bottom + right + top + left


def curl_identity_check(f, kernel, loops, xi, point=(0.0, 0.0), potential=None):
    """Circulation of ``I^alpha_rho f`` against ``xi * int_enclosed Q(. - point)``.

    ``f`` is a GridField with ``Curl f = xi delta_point``.  Loops are index
    rectangles from ``square_loop``; loops passing within one cell of the
    singular point are rejected.
    """
    xi = np.asarray(xi, dtype=float)
    if potential is None:
        potential = riesz_horizon_grid(f, kernel).field
    p = np.asarray(point, dtype=float)
    rows = []
    full = kernel.l1_norm()
    for loop in loops:
        V = loop_vertices(f, loop)
        x0, y0 = V[0]
        x1, y1 = V[2]
        inside = x0 + f.h < p[0] < x1 - f.h and y0 + f.h < p[1] < y1 - f.h
        outside = p[0] < x0 - f.h or p[0] > x1 + f.h or p[1] < y0 - f.h or p[1] > y1 + f.h
        if not (inside or outside):
            raise ValueError("loop crosses the singular cell")
        c = circulation(potential, loop)
        mass = polygon_radial_integral(kernel.radial_mass, V - p,
                                       breaks=(0.5 * kernel.rho, kernel.rho))
        expected = xi * mass
        err = float(np.linalg.norm(c - expected))
        rows.append({"loop": loop, "circulation": c, "expected": expected,
                     "abs_err": err,
                     "rel_err": err / max(np.linalg.norm(expected), np.linalg.norm(xi) * full * 1e-300, 1e-300)
                     if np.linalg.norm(expected) > 0 else err / (np.linalg.norm(xi) * full)})
    return rows

"""Cutoff profiles, finite-horizon radial kernels and Riesz constants.

A kernel of order ``s`` and horizon ``rho`` is

    Q(x) = (1 + s) / gamma_{1-s} * int_{|x|}^inf wbar(r / rho) / r^(2+s) dr
         = q(|x| / rho) / (gamma_{1-s} |x|^(1+s)),

where ``q`` only depends on ``|x| / rho``.  On ``[0, 1/2]`` the profile is
flat, which gives ``q(t) = 1 + c t^(1+s)`` in closed form; the transition
band ``(1/2, 1)`` is tabulated once per kernel.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special
from scipy.interpolate import CubicSpline

from .quadrature import gauss_panels


def gamma_riesz(alpha):
    """Normalisation of the 2-D Riesz kernel |x|^(alpha-2) / gamma_alpha."""
    alpha = np.asarray(alpha, dtype=float)
    if np.any((alpha <= 0) | (alpha >= 2)):
        raise ValueError("gamma_riesz needs 0 < alpha < 2")
    val = np.pi * 2.0 ** alpha * special.gamma(alpha / 2) / special.gamma((2 - alpha) / 2)
    return float(val) if val.ndim == 0 else val


# -- cutoff profiles ------------------------------------------------------

def _smooth_step_exp(t):
    # C-infinity transition 1 -> 0 on (1/2, 1) built from exp(-1/x)
    u = np.clip(2.0 * np.asarray(t, dtype=float) - 1.0, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(u < 1.0, np.exp(-1.0 / np.where(u < 1.0, 1.0 - u, 1.0)), 0.0)
        b = np.where(u > 0.0, np.exp(-1.0 / np.where(u > 0.0, u, 1.0)), 0.0)
        out = a / (a + b)
    return out


def _smooth_step_quintic(t):
    u = np.clip(2.0 * np.asarray(t, dtype=float) - 1.0, 0.0, 1.0)
    return 1.0 - u ** 3 * (10.0 - 15.0 * u + 6.0 * u ** 2)


@dataclass(frozen=True)
class CutoffProfile:
    """Nonincreasing profile equal to 1 on [0, flat] and 0 from ``support`` on."""

    name: str
    flat: float = 0.5
    support: float = 1.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.name == "indicator-diagnostic":
            return np.ones_like(t)
        if self.name == "exp-splice":
            return _smooth_step_exp(t)
        if self.name == "quintic":
            return _smooth_step_quintic(t)
        raise ValueError(f"unknown cutoff {self.name!r}")

    @property
    def diagnostic(self):
        return self.name == "indicator-diagnostic"


def make_profile(name="exp-splice"):
    if name == "indicator-diagnostic":
        return CutoffProfile(name, flat=np.inf, support=np.inf)
    if name in ("exp-splice", "quintic"):
        return CutoffProfile(name)
    raise ValueError(f"unknown cutoff {name!r}")


# -- horizon kernel -------------------------------------------------------

@dataclass(frozen=True)
class HorizonKernel:
    """Radial kernel Q^s_rho with its quadrature cache.

    Use ``HorizonKernel.for_alpha(alpha, rho)`` for the Riesz order
    ``s = 1 - alpha``.
    """

    s: float
    rho: float
    profile: CutoffProfile = field(default_factory=make_profile)
    n_cache: int = 512

    def __post_init__(self):
        if not -1.0 < self.s < 1.0:
            raise ValueError("kernel order s must lie in (-1, 1)")
        if not self.rho > 0:
            raise ValueError("horizon must be positive")
        s = self.s
        object.__setattr__(self, "gamma", gamma_riesz(1.0 - s))
        if self.profile.diagnostic:
            object.__setattr__(self, "cq", 0.0)
            return
        # transition band: tail(t) = int_t^1 wbar(u) u^(-2-s) du on a log grid
        tau = np.exp(np.linspace(np.log(0.5), 0.0, self.n_cache))
        tau[-1] = 1.0
        x, w = gauss_panels(tau, 16)
        f = self.profile(x) * x ** (-2.0 - s) * w
        pieces = f.reshape(-1, 16).sum(axis=1)
        tail = np.concatenate([np.cumsum(pieces[::-1])[::-1], [0.0]])
        spline_tail = CubicSpline(np.log(tau), tail)
        T = float(tail[0])
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "cq", (1.0 + s) * T - 2.0 ** (1.0 + s))
        object.__setattr__(self, "_tail", spline_tail)
        # cumulative dimensionless mass m(t) = int_{1/2}^t q(u) u^(-s) du
        qx = (1.0 + s) * x * np.maximum(spline_tail(np.log(x)), 0.0)
        mp = (qx * w).reshape(-1, 16).sum(axis=1)
        mass = np.concatenate([[0.0], np.cumsum(mp)])
        object.__setattr__(self, "_mass", CubicSpline(np.log(tau), mass))
        object.__setattr__(self, "_mass_total", float(mass[-1]))

    @classmethod
    def for_alpha(cls, alpha, rho, cutoff="exp-splice"):
        if not 0.0 < alpha < 1.0 and cutoff != "indicator-diagnostic":
            raise ValueError("finite-horizon potentials are implemented for alpha in (0, 1)")
        return cls(1.0 - alpha, rho, make_profile(cutoff))

    @classmethod
    def from_config(cls, cfg):
        return cls.for_alpha(cfg["alpha"], cfg["rho"], cfg.get("cutoff", "exp-splice"))

    @property
    def alpha(self):
        return 1.0 - self.s

    @property
    def support(self):
        return self.rho * self.profile.support

    # dimensionless radial factor
    def q(self, t):
        """Cached ``q(t)`` with ``t = |x| / rho``."""
        t = np.asarray(t, dtype=float)
        if t.ndim == 0:
            return self.q(t[None])[0]
        s = self.s
        if self.profile.diagnostic:
            return np.ones_like(t)
        out = np.zeros_like(t)
        low = t <= 0.5
        out[low] = 1.0 + self.cq * t[low] ** (1.0 + s)
        mid = (t > 0.5) & (t < 1.0)
        tm = t[mid]
        out[mid] = (1.0 + s) * tm ** (1.0 + s) * np.maximum(self._tail(np.log(tm)), 0.0)
        return out

    def Q(self, r):
        """Kernel value as a function of the radius ``r > 0``."""
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            return self.q(r / self.rho) / (self.gamma * r ** (1.0 + self.s))

    def radial_mass(self, R):
        """``int_0^R Q(r) r dr`` (the mass of B_R divided by 2 pi)."""
        R = np.asarray(R, dtype=float)
        s, rho, g = self.s, self.rho, self.gamma
        if self.profile.diagnostic:
            return R ** (1.0 - s) / ((1.0 - s) * g)
        Rc = np.minimum(R, 0.5 * rho)
        out = Rc ** (1.0 - s) / (1.0 - s) + self.cq * rho ** (-1.0 - s) * Rc ** 2 / 2.0
        t = np.clip(R / rho, 0.5, 1.0)
        out = out + rho ** (1.0 - s) * self._mass(np.log(t))
        return out / g

    def l1_norm(self):
        if self.profile.diagnostic:
            return np.inf
        return float(2.0 * np.pi * self.radial_mass(self.rho))


def q_radial(kernel, t):
    """``q`` at radius ``t`` by adaptive Gauss-Kronrod quadrature over [t, rho]."""
    s, rho = kernel.s, kernel.rho
    if kernel.profile.diagnostic:
        return 1.0
    if t >= kernel.support:
        return 0.0
    if t <= 0.0:
        return 1.0
    tau = t / rho
    f = lambda u: kernel.profile(u) * u ** (-2.0 - s)
    pts = [p for p in (0.5,) if tau < p < 1.0]
    val, _ = integrate.quad(f, tau, 1.0, points=pts or None, epsabs=1e-10 * tau ** (-1 - s),
                            epsrel=1e-12, limit=200)
    return float((1.0 + s) * tau ** (1.0 + s) * val)


def Q_eval(kernel, x):
    """Kernel at points ``x`` (shape (..., 2)); +inf at the origin."""
    x = np.asarray(x, dtype=float)
    r = np.hypot(x[..., 0], x[..., 1])
    with np.errstate(divide="ignore", invalid="ignore"):
        val = kernel.Q(np.where(r > 0, r, 1.0))
    val = np.where(r > 0, val, np.inf)
    return float(val) if val.ndim == 0 else val


def Q_l1_norm(kernel):
    return kernel.l1_norm()


def bound_audit(kernel, samples=1000, rng=None, tol=1e-10):
    """Sample ``0 <= Q(x) gamma |x|^(2-alpha) <= 1`` inside the support and
    ``Q = 0`` outside; returns ``{"ok", "max_ratio", "min_ratio", "outside_max", "samples"}``."""
    rng = np.random.default_rng(rng)
    R = kernel.support
    r = R * np.sqrt(rng.uniform(0.0, 1.0, samples))
    r = r[r > 0]
    out = R * (1.0 + 2.0 * rng.uniform(0.0, 1.0, samples))
    th = rng.uniform(0.0, 2.0 * np.pi, samples)
    x = np.stack([r * np.cos(th[:r.size]), r * np.sin(th[:r.size])], axis=-1)
    ratio = Q_eval(kernel, x) * kernel.gamma * r ** (2.0 - kernel.alpha)
    outside = np.abs(kernel.Q(out))
    rep = {"max_ratio": float(ratio.max()), "min_ratio": float(ratio.min()),
           "outside_max": float(outside.max()), "samples": int(r.size + out.size)}
    rep["ok"] = bool(rep["min_ratio"] >= 0.0 and rep["max_ratio"] <= 1.0 + tol
                     and rep["outside_max"] == 0.0)
    return rep


# -- cell averages -----------------------------------------------------------

def _wrap(a):
    return (a + np.pi) % (2.0 * np.pi) - np.pi


def polygon_polar_integral(mass_fn, vertices, breaks=(), n=20):
    """Integral over a polygon of a density given in polar coordinates about 0.

    ``mass_fn(R, theta)`` must return ``int_0^R f(r, theta) r dr`` (arrays of
    shape ``(len(R),) + component_shape``).  The polygon is split
    into signed triangles (0, v_a, v_b), so the origin may lie inside,
    outside or on the boundary.  ``breaks`` are radii where ``mass_fn`` has
    reduced smoothness; the angular rule is split where the edge crosses them.
    """
    V = np.asarray(vertices, dtype=float)
    total = 0.0
    x, w = np.polynomial.legendre.leggauss(n)
    for k in range(len(V)):
        a, b = V[k], V[(k + 1) % len(V)]
        edge = b - a
        L = np.hypot(*edge)
        normal = np.array([edge[1], -edge[0]]) / L
        d = float(a @ normal)
        if abs(d) < 1e-14 * max(1.0, L):
            continue
        if d < 0:
            normal, d = -normal, -d
        th_e = np.arctan2(normal[1], normal[0])
        ta = np.arctan2(a[1], a[0])
        dth = _wrap(np.arctan2(b[1], b[0]) - ta)
        lo, hi = (ta, ta + dth) if dth > 0 else (ta + dth, ta)
        cuts = [lo, hi]
        for Rb in breaks:
            if np.isfinite(Rb) and d < Rb:
                c = np.arccos(d / Rb)
                for cand in (th_e - c, th_e + c):
                    for shift in (-2 * np.pi, 0.0, 2 * np.pi):
                        z = cand + shift
                        if lo < z < hi:
                            cuts.append(z)
        cuts = np.sort(cuts)
        acc = 0.0
        for c0, c1 in zip(cuts[:-1], cuts[1:]):
            th = 0.5 * (c0 + c1) + 0.5 * (c1 - c0) * x
            R = d / np.cos(th - th_e)
            acc = acc + 0.5 * (c1 - c0) * np.tensordot(w, mass_fn(R, th), axes=(0, 0))
        total += np.sign(dth) * acc
    return total


def polygon_radial_integral(mass_fn, vertices, breaks=(), n=20):
    """Radial special case: ``mass_fn(R) = int_0^R f(r) r dr``."""
    return polygon_polar_integral(lambda R, th: mass_fn(R), vertices, breaks, n)


def _square(center, h):
    cx, cy = center
    e = 0.5 * h
    return np.array([[cx - e, cy - e], [cx + e, cy - e], [cx + e, cy + e], [cx - e, cy + e]])


def Q_cell_average(kernel, cell_center, h, near=2.0, n_gauss=8, method="polygon"):
    """Average of Q over the square cell of side ``h`` centred at ``cell_center``.

    Cells within ``near * h`` of the singularity are integrated exactly in
    polar coordinates (finite also for the cell containing the origin);
    other cells use an ``n_gauss``^2 tensor Gauss rule.  ``method="disc"``
    replaces a cell containing the origin by the disc of equal area and
    returns the closed-form average of the classical majorant times q there.
    """
    c = np.asarray(cell_center, dtype=float)
    if method == "disc" and abs(c[0]) <= h / 2 and abs(c[1]) <= h / 2:
        r_eq = h / np.sqrt(np.pi)
        a = kernel.alpha
        return float(2.0 / a * r_eq ** (a - 2.0) / kernel.gamma * kernel.q(r_eq / kernel.rho))
    V = _square(c, h)
    # distance from origin to the cell
    dx = max(abs(c[0]) - h / 2, 0.0)
    dy = max(abs(c[1]) - h / 2, 0.0)
    dist = np.hypot(dx, dy)
    if dist >= kernel.support:
        return 0.0
    if dist < near * h:
        val = polygon_radial_integral(kernel.radial_mass, V,
                                      breaks=(0.5 * kernel.rho, kernel.rho))
        return float(val) / h ** 2
    g, wg = np.polynomial.legendre.leggauss(n_gauss)
    px = c[0] + 0.5 * h * g
    py = c[1] + 0.5 * h * g
    R = np.hypot(px[None, :], py[:, None])
    return float(0.25 * np.einsum("i,j,ij->", wg, wg, kernel.Q(R)))


def kernel_stencil(kernel, h, near=2.0, n_gauss=8):
    """Cell-averaged kernel on offsets ``(a h, b h)``, ``|a|, |b| <= m``.

    Returns ``(stencil, m)`` with ``stencil[b + m, a + m]``.
    """
    if not np.isfinite(kernel.support):
        raise ValueError("diagnostic kernels have unbounded support")
    m = int(np.ceil(kernel.support / h + 0.5))
    idx = np.arange(-m, m + 1)
    A, B = np.meshgrid(idx * h, idx * h)
    dx = np.maximum(np.abs(A) - h / 2, 0.0)
    dy = np.maximum(np.abs(B) - h / 2, 0.0)
    dist = np.hypot(dx, dy)
    out = np.zeros_like(A)
    far = (dist >= near * h) & (dist < kernel.support)
    g, wg = np.polynomial.legendre.leggauss(n_gauss)
    off = 0.5 * h * g
    PX = A[far][:, None, None] + off[None, None, :]
    PY = B[far][:, None, None] + off[None, :, None]
    vals = kernel.Q(np.hypot(PX, PY))
    out[far] = 0.25 * np.einsum("i,j,kij->k", wg, wg, vals)
    for jb, ia in zip(*np.nonzero(dist < near * h)):
        out[jb, ia] = Q_cell_average(kernel, (A[jb, ia], B[jb, ia]), h, near=near)
    return out, m

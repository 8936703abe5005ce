"""Dislocation measures, admissible strains, the regularised energy and the
constructive recovery sequence for a uniform dislocation density.

Strains carrying dislocations are represented as

    beta = regular + sum_i carrier_i(x - x_i) * cut(|x - x_i| / r_c),

with a bounded grid part and analytic degree -1 carriers (eta or zeta) per
atom.  The potential of the bounded part is a grid convolution; the carriers
are handled through their angular modes, so no singular value is ever
sampled on the grid.  The energy near each atom is integrated in polar
coordinates on a patch, blended with the grid quadrature by a smooth
partition of unity.
"""

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage, sparse

from .cell_self_energy import (BurgersLattice, EtaPotential, conjugate_gradient,
                               psi_quadratic_form, relax_phi)
from .elastic_core import ElasticTensor, make_isotropic
from .gridfield import GridField, cell_centers
from .kernels import HorizonKernel, _smooth_step_exp, _smooth_step_quintic
from .quadrature import gauss_panels, geometric_edges, periodic_nodes, power_rule
from .riesz_transform import curl_grid, riesz_horizon_grid
from .singular_fields import loop_circulation, solve_eta, zeta_profile

_J = np.array([[0.0, -1.0], [1.0, 0.0]])


# -- geometry -------------------------------------------------------------------

@dataclass(frozen=True)
class Rectangle:
    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError("degenerate rectangle")

    @classmethod
    def from_list(cls, v):
        return cls(*map(float, v))

    def to_list(self):
        return [self.x0, self.y0, self.x1, self.y1]

    @property
    def area(self):
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def boundary_distance(self, p):
        """Signed distance to the boundary, positive inside."""
        p = np.asarray(p, dtype=float)
        return np.minimum(np.minimum(p[..., 0] - self.x0, self.x1 - p[..., 0]),
                          np.minimum(p[..., 1] - self.y0, self.y1 - p[..., 1]))

    def contains_ball(self, c, r, tol=1e-12):
        return bool(self.boundary_distance(c) >= r - tol)

    def mask(self, X, Y):
        return (X > self.x0) & (X < self.x1) & (Y > self.y0) & (Y < self.y1)

    def count(self, pts):
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        return int(self.mask(pts[:, 0], pts[:, 1]).sum())


# -- measures -------------------------------------------------------------------

@dataclass
class DislocationMeasure:
    """``sum_i xi_i delta_{x_i}`` on a rectangular domain with horizon ``rho``."""

    points: np.ndarray
    burgers: np.ndarray
    domain: Rectangle
    rho: float = 0.0
    lattice: Optional[BurgersLattice] = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)
        self.burgers = np.asarray(self.burgers, dtype=float).reshape(-1, 2)
        if self.points.shape != self.burgers.shape:
            raise ValueError("points and Burgers vectors differ in number")

    def __len__(self):
        return self.points.shape[0]

    @classmethod
    def from_atoms(cls, atoms, domain, rho=0.0, lattice=None):
        pts = [a[0] for a in atoms]
        bs = [a[1] for a in atoms]
        return cls(np.reshape(pts, (-1, 2)), np.reshape(bs, (-1, 2)), domain, rho, lattice)

    def total(self):
        return self.burgers.sum(axis=0) if len(self) else np.zeros(2)


@dataclass
class AdmissibilityReport:
    ok: bool
    separation: list
    containment: list
    lattice: list


def validate_measure(mu, tol=1e-12):
    """List every separation pair, containment failure and non-lattice vector."""
    sep, cont, lat = [], [], []
    n = len(mu)
    if n > 1:
        d = np.linalg.norm(mu.points[:, None] - mu.points[None], axis=2)
        I, K = np.triu_indices(n, 1)
        bad = d[I, K] < 2.0 * mu.rho * (1.0 - tol) - tol
        sep = [(int(i), int(k), float(d[i, k])) for i, k in zip(I[bad], K[bad])]
    for i, x in enumerate(mu.points):
        if not mu.domain.contains_ball(x, mu.rho, tol):
            cont.append(i)
    for i, b in enumerate(mu.burgers):
        if not np.any(b) or (mu.lattice is not None and not mu.lattice.contains(b, 1e-9)):
            lat.append(i)
    return AdmissibilityReport(not (sep or cont or lat), sep, cont, lat)


def approximate_measure(xi, A, N, decomposition, rho=0.0, domain=None, lattice=None):
    """Atoms of ``N``-scaled density ``xi chi_A`` on a square sublattice.

    ``decomposition`` is a list of ``(lam_k, xi_k)`` with ``sum lam_k xi_k = xi``;
    sites have spacing ``2 r`` with ``r = 1 / (2 sqrt(Lambda N))``, are kept
    when ``B_r(site)`` lies in a rectangle of ``A``, and are assigned to the
    species in an interleaved order that keeps each count near ``lam_k / Lambda``
    of the sites.
    """
    xi = np.asarray(xi, dtype=float)
    A = [A] if isinstance(A, Rectangle) else list(A)
    domain = domain if domain is not None else _bounding(A)
    dec = [(float(l), np.asarray(v, dtype=float)) for l, v in decomposition if l > 0]
    if not dec:
        if np.any(xi):
            raise ValueError("empty decomposition for nonzero xi")
        return DislocationMeasure(np.zeros((0, 2)), np.zeros((0, 2)), domain, rho, lattice)
    if np.linalg.norm(sum(l * v for l, v in dec) - xi) > 1e-9 * max(1.0, np.linalg.norm(xi)):
        raise ValueError("decomposition does not sum to xi")
    Lam = sum(l for l, _ in dec)
    r = placement_radius(Lam, N)
    sites = []
    for rect in A:
        for ax in (0, 1):
            lo, hi = (rect.x0, rect.x1) if ax == 0 else (rect.y0, rect.y1)
            if hi - lo < 2 * r:
                raise ValueError(f"patch too small for N={N}: side {hi - lo:.3g} < 2r = {2 * r:.3g}")
        nx = int(np.floor((rect.x1 - rect.x0) / (2 * r) + 1e-9))
        ny = int(np.floor((rect.y1 - rect.y0) / (2 * r) + 1e-9))
        # centre the block of sites inside the rectangle; scan row-major
        ox = 0.5 * (rect.x0 + rect.x1) - (nx - 1) * r
        oy = 0.5 * (rect.y0 + rect.y1) - (ny - 1) * r
        for jy in range(ny):
            for ix in range(nx):
                sites.append((ox + 2 * r * ix, oy + 2 * r * jy))
    sites = np.array(sites, dtype=float).reshape(-1, 2)
    counts = np.zeros(len(dec))
    share = np.array([l for l, _ in dec]) / Lam
    species = []
    for s in range(len(sites)):
        k = int(np.argmax(share * (s + 1) - counts))
        counts[k] += 1
        species.append(k)
    burgers = np.array([dec[k][1] for k in species]).reshape(-1, 2)
    return DislocationMeasure(sites, burgers, domain, rho, lattice)


def placement_radius(Lam, N):
    return 1.0 / (2.0 * np.sqrt(Lam * N))


def _bounding(rects):
    return Rectangle(min(r.x0 for r in rects), min(r.y0 for r in rects),
                     max(r.x1 for r in rects), max(r.y1 for r in rects))


# -- strain fields --------------------------------------------------------------

@dataclass
class StrainField:
    """Bounded grid part plus analytic singular carriers at atom positions.

    ``carriers[i]`` is an AngularProfile (``eta`` or ``zeta``); with
    ``cutoff_radius`` set, carrier ``i`` is multiplied by
    ``quintic(|x - x_i| / cutoff_radius)`` (1 on the inner half, 0 outside).
    """

    regular: Optional[GridField]
    points: np.ndarray
    carriers: list
    cutoff_radius: Optional[float] = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)
        if len(self.carriers) != len(self.points):
            raise ValueError("one carrier per atom required")

    def cut(self, r):
        if self.cutoff_radius is None:
            return np.ones_like(r)
        return _smooth_step_quintic(r / self.cutoff_radius)

    def singular_xy(self, X, Y, skip=None):
        out = np.zeros(np.shape(X) + (2, 2))
        for i, (p, prof) in enumerate(zip(self.points, self.carriers)):
            if i == skip:
                continue
            dx, dy = X - p[0], Y - p[1]
            r = np.hypot(dx, dy)
            ok = r > 0
            c = self.cut(r)
            ok &= c > 0
            if not ok.any():
                continue
            safe = np.where(ok, r, 1.0)
            G = prof.eval(np.arctan2(dy, dx)) / safe[..., None, None]
            out += np.where(ok[..., None, None], G * c[..., None, None], 0.0)
        return out

    def regular_xy(self, X, Y):
        if self.regular is None:
            return np.zeros(np.shape(X) + (2, 2))
        return interpolate(self.regular, X, Y)

    def eval_xy(self, X, Y):
        X, Y = np.asarray(X, dtype=float), np.asarray(Y, dtype=float)
        return self.regular_xy(X, Y) + self.singular_xy(X, Y)

    def bounded_part(self, origin, h, nx, ny):
        """``regular - sum_i carrier_i (1 - cut_i)`` on a grid (zero at the cores)."""
        X, Y = cell_centers(origin, h, nx, ny)
        out = np.zeros((ny, nx, 2, 2))
        if self.regular is not None:
            out += self.regular_xy(X, Y)
        if self.cutoff_radius is not None:
            for p, prof in zip(self.points, self.carriers):
                dx, dy = X - p[0], Y - p[1]
                r = np.hypot(dx, dy)
                w = 1.0 - self.cut(r)
                ok = w > 0
                safe = np.where(ok, r, 1.0)
                G = prof.eval(np.arctan2(dy, dx)) / safe[..., None, None]
                out -= np.where(ok[..., None, None], G * w[..., None, None], 0.0)
        return GridField(origin, h, out)


def interpolate(field, X, Y, order=3):
    """Spline interpolation of a cell-centred GridField at points."""
    X, Y = np.asarray(X, dtype=float), np.asarray(Y, dtype=float)
    ci = (X - field.origin[0]) / field.h - 0.5
    cj = (Y - field.origin[1]) / field.h - 0.5
    flat = field.values.reshape(field.ny, field.nx, -1)
    out = np.stack([ndimage.map_coordinates(flat[..., c], [cj.ravel(), ci.ravel()],
                                            order=order, mode="nearest")
                    for c in range(flat.shape[2])], axis=-1)
    return out.reshape(X.shape + field.component_shape)


def canonical_strain(mu, grid, elasticity=None):
    """``sum_i zeta_{xi_i}(. - x_i)``; ``grid`` is ``(origin, h, nx, ny)`` or a
    GridField whose geometry is reused for the (zero) regular part."""
    C = elasticity if elasticity is not None else make_isotropic(1.0, 1.0)
    if isinstance(grid, GridField):
        origin, h, nx, ny = grid.origin, grid.h, grid.nx, grid.ny
    else:
        origin, h, nx, ny = grid
    reg = GridField(origin, h, np.zeros((ny, nx, 2, 2)))
    cache = {}
    carriers = []
    for b in mu.burgers:
        key = tuple(b)
        if key not in cache:
            cache[key] = zeta_profile(C, b)
        carriers.append(cache[key])
    return StrainField(reg, mu.points, carriers)


# -- energy ---------------------------------------------------------------------

@dataclass
class EnergyBreakdown:
    total: float
    self: float
    inter: float
    per_atom: list = field(default_factory=list)
    moments: Optional[np.ndarray] = None


def _omega_grid(field, omega):
    X, Y = field.centers()
    return omega.mask(X, Y)


def energy_E_alpha(mu, beta, C, kernel, omega=None, tests=(), n_theta=96):
    """``1/2 int_Omega C I beta : I beta`` split over ``U B_rho(x_i)`` and the rest.

    ``beta`` is a GridField (no singular part) or a StrainField.  ``tests``
    are optional weights ``w(X, Y)``; their integrals against ``I beta`` are
    returned in ``moments`` (shape ``(len(tests), 2, 2)``).
    """
    omega = omega if omega is not None else mu.domain
    if isinstance(beta, GridField):
        return _energy_grid(mu, beta, C, kernel, omega, tests)
    return _energy_patched(mu, beta, C, kernel, omega, tests, n_theta)


def _energy_grid(mu, beta, C, kernel, omega, tests):
    om = _omega_grid(beta, omega)
    pot = riesz_horizon_grid(beta, kernel, omega_mask=om).field
    e = 0.5 * C.energy_density(pot.values) * beta.h ** 2
    X, Y = beta.centers()
    in_core = np.zeros_like(om)
    per = []
    for p in mu.points:
        core = om & ((X - p[0]) ** 2 + (Y - p[1]) ** 2 < kernel.rho ** 2)
        per.append(float(e[core & ~in_core].sum()))
        in_core |= core
    s = float(e[in_core].sum())
    it = float(e[om & ~in_core].sum())
    mom = np.array([np.einsum("ji,jikl->kl", np.where(om, w(X, Y), 0.0), pot.values) * beta.h ** 2
                    for w in tests]) if tests else None
    return EnergyBreakdown(s + it, s, it, per, mom)


def _patch_radius(mu, beta, omega, h):
    pts = beta.points
    if len(pts) > 1:
        d = np.linalg.norm(pts[:, None] - pts[None], axis=2)
        np.fill_diagonal(d, np.inf)
        half = 0.5 * d.min()
    else:
        half = np.inf
    a = 0.95 * min(half, float(np.min(omega.boundary_distance(pts))))
    return a


def _energy_patched(mu, beta, C, kernel, omega, tests, n_theta):
    rho, alpha = kernel.rho, kernel.alpha
    reg = beta.regular
    if reg is None:
        raise ValueError("StrainField needs a regular grid part to fix the quadrature grid")
    h = reg.h
    pts = beta.points
    pots = {}
    potentials = []
    for prof in beta.carriers:
        key = id(prof)
        if key not in pots:
            pots[key] = EtaPotential(prof, alpha, rho, kernel.profile.name)
        potentials.append(pots[key])
    a = _patch_radius(mu, beta, omega, h) if len(pts) else np.inf
    if len(pts) and (a < 2.5 * rho or a < 6 * h):
        raise ValueError(f"patch radius {a:.3g} too small (rho={rho:.3g}, h={h:.3g})")

    bounded = beta.bounded_part(reg.origin, h, reg.nx, reg.ny)
    om = _omega_grid(bounded, omega)
    smooth = riesz_horizon_grid(bounded, kernel, omega_mask=om).field

    # grid quadrature of (1 - sum chi_i) e over Omega
    X, Y = bounded.centers()
    F = smooth.values.copy()
    wgt = np.ones(X.shape)
    for p, pot in zip(pts, potentials):
        dx, dy = X - p[0], Y - p[1]
        r = np.hypot(dx, dy)
        wgt -= _smooth_step_exp(r / a)
        far = r > 0.25 * a
        F += np.where(far[..., None, None],
                      pot.eval_xy(np.where(far, dx, a), np.where(far, dy, 0.0)), 0.0)
    wgt = np.where(om, np.clip(wgt, 0.0, 1.0), 0.0)
    e = 0.5 * C.energy_density(F)
    inter = float((wgt * e).sum() * h * h)
    mom = [np.einsum("ji,jikl->kl", wgt * w(X, Y), F) * h * h for w in tests]

    th, wth = periodic_nodes(n_theta)
    cos, sin = np.cos(th), np.sin(th)
    self_parts = []
    for i, (p, pot) in enumerate(zip(pts, potentials)):
        def fields(rr):
            PX = p[0] + rr[:, None] * cos[None, :]
            PY = p[1] + rr[:, None] * sin[None, :]
            Fs = interpolate(smooth, PX, PY)
            for k, (q, pk) in enumerate(zip(pts, potentials)):
                if k != i:
                    Fs = Fs + pk.eval_xy(PX - q[0], PY - q[1])
            # reduced carrier r^(1-alpha) B, taken from (r, theta) to avoid cancellation
            Bt = pot.reduced(np.broadcast_to(rr[:, None], PX.shape), np.broadcast_to(th, PX.shape))
            return PX, PY, Fs, Bt

        # annulus rho < r < a, weighted by chi
        r1, w1 = gauss_panels(np.unique(np.concatenate([geometric_edges(rho, a, 1.4),
                                                        [2 * rho] if 2 * rho < a else []])), 16)
        PX, PY, Fs, Bt = fields(r1)
        chi = _smooth_step_exp(r1 / a)
        Ft = Fs + r1[:, None, None, None] ** (alpha - 1.0) * Bt
        ww = (w1 * r1 * chi)[:, None] * wth[None, :]
        inter += float((ww * 0.5 * C.energy_density(Ft)).sum())
        for m, w in enumerate(tests):
            mom[m] = mom[m] + np.einsum("rt,rtkl->kl", ww * w(PX, PY), Ft)

        # core disc: Parseval for the carrier, quadrature for the mixed terms
        # weights of int_0^rho f(r) r^alpha dr (power rule near 0, panels up to rho)
        rc1, wc1 = power_rule(1.0 + alpha, 0.0, 0.5 * rho)
        rc2, wc2 = gauss_panels(np.linspace(0.5 * rho, rho, 5), 16)
        rc = np.concatenate([rc1, rc2])
        wa = np.concatenate([wc1, wc2 * rc2 ** alpha])
        PX, PY, Fs, Bt = fields(rc)
        wB = wa[:, None] * wth[None, :]                  # against the reduced carrier
        ws = (wa * rc ** (1.0 - alpha))[:, None] * wth[None, :]   # = r dr dtheta
        cross = float((wB * np.einsum("rtij,rtij->rt", C.apply(Fs), Bt)).sum())
        core = 0.5 * pot.disc_energy() + cross + float((ws * 0.5 * C.energy_density(Fs)).sum())
        self_parts.append(core)
        for m, w in enumerate(tests):
            wt = w(PX, PY)
            mom[m] = mom[m] + np.einsum("rt,rtkl->kl", ws * wt, Fs) \
                + np.einsum("rt,rtkl->kl", wB * wt, Bt)

    s = float(sum(self_parts))
    return EnergyBreakdown(s + inter, s, inter, self_parts,
                           np.array(mom) if tests else None)


# -- regimes --------------------------------------------------------------------

REGIMES = ("critical", "subcritical", "supercritical")


@dataclass
class RegimeConfig:
    """Sequences ``alpha_j, rho_j, N_j`` for one scaling regime.

    ``inv_N`` stores ``1 / N_j``; when ``N_j = 1 / (2 alpha_j)`` it is stored
    as ``2 alpha_j`` itself so that the critical and subcritical prefactors
    agree to the last bit.
    """

    regime: str
    alphas: np.ndarray
    rhos: np.ndarray
    Ns: Optional[np.ndarray] = None
    inv_N: np.ndarray = field(init=False, repr=False)
    flags: dict = field(init=False, default_factory=dict)

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")
        self.alphas = np.asarray(self.alphas, dtype=float)
        self.rhos = np.asarray(self.rhos, dtype=float)
        if self.alphas.shape != self.rhos.shape:
            raise ValueError("alpha and rho sequences differ in length")
        two_a = 2.0 * self.alphas
        if self.Ns is None:
            if self.regime != "critical":
                raise ValueError(f"{self.regime} regime needs an explicit N sequence")
            self.Ns = 1.0 / two_a
        self.Ns = np.asarray(self.Ns, dtype=float)
        if self.Ns.shape != self.alphas.shape:
            raise ValueError("N sequence length mismatch")
        matched = np.abs(self.Ns * two_a - 1.0) <= 1e-12
        if self.regime == "critical" and not matched.all():
            raise ValueError("critical regime requires N_j = 1/(2 alpha_j)")
        self.inv_N = np.where(matched, two_a, 1.0 / self.Ns)
        self.flags = assumption_monitor(self)

    def __len__(self):
        return self.alphas.size

    def at(self, j):
        if not 0 <= j < len(self):
            raise IndexError(f"sequence index {j} out of range")
        return float(self.alphas[j]), float(self.rhos[j]), float(self.Ns[j])

    @classmethod
    def from_config(cls, cfg):
        alphas = np.asarray(cfg["alphas"], dtype=float)
        if "rhos" in cfg:
            rhos = cfg["rhos"]
        else:
            rule = cfg.get("rho_rule", "alpha^2")
            rhos = {"alpha^2": alphas ** 2, "alpha": alphas}[rule]
        return cls(cfg.get("regime", "critical"), alphas, rhos, cfg.get("Ns"))


def assumption_monitor(cfg):
    """Strict decrease along j of rho, 1/N, |alpha log rho| and N rho^2."""
    seqs = {"rho": cfg.rhos, "inv_N": cfg.inv_N,
            "alpha_log_rho": np.abs(cfg.alphas * np.log(cfg.rhos)),
            "N_rho2": cfg.Ns * cfg.rhos ** 2}
    return {k: bool(np.all(np.diff(v) < 0)) for k, v in seqs.items()}


def prefactor(config, j):
    a, _, _ = config.at(j)
    two_a, inv = 2.0 * a, config.inv_N[j]
    if config.regime == "critical":
        return two_a * two_a
    if config.regime == "subcritical":
        return two_a * inv
    return inv * inv


def regime_functional(config, j, E):
    return prefactor(config, j) * E


# -- limit functional -----------------------------------------------------------

@dataclass
class DensitySpec:
    """Piecewise-constant dislocation density ``xi chi_A``, A a union of rectangles."""

    xi: np.ndarray
    rectangles: list

    def __post_init__(self):
        self.xi = np.asarray(self.xi, dtype=float)
        self.rectangles = [r if isinstance(r, Rectangle) else Rectangle.from_list(r)
                           for r in self.rectangles]

    @property
    def area(self):
        return sum(r.area for r in self.rectangles)

    def on_grid(self, origin, h, nx, ny):
        X, Y = cell_centers(origin, h, nx, ny)
        m = np.zeros(X.shape, dtype=bool)
        for r in self.rectangles:
            m |= r.mask(X, Y)
        return GridField(origin, h, m[..., None] * self.xi)


@dataclass
class LimitState:
    mu: object                 # DensitySpec, DislocationMeasure or None
    beta: GridField
    omega: Rectangle
    R: float
    center: tuple
    residual: Optional[float] = None


def compatibility_residual(beta, mu, omega, R, center=None):
    """Relative H^-1 size of ``Curl beta - mu`` over the interior of Omega.

    The residual ``r`` is dualised by one Poisson solve on ``B_R``:
    ``|r|_{-1}^2 = -int z . r`` with ``Lap z = r``; it is normalised by
    ``|mu|_{-1} + |beta|_{L2(Omega)}``.
    """
    X, Y = beta.centers()
    om = omega.mask(X, Y)
    inner = ndimage.binary_erosion(om, iterations=2)
    curl = curl_grid(beta).values
    m = np.zeros_like(curl) if mu is None else _density_values(mu, beta)
    r = np.where(inner[..., None], curl - m, 0.0)
    h2 = beta.h ** 2

    def hm1(v):
        if not np.any(v):
            return 0.0
        z = poisson_disc_solve(beta.like(v, None), R, center).values
        return float(np.sqrt(max(-(z * v).sum() * h2, 0.0)))

    den = hm1(np.where(inner[..., None], m, 0.0)) + float(
        np.sqrt((beta.values[om] ** 2).sum() * h2))
    num = hm1(r)
    return num / den if den > 0 else (0.0 if num == 0 else np.inf)


def _density_values(mu, grid):
    if isinstance(mu, DensitySpec):
        return mu.on_grid(grid.origin, grid.h, grid.nx, grid.ny).values
    if isinstance(mu, GridField):
        return mu.values
    raise TypeError("density must be a DensitySpec or GridField")


def limit_functional(state, C, phi_evaluator, regime="critical", threshold=1e-3):
    """Elastic term plus plastic term, or ``inf`` when the curl condition fails."""
    beta = state.beta
    X, Y = beta.centers()
    om = state.omega.mask(X, Y)
    elastic = 0.5 * float(C.energy_density(beta.values)[om].sum() * beta.h ** 2)
    if regime == "supercritical":
        return elastic
    target = state.mu if regime == "critical" else None
    res = compatibility_residual(beta, target, state.omega, state.R, state.center)
    state.residual = res
    if res > threshold:
        return np.inf
    return elastic + plastic_term(state.mu, phi_evaluator)


def plastic_term(mu, phi_evaluator):
    if mu is None:
        return 0.0
    if isinstance(mu, DensitySpec):
        return mu.area * phi_evaluator(mu.xi) if np.any(mu.xi) else 0.0
    if isinstance(mu, DislocationMeasure):
        return float(sum(phi_evaluator(b) for b in mu.burgers))
    raise TypeError("unsupported measure")


# -- Poisson solver on a disc ---------------------------------------------------

def _disc_operator(origin, h, nx, ny, R, center):
    X, Y = cell_centers(origin, h, nx, ny)
    dX, dY = X - center[0], Y - center[1]
    inside = dX ** 2 + dY ** 2 < R ** 2
    idx = -np.ones(X.shape, dtype=int)
    idx[inside] = np.arange(inside.sum())
    n = int(inside.sum())
    diag = np.zeros(n)
    rows, cols = [], []
    jj, ii = np.nonzero(inside)
    me = idx[jj, ii]
    for dj, di in ((0, 1), (0, -1), (1, 0), (-1, 0)):
        j2, i2 = jj + dj, ii + di
        ok = (j2 >= 0) & (j2 < ny) & (i2 >= 0) & (i2 < nx)
        nb = np.full(jj.shape, -1)
        nb[ok] = idx[j2[ok], i2[ok]]
        inn = nb >= 0
        rows.append(me[inn])
        cols.append(nb[inn])
        diag[me[inn]] += 1.0
        # ghost value by linear extrapolation through the zero on the circle
        out = ~inn
        px, py = dX[jj[out], ii[out]], dY[jj[out], ii[out]]
        ex, ey = di, dj
        b = px * ex + py * ey
        c = px ** 2 + py ** 2 - R ** 2
        s = -b + np.sqrt(b * b - c)
        theta = np.clip(s / h, 1e-3, 1.0)
        diag[me[out]] += 1.0 / theta
    rows, cols = np.concatenate(rows), np.concatenate(cols)
    off = sparse.csr_matrix((-np.ones(rows.size), (rows, cols)), shape=(n, n))
    A = (sparse.diags(diag) + off).tocsr() / h ** 2      # A = -Laplacian
    return A, inside


_OPERATORS = {}


def poisson_disc_solve(rhs, R, center=None, tol=1e-10):
    """Solve ``Lap w = rhs`` in ``B_R`` with ``w = 0`` on the circle.

    Five-point Laplacian on the cells with centres in the disc; neighbours
    outside use the ghost value of the linear interpolant vanishing on the
    circle, which keeps the matrix symmetric and the error O(h^2).
    """
    if center is None:
        center = (rhs.origin[0] + 0.5 * rhs.nx * rhs.h, rhs.origin[1] + 0.5 * rhs.ny * rhs.h)
    key = (rhs.origin, rhs.h, rhs.nx, rhs.ny, float(R), tuple(map(float, center)))
    if key not in _OPERATORS:
        A, inside = _disc_operator(rhs.origin, rhs.h, rhs.nx, rhs.ny, R, center)
        _OPERATORS.clear()
        _OPERATORS[key] = (A, inside, 1.0 / A.diagonal())
    A, inside, pre = _OPERATORS[key]
    vals = rhs.values.reshape(rhs.ny, rhs.nx, -1)
    out = np.zeros_like(vals)
    for c in range(vals.shape[2]):
        b = -vals[inside, c]
        if not np.any(b):
            continue
        x, _, _ = conjugate_gradient(A, b, tol=tol, maxiter=20000, precond=pre)
        res = np.linalg.norm(A @ x - b) / np.linalg.norm(b)
        if res > 1e-8:
            raise RuntimeError(f"Poisson residual {res:.2e} above 1e-8")
        out[inside, c] = x
    return GridField(rhs.origin, rhs.h, out.reshape(rhs.values.shape), inside)


def gradient_rotated(w):
    """``grad w J^T`` for a vector GridField: row i is ``(-d2 w_i, d1 w_i)``."""
    v = w.values
    d1 = np.gradient(v, w.h, axis=1)
    d2 = np.gradient(v, w.h, axis=0)
    out = np.stack([-d2, d1], axis=-1)
    return GridField(w.origin, w.h, out)


# -- inverse of the potential ---------------------------------------------------

def _symbol(kernel, h, shape):
    from .kernels import kernel_stencil
    st, m = kernel_stencil(kernel, h)
    full = np.zeros(shape)
    full[:2 * m + 1, :2 * m + 1] = st * h * h
    full = np.roll(full, (-m, -m), axis=(0, 1))
    return np.fft.rfft2(full).real, m


def apply_inverse_P(target, kernel, floor=1e-6, band=0.5, band_tol=1e-6):
    """Spectral deconvolution of ``target`` by the grid symbol of the kernel.

    The symbol is floored at ``floor * max |symbol|``.  A warning is issued
    when the floor is active on modes the target occupies, or when the target
    carries more than ``band_tol`` of its energy beyond ``band`` times the
    Nyquist frequency (no accuracy can be promised there).
    """
    vals = target.values.reshape(target.ny, target.nx, -1)
    if not np.any(vals):
        return target.like(np.zeros_like(target.values))
    st_m = int(np.ceil(kernel.rho / target.h)) + 3
    shape = (1 << (target.ny + 2 * st_m - 1).bit_length(), 1 << (target.nx + 2 * st_m - 1).bit_length())
    sym, m = _symbol(kernel, target.h, shape)
    eps = floor * np.abs(sym).max()
    low = np.abs(sym) < eps
    safe = np.where(low, np.where(sym < 0, -eps, eps), sym)
    ky = np.abs(np.fft.fftfreq(shape[0]))[:, None]
    kx = np.abs(np.fft.rfftfreq(shape[1]))[None, :]
    high = np.maximum(kx, ky) > 0.5 * band
    out = np.empty_like(vals)
    warn_floor = warn_band = False
    for c in range(vals.shape[2]):
        F = np.fft.rfft2(vals[..., c], s=shape)
        P = np.abs(F) ** 2
        if np.any(low & (np.abs(F) > 1e-8 * np.abs(F).max())):
            warn_floor = True
        if P[high].sum() > band_tol * P.sum():
            warn_band = True
        out[..., c] = np.fft.irfft2(F / safe, s=shape)[:target.ny, :target.nx]
    if warn_floor:
        warnings.warn("symbol floor active on the target's band: deconvolution inaccurate")
    if warn_band:
        warnings.warn("target is not band-limited: deconvolution accuracy not guaranteed")
    return target.like(out.reshape(target.values.shape))


# -- recovery sequence ----------------------------------------------------------

@dataclass
class RecoveryScenario:
    """Everything needed to build recovery pairs along a sequence."""

    elasticity: ElasticTensor
    lattice: BurgersLattice
    omega: Rectangle
    mu: DensitySpec
    regime: RegimeConfig
    R: float
    center: tuple
    n: int = 256
    cutoff: str = "exp-splice"
    beta_target: Optional[GridField] = None

    @classmethod
    def from_config(cls, cfg):
        C = ElasticTensor.from_config(cfg.get("elasticity", {"type": "isotropic", "lambda": 1.0,
                                                             "mu": 1.0}))
        lat = cfg.get("lattice", {"b1": [1.0, 0.0], "b2": [0.0, 1.0]})
        omega = Rectangle.from_list(cfg["domain"])
        mu = DensitySpec(cfg["mu"]["xi"], cfg["mu"]["rectangles"])
        center = tuple(cfg.get("center", (0.5 * (omega.x0 + omega.x1), 0.5 * (omega.y0 + omega.y1))))
        corners = np.array([[omega.x0, omega.y0], [omega.x1, omega.y1],
                            [omega.x0, omega.y1], [omega.x1, omega.y0]])
        R = float(cfg.get("R", 1.5 * np.linalg.norm(corners - center, axis=1).max()))
        return cls(C, BurgersLattice(lat["b1"], lat["b2"]), omega, mu,
                   RegimeConfig.from_config(cfg), R, center, int(cfg.get("n", 256)),
                   cfg.get("cutoff", "exp-splice"))

    def grid(self):
        origin = (self.center[0] - self.R, self.center[1] - self.R)
        return origin, 2.0 * self.R / self.n, self.n, self.n

    def psi_form(self):
        if not hasattr(self, "_psi"):
            self._psi = psi_quadratic_form(self.elasticity)
        return self._psi

    def phi(self, xi):
        return relax_phi(self.lattice, self.psi_form(), xi)

    def kernel(self, j):
        a, rho, _ = self.regime.at(j)
        return HorizonKernel.for_alpha(a, rho, self.cutoff)


@dataclass
class Recovery:
    mu: DislocationMeasure
    beta: StrainField
    regular: GridField          # beta_reg (before the 1/(2 alpha) scaling)
    r: float
    nu: GridField


def _cut_gradient(d, r, rc):
    # grad of quintic(|d| / rc) = -60 u^2 (1 - u)^2 / rc along d / |d|, u = 2 |d| / rc - 1
    u = np.clip(2.0 * r / rc - 1.0, 0.0, 1.0)
    g = -60.0 * u ** 2 * (1.0 - u) ** 2 / rc
    safe = np.where(r > 0, r, 1.0)
    return np.where(r[..., None] > 0, g[..., None] * d / safe[..., None], 0.0)


def build_recovery(beta_target, mu_target, config, j):
    """Recovery pair ``(mu_j, beta_j)`` for ``mu_target = xi chi_A``.

    ``beta_j = beta_reg / (2 alpha_j) + zeta_j + beta_rem`` with ``zeta_j`` the
    cut-off eta carriers, ``beta_reg = grad w J^T + P(target gradient part)``
    and ``beta_rem`` from one Poisson solve removing ``mu / (2 alpha_j) + nu_j``.
    With ``beta_target = None`` the gradient part is zero and ``beta_reg``
    is the Poisson carrier of ``mu`` alone.
    """
    C = config.elasticity
    alpha, rho, N = config.regime.at(j)
    origin, h, nx, ny = config.grid()
    xi = mu_target.xi
    if np.any(xi):
        dec = config.phi(xi)["decomposition"]
    else:
        dec = []
    mu_j = approximate_measure(xi, mu_target.rectangles, N, dec, rho, config.omega, config.lattice)
    Lam = sum(l for l, _ in dec)
    r = placement_radius(Lam, N) if dec else np.inf
    if dec and not rho < r:
        raise ValueError(f"horizon {rho:.3g} not below placement radius {r:.3g}")

    mu_grid = mu_target.on_grid(origin, h, nx, ny)
    if np.any(xi):
        w_t = poisson_disc_solve(mu_grid, config.R, config.center)
        breg = gradient_rotated(w_t)
    else:
        breg = GridField(origin, h, np.zeros((ny, nx, 2, 2)))
    if beta_target is not None:
        grad_part = beta_target.values - breg.values
        X, Y = breg.centers()
        grad_part = ndimage.gaussian_filter(grad_part, sigma=(2, 2, 0, 0))
        grad_part = grad_part * _soft_box(config.omega, X, Y, 4 * h)[..., None, None]
        breg = breg.like(breg.values + apply_inverse_P(breg.like(grad_part), config.kernel(j)).values)

    rc = r - rho
    carriers, cache = [], {}
    for b in mu_j.burgers:
        key = tuple(b)
        if key not in cache:
            cache[key] = solve_eta(C, b)
        carriers.append(cache[key])
    X, Y = cell_centers(origin, h, nx, ny)
    nu = np.zeros((ny, nx, 2))
    for p, prof in zip(mu_j.points, carriers):
        d = np.stack([X - p[0], Y - p[1]], axis=-1)
        rr = np.hypot(d[..., 0], d[..., 1])
        g = _cut_gradient(d, rr, rc)
        band = np.linalg.norm(g, axis=-1) > 0
        if not band.any():
            continue
        eta = np.zeros((ny, nx, 2, 2))
        eta[band] = prof.eval(np.arctan2(d[band][:, 1], d[band][:, 0])) / rr[band][:, None, None]
        nu += np.einsum("...ij,jk,...k->...i", eta, _J, g)
    nu_f = GridField(origin, h, nu)
    rhs = -mu_grid.values / (2 * alpha) - nu
    if np.any(rhs):
        w_rem = poisson_disc_solve(GridField(origin, h, rhs), config.R, config.center)
        brem = gradient_rotated(w_rem).values
    else:
        brem = 0.0
    regular = GridField(origin, h, breg.values / (2 * alpha) + brem)
    beta_j = StrainField(regular, mu_j.points, carriers, cutoff_radius=rc if len(mu_j) else None)
    return Recovery(mu_j, beta_j, breg, r, nu_f)


def _soft_box(rect, X, Y, width):
    # 1 at depth >= width inside the rectangle, 0 outside
    d = rect.boundary_distance(np.stack([X, Y], axis=-1))
    return _smooth_step_exp(1.0 - 0.5 * d / width)


def recovery_circulation(rec, frac=0.75, n=2048):
    """Per-atom ``|oint beta_j - xi_i| / |xi_i|`` on circles of radius ``frac * r_c``."""
    out = []
    rc = rec.beta.cutoff_radius
    for p, b in zip(rec.mu.points, rec.mu.burgers):
        c = loop_circulation(rec.beta.eval_xy, p, frac * rc, n)
        out.append(float(np.linalg.norm(c - b) / np.linalg.norm(b)))
    return out


def sine_tests(omega, modes=((1, 1), (1, 2), (2, 1), (2, 2))):
    """Smooth weights vanishing on the boundary of Omega (weak-convergence probes)."""
    Lx, Ly = omega.x1 - omega.x0, omega.y1 - omega.y0

    def make(m, k):
        return lambda X, Y: (np.sin(m * np.pi * (X - omega.x0) / Lx)
                             * np.sin(k * np.pi * (Y - omega.y0) / Ly))
    return [make(m, k) for m, k in modes]


def gamma_convergence_experiment(beta_target, mu_target, config, j_list):
    """Rows ``(j, alpha, rho, N, atoms, F_alpha, elastic, self, F_limit, plastic, ...)``.

    ``elastic`` and ``self`` are the prefactored interaction and self
    energies.  ``F_limit`` is the limit functional at the weak limit the
    recovery targets (``beta_reg`` when ``beta_target`` is None).
    """
    C = config.elasticity
    tests = sine_tests(config.omega)
    rows = []
    phi_fn = lambda v: config.phi(v)["phi"]
    plastic = plastic_term(mu_target, phi_fn)
    for j in j_list:
        alpha, rho, N = config.regime.at(j)
        kern = config.kernel(j)
        if not np.any(mu_target.xi) and beta_target is None:
            rows.append(dict(j=j, alpha=alpha, rho=rho, N=N, atoms=0, F_alpha=0.0, elastic=0.0,
                             self=0.0, F_limit=0.0, plastic=0.0, circ_err=0.0, weak_gap=0.0,
                             residual=0.0))
            continue
        rec = build_recovery(beta_target, mu_target, config, j)
        circ = recovery_circulation(rec) if len(rec.mu) else [0.0]
        E = energy_E_alpha(rec.mu, rec.beta, C, kern, config.omega, tests=tests)
        pre = prefactor(config.regime, j)
        lim_beta = beta_target if beta_target is not None else rec.regular
        state = LimitState(mu_target, lim_beta, config.omega, config.R, config.center)
        F_lim = limit_functional(state, C, phi_fn, config.regime.regime)
        X, Y = lim_beta.centers()
        om = config.omega.mask(X, Y)
        ref = np.array([np.einsum("ji,jikl->kl", np.where(om, w(X, Y), 0.0), lim_beta.values)
                        * lim_beta.h ** 2 for w in tests])
        gap = float(np.abs(np.sqrt(pre) * E.moments - ref).max() / max(np.abs(ref).max(), 1e-300))
        rows.append(dict(j=j, alpha=alpha, rho=rho, N=N, atoms=len(rec.mu),
                         F_alpha=pre * E.total, elastic=pre * E.inter, self=pre * E.self,
                         F_limit=F_lim, plastic=plastic, circ_err=max(circ), weak_gap=gap,
                         residual=state.residual if state.residual is not None else 0.0))
    return rows

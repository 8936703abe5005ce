"""``frac``: reproducible experiments writing CSV tables and SVG figures.

Exit codes: 0 ok, 2 bad experiment spec, 3 numerical failure, 4 invariant
violation.  Failures print one JSON object on stderr.
"""

import argparse
import csv
import hashlib
import json
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .cell_self_energy import (BurgersLattice, cell_convergence_study, phi_bruteforce,
                               psi_quadratic_form, relax_phi)
from .dislocation_energy import (RecoveryScenario, RegimeConfig, build_recovery, energy_E_alpha,
                                 gamma_convergence_experiment, prefactor, recovery_circulation,
                                 sine_tests)
from .elastic_core import ElasticTensor, make_isotropic
from .kernels import HorizonKernel, bound_audit, q_radial
from .riesz_transform import composition_check
from .singular_fields import (divergence_residual, loop_circulation, psi_density, solve_eta,
                              solve_eta_collocation)
from .svg import emit_svg

EXIT_OK, EXIT_SPEC, EXIT_NUMERICAL, EXIT_INVARIANT = 0, 2, 3, 4


class SpecError(Exception):
    pass


class InvariantViolation(Exception):
    pass


@dataclass
class ExperimentSpec:
    command: str
    out: str = "."
    input: str = None
    seed: int = 0
    n: int = None
    params: dict = field(default_factory=dict)

    def digest(self):
        """sha256 of the canonical spec (plus the input file's bytes)."""
        params = {k: v for k, v in self.params.items() if k != "csv"}
        d = {"command": self.command, "seed": self.seed, "n": self.n, "params": params}
        h = hashlib.sha256(json.dumps(d, sort_keys=True).encode())
        if self.input:
            with open(self.input, "rb") as fh:
                h.update(fh.read())
        return h.hexdigest()

    def validate(self):
        if self.input is not None and not os.path.isfile(self.input):
            raise SpecError(f"input file not found: {self.input}")
        os.makedirs(self.out, exist_ok=True)
        if not os.access(self.out, os.W_OK):
            raise SpecError(f"output directory not writable: {self.out}")


# -- helpers --------------------------------------------------------------------

def _floats(text, length=None, name="value"):
    try:
        vals = [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise SpecError(f"--{name}: expected comma-separated numbers, got {text!r}") from None
    if length is not None and len(vals) != length:
        raise SpecError(f"--{name}: expected {length} numbers, got {len(vals)}")
    return vals


def _workers():
    try:
        return max(1, int(os.environ.get("FRAC_THREADS", "1")))
    except ValueError:
        raise SpecError("FRAC_THREADS must be an integer") from None


def _map(fn, items):
    """Ordered map over independent tasks, on a process pool when FRAC_THREADS > 1."""
    items = list(items)
    w = min(_workers(), len(items))
    if w <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=w) as pool:
        return list(pool.map(fn, items))


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, rows, columns, spec):
    """Provenance comment line, header row, one line per row."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# fracdisloc {__version__} spec_sha256={spec.digest()}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(r[c]) for c in columns])
    return path


def _elasticity(spec):
    p = spec.params
    if p.get("elasticity"):
        with open(p["elasticity"]) as fh:
            return ElasticTensor.from_config(json.load(fh))
    return make_isotropic(p.get("lambda", 1.0), p.get("mu", 1.0))


def _scenario(spec):
    with open(spec.input) as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SpecError(f"scenario is not valid JSON: {exc}") from None
    if spec.n is not None:
        cfg["n"] = spec.n
    try:
        return RecoveryScenario.from_config(cfg)
    except (KeyError, TypeError) as exc:
        raise SpecError(f"scenario missing or malformed field: {exc}") from None


def _index(sc, j):
    if not 0 <= j < len(sc.regime):
        raise SpecError(f"--j {j} outside the sequence (length {len(sc.regime)})")
    return j


def _out(spec, name):
    return os.path.join(spec.out, name)


# -- commands -------------------------------------------------------------------

def cmd_kernel_audit(spec):
    p = spec.params
    k = HorizonKernel.for_alpha(p["alpha"], p["rho"], p["cutoff"])
    rep = bound_audit(k, p["samples"], np.random.default_rng(spec.seed))
    t = np.linspace(0.0, 1.2, 61)
    q_err = float(max(abs(k.q(x) - q_radial(k, x * k.rho)) for x in t))
    rows = [
        {"check": "bound_upper", "value": rep["max_ratio"], "limit": 1.0 + 1e-10,
         "ok": rep["max_ratio"] <= 1.0 + 1e-10},
        {"check": "bound_lower", "value": rep["min_ratio"], "limit": 0.0,
         "ok": rep["min_ratio"] >= 0.0},
        {"check": "outside_support", "value": rep["outside_max"], "limit": 0.0,
         "ok": rep["outside_max"] == 0.0},
        {"check": "q_cache_vs_quad", "value": q_err, "limit": 1e-8, "ok": q_err <= 1e-8},
        {"check": "l1_norm", "value": k.l1_norm(), "limit": 0.0, "ok": k.l1_norm() > 0.0},
    ]
    write_csv(_out(spec, "kernel_audit.csv"), rows, ["check", "value", "limit", "ok"], spec)
    return [r["check"] for r in rows if not r["ok"]]


def cmd_riesz_check(spec):
    p = spec.params
    rng = np.random.default_rng(spec.seed)
    r = np.linspace(p["rmin"], p["rmax"], p["points"])
    th = rng.uniform(0.0, 2.0 * np.pi, r.size)
    pts = np.stack([r * np.cos(th), r * np.sin(th)], axis=1)
    errs = composition_check(p["alpha"], p["beta"], pts)
    rows = [{"x": x, "y": y, "rel_err": e, "ok": e <= p["tol"]}
            for (x, y), e in zip(pts, errs)]
    write_csv(_out(spec, "riesz.csv"), rows, ["x", "y", "rel_err", "ok"], spec)
    return [f"composition at ({r['x']:.3g},{r['y']:.3g})" for r in rows if not r["ok"]]


def cmd_eta(spec):
    p = spec.params
    C = _elasticity(spec)
    xi = np.array(p["xi"])
    prof = solve_eta(C, xi)
    th_ref, G_ref, _, _ = solve_eta_collocation(C, xi)
    oracle = float(np.abs(prof.eval(th_ref) - G_ref).max())
    th = prof.theta
    circ = float(np.linalg.norm(loop_circulation(prof.eval_xy, (0.0, 0.0), 1.0) - xi))
    tests = [((1.5, 0.0), 1.0, np.array([1.0, 0.0])), ((0.0, -2.0), 1.5, np.array([0.3, -1.0]))]
    div = float(np.max(np.abs(divergence_residual(prof, tests))))
    G = prof.eval(th)
    rows = [{"theta": t, "G11": g[0, 0], "G12": g[0, 1], "G21": g[1, 0], "G22": g[1, 1],
             "norm": float(np.linalg.norm(g))} for t, g in zip(th, G)]
    cols = ["theta", "G11", "G12", "G21", "G22", "norm"]
    write_csv(_out(spec, "eta_profile.csv"), rows, cols, spec)
    emit_svg(rows, "profile", _out(spec, "eta_profile.svg"), title="eta angular profile")
    prof.to_json(_out(spec, "eta.json"))
    checks = [{"check": "circulation", "value": circ, "limit": 1e-7},
              {"check": "divergence_residual", "value": div, "limit": 1e-6},
              {"check": "collocation_oracle", "value": oracle, "limit": 1e-7},
              {"check": "psi", "value": psi_density(prof), "limit": float("inf")}]
    for c in checks:
        c["ok"] = c["value"] <= c["limit"]
    write_csv(_out(spec, "eta_checks.csv"), checks, ["check", "value", "limit", "ok"], spec)
    return [c["check"] for c in checks if not c["ok"]]


def _cell_task(args):
    xi, rho, a, n, cut = args
    return cell_convergence_study(xi, rho, [a], n=n, cutoff=cut)[0]


def cmd_cell(spec):
    p = spec.params
    n = spec.n or 128
    rows = _map(_cell_task, [(p["xi"], p["rho"], a, n, p["cutoff"]) for a in p["alphas"]])
    cols = ["alpha", "psi_hat", "two_alpha_psi", "upper", "psi_limit", "rel_err"]
    path = p.get("csv") or _out(spec, "cell.csv")
    write_csv(path, rows, cols, spec)
    if all(r["rel_err"] > 0 for r in rows):
        emit_svg(rows, "convergence", os.path.splitext(path)[0] + ".svg", x="alpha", y="rel_err",
                 title="cell formula convergence")
    return [f"alpha={r['alpha']}: psi_hat outside [0, upper]" for r in rows
            if not 0.0 <= r["psi_hat"] <= r["upper"] * (1 + 1e-12)]


def cmd_phi(spec):
    p = spec.params
    C = _elasticity(spec)
    lat = BurgersLattice(p["b1"], p["b2"])
    P = psi_quadratic_form(C)
    if p.get("xi") is not None:
        xis = [np.array(p["xi"])]
    else:
        xis = list(np.random.default_rng(spec.seed).normal(size=(p["samples"], 2)))
    rows, bad = [], []
    for xi in xis:
        res = relax_phi(lat, P, xi)
        brute = phi_bruteforce(lat, P, xi)
        psi = float(xi @ P @ xi)
        dec = ";".join(f"{l!r}*({float(v[0])!r},{float(v[1])!r})" for l, v in res["decomposition"])
        rows.append({"xi1": xi[0], "xi2": xi[1], "phi": res["phi"], "bruteforce": brute,
                     "psi": psi, "M": res["M"], "decomposition": dec})
        if abs(res["phi"] - brute) > 1e-9 * max(1.0, brute) or res["phi"] < 0:
            bad.append(f"phi({xi[0]:.4g},{xi[1]:.4g}) disagrees with the exhaustive search")
        if lat.contains(xi) and res["phi"] > psi + 1e-12:
            bad.append(f"phi exceeds psi at lattice vector ({xi[0]:.4g},{xi[1]:.4g})")
    write_csv(_out(spec, "phi.csv"), rows,
              ["xi1", "xi2", "phi", "bruteforce", "psi", "M", "decomposition"], spec)
    return bad


def cmd_energy(spec):
    sc = _scenario(spec)
    j = _index(sc, spec.params["j"])
    rec = build_recovery(sc.beta_target, sc.mu, sc, j)
    E = energy_E_alpha(rec.mu, rec.beta, sc.elasticity, sc.kernel(j), sc.omega,
                       tests=sine_tests(sc.omega))
    pre = prefactor(sc.regime, j)
    a, rho, N = sc.regime.at(j)
    row = {"j": j, "alpha": a, "rho": rho, "N": N, "atoms": len(rec.mu), "total": E.total,
           "self": E.self, "inter": E.inter, "prefactor": pre, "F_alpha": pre * E.total}
    write_csv(_out(spec, "energy.csv"), [row], list(row), spec)
    return [] if E.total == E.self + E.inter else ["energy split not additive"]


def cmd_recovery(spec):
    sc = _scenario(spec)
    j = _index(sc, spec.params["j"])
    rec = build_recovery(sc.beta_target, sc.mu, sc, j)
    circ = recovery_circulation(rec)
    rows = [{"x": p[0], "y": p[1], "b1": b[0], "b2": b[1], "circ_err": c}
            for p, b, c in zip(rec.mu.points, rec.mu.burgers, circ)]
    write_csv(_out(spec, "recovery.csv"), rows, ["x", "y", "b1", "b2", "circ_err"], spec)
    tol = spec.params["tol"]
    return [f"atom {i}: circulation error {c:.3g} > {tol}" for i, c in enumerate(circ) if c > tol]


def cmd_gamma(spec):
    sc = _scenario(spec)
    js = spec.params.get("js") or list(range(len(sc.regime)))
    for j in js:
        _index(sc, j)
    rows = gamma_convergence_experiment(sc.beta_target, sc.mu, sc, js)
    for r in rows:
        r["gap"] = abs(r["F_alpha"] / r["plastic"] - 1.0) if r["plastic"] > 0 else float("nan")
    cols = ["j", "alpha", "rho", "N", "atoms", "F_alpha", "elastic", "self", "F_limit",
            "plastic", "gap", "circ_err", "weak_gap", "residual"]
    write_csv(_out(spec, "gamma.csv"), rows, cols, spec)
    ok = [r for r in rows if r["gap"] > 0]
    emit_svg(ok or rows, "convergence", _out(spec, "gamma.svg"), x="alpha", y="gap",
             title="recovery energy gap")
    tol = spec.params["tol"]
    return [f"j={r['j']}: circulation error {r['circ_err']:.3g} > {tol}" for r in rows
            if r["circ_err"] > tol]


def cmd_regimes(spec):
    p = spec.params
    alphas = np.array(p["alphas"])
    rhos = alphas ** 2 if p["rho_rule"] == "alpha^2" else alphas
    cfg = RegimeConfig(p["regime"], alphas, rhos, p.get("Ns"))
    rows = []
    for j in range(len(cfg)):
        a, rho, N = cfg.at(j)
        rows.append({"j": j, "alpha": a, "rho": rho, "N": N, "prefactor": prefactor(cfg, j)})
    write_csv(_out(spec, "regimes.csv"), rows, ["j", "alpha", "rho", "N", "prefactor"], spec)
    flags = [{"assumption": k, "ok": v} for k, v in cfg.flags.items()]
    write_csv(_out(spec, "regimes_monitor.csv"), flags, ["assumption", "ok"], spec)
    bad = []
    if cfg.regime == "subcritical":
        crit = RegimeConfig("critical", alphas, rhos)
        matched = np.abs(cfg.Ns * 2 * alphas - 1) <= 1e-12
        bad = [f"j={j}: subcritical and critical prefactors differ" for j in range(len(cfg))
               if matched[j] and prefactor(cfg, j) != prefactor(crit, j)]
    return bad


COMMANDS = {
    "kernel-audit": cmd_kernel_audit, "riesz-check": cmd_riesz_check, "eta": cmd_eta,
    "cell": cmd_cell, "phi": cmd_phi, "energy": cmd_energy, "recovery": cmd_recovery,
    "gamma": cmd_gamma, "regimes": cmd_regimes,
}


def run(spec):
    """Run one experiment; returns the exit code."""
    try:
        spec.validate()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            bad = COMMANDS[spec.command](spec)
    except SpecError as exc:
        return _fail(spec, EXIT_SPEC, "spec_error", str(exc))
    except (ValueError, KeyError, TypeError, IndexError) as exc:
        return _fail(spec, EXIT_SPEC, "spec_error", f"{type(exc).__name__}: {exc}")
    except (RuntimeError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return _fail(spec, EXIT_NUMERICAL, "numerical_failure", f"{type(exc).__name__}: {exc}")
    except Exception as exc:  # fail closed
        return _fail(spec, EXIT_NUMERICAL, "internal_error", f"{type(exc).__name__}: {exc}")
    if bad:
        return _fail(spec, EXIT_INVARIANT, "invariant_violation", "; ".join(bad))
    return EXIT_OK


def _fail(spec, code, kind, message):
    err = {"error": kind, "exit_code": code, "command": spec.command if spec else None,
           "message": message}
    print(json.dumps(err), file=sys.stderr)
    return code


# -- argument parsing -------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise SpecError(message)


def build_parser():
    ap = _Parser(prog="frac", description=__doc__.splitlines()[0], allow_abbrev=False)
    ap.add_argument("--version", action="version", version=f"fracdisloc {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_):
        p = sub.add_parser(name, help=help_, allow_abbrev=False)
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=0)
        return p

    def elastic(p):
        p.add_argument("--lambda", dest="lam", type=float, default=1.0)
        p.add_argument("--mu", type=float, default=1.0)
        p.add_argument("--elasticity", help="elasticity JSON (overrides --lambda/--mu)")

    p = add("kernel-audit", "bound and cache checks of one kernel")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--cutoff", default="exp-splice")
    p.add_argument("--samples", type=int, default=10000)

    p = add("riesz-check", "kernel-level composition identity")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--points", type=int, default=100)
    p.add_argument("--rmin", type=float, default=0.1)
    p.add_argument("--rmax", type=float, default=3.0)
    p.add_argument("--tol", type=float, default=1e-6)

    p = add("eta", "equilibrated dislocation field and its checks")
    p.add_argument("--xi", required=True)
    elastic(p)

    p = add("cell", "cell self-energy sweep over alpha")
    p.add_argument("--xi", required=True)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--alphas", required=True)
    p.add_argument("--n", type=int, default=128)
    p.add_argument("--cutoff", default="exp-splice")

    p = add("phi", "lattice relaxation of the self-energy density")
    p.add_argument("--xi", help="single Burgers vector (default: random samples)")
    p.add_argument("--samples", type=int, default=50)
    p.add_argument("--b1", default="1,0")
    p.add_argument("--b2", default="0,1")
    elastic(p)

    for name, help_ in (("energy", "energy of one recovery configuration"),
                        ("recovery", "per-atom circulation of one recovery configuration"),
                        ("gamma", "recovery sequence against the limit functional")):
        p = add(name, help_)
        p.add_argument("--scenario", required=True, help="scenario JSON")
        p.add_argument("--n", type=int, help="override grid resolution")
        if name == "gamma":
            p.add_argument("--j-list", help="comma-separated sequence indices (default all)")
        else:
            p.add_argument("--j", type=int, default=0)
        if name != "energy":
            p.add_argument("--tol", type=float, default=2e-2)

    p = add("regimes", "prefactors and assumption monitor of a scaling regime")
    p.add_argument("--alphas", required=True)
    p.add_argument("--regime", default="critical",
                   choices=["critical", "subcritical", "supercritical"])
    p.add_argument("--rho-rule", default="alpha^2", choices=["alpha^2", "alpha"])
    p.add_argument("--Ns", help="comma-separated N_j (default 1/(2 alpha_j))")
    return ap


def spec_from_args(ns):
    d = vars(ns).copy()
    cmd, out, seed = d.pop("command"), d.pop("out"), d.pop("seed")
    n = d.pop("n", None)
    inp = d.pop("scenario", None)
    if "lam" in d:
        d["lambda"] = d.pop("lam")
    for key, length in (("xi", 2), ("b1", 2), ("b2", 2)):
        if d.get(key) is not None:
            d[key] = _floats(d[key], length, key)
    for key in ("alphas", "Ns"):
        if d.get(key) is not None:
            d[key] = _floats(d[key], None, key)
    if d.get("j_list") is not None:
        d["js"] = [int(v) for v in _floats(d.pop("j_list"), None, "j-list")]
    d.pop("j_list", None)
    if d.get("elasticity"):
        if not os.path.isfile(d["elasticity"]):
            raise SpecError(f"elasticity file not found: {d['elasticity']}")
    # an --out ending in .csv names the table itself (cell sweeps)
    if cmd == "cell" and out.endswith(".csv"):
        d["csv"] = out
        out = os.path.dirname(out) or "."
    return ExperimentSpec(cmd, out, inp, seed, n, d)


def main(argv=None):
    try:
        spec = spec_from_args(build_parser().parse_args(argv))
    except SpecError as exc:
        return _fail(None, EXIT_SPEC, "spec_error", str(exc))
    return run(spec)


if __name__ == "__main__":
    sys.exit(main())

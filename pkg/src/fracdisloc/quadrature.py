"""Fixed quadrature rules used by the point evaluators.

All rules return ``(nodes, weights)`` as 1-D arrays so that integrands can be
evaluated in one vectorized call.
"""

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=64)
def _gauss(n):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_panels(edges, n=16):
    """Composite Gauss-Legendre rule on consecutive panels ``edges``."""
    edges = np.asarray(edges, dtype=float)
    x, w = _gauss(n)
    a = edges[:-1, None]
    b = edges[1:, None]
    half = 0.5 * (b - a)
    nodes = (a + b) * 0.5 + half * x[None, :]
    weights = half * w[None, :]
    return nodes.ravel(), weights.ravel()


def power_rule(p, a, b, n=12, ratio=0.5, levels=28):
    """Rule for ``int_a^b r**(p-1) phi(r) dr`` with smooth ``phi``.

    The weight is absorbed by the substitution ``u = r**p``; when ``a == 0``
    the interval is additionally graded geometrically towards the origin so
    that variation of ``phi`` on small scales is resolved.  The returned
    weights already contain the factor ``r**(p-1)``.
    """
    if b <= a:
        return np.empty(0), np.empty(0)
    if a > 0.0:
        breaks = [a, b]
    else:
        breaks = [0.0] + [b * ratio ** k for k in range(levels, -1, -1)]
    ub = np.asarray(breaks) ** p
    u, wu = gauss_panels(ub, n)
    r = u ** (1.0 / p)
    return r, wu / p


def geometric_edges(a, b, growth=1.5, min_panels=1):
    """Panel edges from ``a > 0`` to ``b`` growing by ``growth``."""
    if b <= a:
        return np.array([a, b])
    k = max(min_panels, int(np.ceil(np.log(b / a) / np.log(growth))))
    return a * (b / a) ** (np.arange(k + 1) / k)


def periodic_nodes(n):
    """Trapezoid nodes on [0, 2pi); exponentially accurate for smooth periodic data."""
    theta = 2.0 * np.pi * np.arange(n) / n
    return theta, np.full(n, 2.0 * np.pi / n)

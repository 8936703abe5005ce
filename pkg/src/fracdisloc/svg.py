"""Minimal SVG 1.1 figures for experiment tables."""

import csv
import math

W, H, PAD = 480, 360, 56


def read_table(path):
    """Rows of a CSV written by the CLI (``#`` lines are provenance comments)."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def _column(rows, name):
    try:
        return [float(r[name]) for r in rows]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed table: column {name!r} missing or not numeric") from exc


def _fmt(v):
    return f"{v:.2f}"


def _header(title):
    return [f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" '
            f'viewBox="0 0 {W} {H}">',
            f'<title>{title}</title>',
            f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>']


def _log_axis(lo, hi):
    lo, hi = math.floor(math.log10(lo)), math.ceil(math.log10(hi))
    if hi == lo:
        hi += 1
    return lo, hi


def convergence_svg(rows, x, y, title="convergence"):
    """Log-log plot of column ``y`` against column ``x``, one marker per row."""
    xs, ys = _column(rows, x), _column(rows, y)
    pts = [(a, b) for a, b in zip(xs, ys)]
    if any(a <= 0 or b <= 0 for a, b in pts):
        raise ValueError("log axes need positive values")
    xl, xh = _log_axis(min(xs), max(xs))
    yl, yh = _log_axis(min(ys), max(ys))

    def px(v):
        return PAD + (math.log10(v) - xl) / (xh - xl) * (W - 2 * PAD)

    def py(v):
        return H - PAD - (math.log10(v) - yl) / (yh - yl) * (H - 2 * PAD)

    out = _header(title)
    out.append(f'<rect x="{PAD}" y="{PAD}" width="{W - 2 * PAD}" height="{H - 2 * PAD}" '
               f'fill="none" stroke="black"/>')
    for e in range(xl, xh + 1):
        X = _fmt(PAD + (e - xl) / (xh - xl) * (W - 2 * PAD))
        out.append(f'<line x1="{X}" y1="{H - PAD}" x2="{X}" y2="{H - PAD + 5}" stroke="black"/>')
        out.append(f'<text x="{X}" y="{H - PAD + 18}" font-size="11" text-anchor="middle">1e{e}</text>')
    for e in range(yl, yh + 1):
        Y = _fmt(H - PAD - (e - yl) / (yh - yl) * (H - 2 * PAD))
        out.append(f'<line x1="{PAD - 5}" y1="{Y}" x2="{PAD}" y2="{Y}" stroke="black"/>')
        out.append(f'<text x="{PAD - 8}" y="{Y}" font-size="11" text-anchor="end">1e{e}</text>')
    path = " ".join(f"{'M' if i == 0 else 'L'}{_fmt(px(a))},{_fmt(py(b))}"
                    for i, (a, b) in enumerate(pts))
    out.append(f'<path d="{path}" fill="none" stroke="steelblue"/>')
    for a, b in pts:
        out.append(f'<circle cx="{_fmt(px(a))}" cy="{_fmt(py(b))}" r="3.5" fill="steelblue"/>')
    out.append(f'<text x="{W / 2}" y="{H - 12}" font-size="12" text-anchor="middle">{x}</text>')
    out.append(f'<text x="14" y="{H / 2}" font-size="12" text-anchor="middle" '
               f'transform="rotate(-90 14 {H / 2})">{y}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def profile_svg(rows, theta="theta", value="norm", title="angular profile"):
    """Closed polar curve ``r = value(theta)``."""
    th, v = _column(rows, theta), _column(rows, value)
    vmax = max(abs(a) for a in v) or 1.0
    cx, cy, s = W / 2, H / 2, 0.42 * min(W, H) / vmax
    pts = [(cx + s * abs(r) * math.cos(t), cy - s * abs(r) * math.sin(t)) for t, r in zip(th, v)]
    out = _header(title)
    out.append(f'<circle cx="{cx}" cy="{cy}" r="{_fmt(s * vmax)}" fill="none" stroke="#ccc"/>')
    d = " ".join(f"{'M' if i == 0 else 'L'}{_fmt(a)},{_fmt(b)}" for i, (a, b) in enumerate(pts))
    out.append(f'<path d="{d} Z" fill="none" stroke="firebrick"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_svg(table, kind, path, **columns):
    """Write an SVG for ``table`` (CSV path or list of row dicts).

    ``kind`` is ``"convergence"`` (needs ``x`` and ``y`` column names) or
    ``"profile"`` (``theta`` and ``value``).  Empty or malformed tables raise
    ``ValueError``.
    """
    rows = read_table(table) if isinstance(table, str) else list(table)
    if not rows:
        raise ValueError("empty table")
    if kind == "convergence":
        text = convergence_svg(rows, columns["x"], columns["y"], columns.get("title", kind))
    elif kind == "profile":
        text = profile_svg(rows, columns.get("theta", "theta"), columns.get("value", "norm"),
                           columns.get("title", kind))
    else:
        raise ValueError(f"unknown figure kind {kind!r}")
    with open(path, "w") as fh:
        fh.write(text)
    return path

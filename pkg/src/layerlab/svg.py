"""Minimal SVG line plots (polylines on linear or log axes)."""

import math
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 640, 420
MARGIN = (70, 20, 30, 50)  # left, right, top, bottom
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#7f7f7f")


def _fmt(v):
    return f"{v:.6g}"


def _ticks(lo, hi, log):
    if log:
        a, b = math.floor(lo), math.ceil(hi)
        return [float(e) for e in range(a, b + 1)]
    if hi == lo:
        return [lo]
    step = 10 ** math.floor(math.log10((hi - lo) / 4))
    for m in (1, 2, 5, 10):
        if (hi - lo) / (m * step) <= 6:
            step *= m
            break
    start = math.ceil(lo / step) * step
    out, t = [], start
    while t <= hi + 1e-12 * abs(step):
        out.append(round(t, 12))
        t += step
    return out


def line_plot(series, path, title="", xlabel="", ylabel="", logx=False, logy=False):
    """Write ``series`` (``[(label, xs, ys), ...]``) as an SVG file at ``path``.

    Nonpositive values are dropped on log axes.
    """
    tx = (lambda v: math.log10(v)) if logx else float
    ty = (lambda v: math.log10(v)) if logy else float
    pts = []
    for label, xs, ys in series:
        p = [(tx(x), ty(y)) for x, y in zip(xs, ys)
             if (not logx or x > 0) and (not logy or y > 0)
             and math.isfinite(x) and math.isfinite(y)]
        pts.append((label, p))
    allp = [q for _, p in pts for q in p] or [(0.0, 0.0), (1.0, 1.0)]
    x0, x1 = min(q[0] for q in allp), max(q[0] for q in allp)
    y0, y1 = min(q[1] for q in allp), max(q[1] for q in allp)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad
    left, right, top, bottom = MARGIN
    pw, ph = WIDTH - left - right, HEIGHT - top - bottom

    def X(v):
        return left + (v - x0) / (x1 - x0) * pw

    def Y(v):
        return top + (y1 - v) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for t in _ticks(x0, x1, logx):
        if x0 <= t <= x1:
            lab = _fmt(10 ** t) if logx else _fmt(t)
            out.append(f'<line x1="{X(t):.2f}" y1="{top + ph}" x2="{X(t):.2f}" y2="{top + ph + 4}" stroke="black"/>')
            out.append(f'<text x="{X(t):.2f}" y="{top + ph + 16}" text-anchor="middle">{lab}</text>')
    for t in _ticks(y0, y1, logy):
        if y0 <= t <= y1:
            lab = _fmt(10 ** t) if logy else _fmt(t)
            out.append(f'<line x1="{left - 4}" y1="{Y(t):.2f}" x2="{left}" y2="{Y(t):.2f}" stroke="black"/>')
            out.append(f'<text x="{left - 6}" y="{Y(t) + 4:.2f}" text-anchor="end">{lab}</text>')
    for i, (label, p) in enumerate(pts):
        color = COLORS[i % len(COLORS)]
        if p:
            coords = " ".join(f"{X(a):.2f},{Y(b):.2f}" for a, b in p)
            out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        if label and len(pts) <= 12:
            ly = top + 14 + 14 * i
            out.append(f'<text x="{left + pw - 6}" y="{ly}" text-anchor="end" fill="{color}">{escape(label)}</text>')
    out.append(f'<text x="{WIDTH / 2:.1f}" y="{top - 8 if top > 16 else 14}" text-anchor="middle" font-size="13">{escape(title)}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {top + ph / 2:.1f})">{escape(ylabel)}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")

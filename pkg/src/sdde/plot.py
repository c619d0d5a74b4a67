"""Static SVG log2-log2 convergence plot, written by hand (no plotting dependency)."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

W, H = 560, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 20, 30, 55
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def fmt(v) -> str:
    return f"{v:.17g}"


def rate_svg(table, fits) -> str:
    """``fits`` maps q_bar -> (slope, intercept, r2); levels with zero error are skipped."""
    pts = [(float(dt), q, e) for dt, q, e, _, _ in table.rows() if e > 0]
    if not pts:
        xs, ys = [0.0, 1.0], [0.0, 1.0]
    else:
        xs = [math.log2(p[0]) for p in pts]
        ys = [math.log2(p[2]) for p in pts]
    x0, x1 = min(xs) - 0.5, max(xs) + 0.5
    y0, y1 = min(ys) - 0.5, max(ys) + 0.5

    def sx(v):
        return LEFT + (v - x0) / (x1 - x0) * (W - LEFT - RIGHT)

    def sy(v):
        return H - BOTTOM - (v - y0) / (y1 - y0) * (H - TOP - BOTTOM)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<line x1="{LEFT}" y1="{H - BOTTOM}" x2="{W - RIGHT}" y2="{H - BOTTOM}" stroke="black"/>',
        f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{H - BOTTOM}" stroke="black"/>',
    ]
    for v in range(math.ceil(x0), math.floor(x1) + 1):
        out.append(f'<line x1="{sx(v):.2f}" y1="{H - BOTTOM}" x2="{sx(v):.2f}" y2="{H - BOTTOM + 5}" stroke="black"/>')
        out.append(f'<text x="{sx(v):.2f}" y="{H - BOTTOM + 18}" font-size="11" text-anchor="middle">{v}</text>')
    for v in range(math.ceil(y0), math.floor(y1) + 1):
        out.append(f'<line x1="{LEFT - 5}" y1="{sy(v):.2f}" x2="{LEFT}" y2="{sy(v):.2f}" stroke="black"/>')
        out.append(f'<text x="{LEFT - 8}" y="{sy(v) + 4:.2f}" font-size="11" text-anchor="end">{v}</text>')
    out.append(f'<text x="{(LEFT + W - RIGHT) / 2}" y="{H - 12}" font-size="13" text-anchor="middle">log2(dt)</text>')
    out.append(f'<text x="16" y="{(TOP + H - BOTTOM) / 2}" font-size="13" text-anchor="middle" '
               f'transform="rotate(-90 16 {(TOP + H - BOTTOM) / 2})">log2(error)</text>')
    for i, q in enumerate(table.q_bars):
        color = COLORS[i % len(COLORS)]
        series = [p for p in pts if p[1] == q]
        for dt, _, e in series:
            out.append(
                f'<circle class="point" cx="{sx(math.log2(dt)):.2f}" cy="{sy(math.log2(e)):.2f}" r="4" '
                f'fill="{color}" data-dt="{fmt(dt)}" data-q-bar="{fmt(q)}" data-error="{fmt(e)}"/>'
            )
        if q in fits and len(series) >= 2:
            slope, intercept, r2 = fits[q]
            la, lb = min(math.log2(p[0]) for p in series), max(math.log2(p[0]) for p in series)
            out.append(
                f'<line class="fit" x1="{sx(la):.2f}" y1="{sy(slope * la + intercept):.2f}" '
                f'x2="{sx(lb):.2f}" y2="{sy(slope * lb + intercept):.2f}" stroke="{color}" '
                f'stroke-dasharray="5,3" data-slope="{fmt(slope)}"/>'
            )
            label = escape(f"q={q:g}: slope {slope:.3f} (r2 {r2:.4f})")
            out.append(f'<text x="{LEFT + 10}" y="{TOP + 14 + 16 * i}" font-size="12" fill="{color}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"

"""Minimal SVG line plots (no plotting dependency)."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def _tx(v: float, log: bool) -> float:
    return math.log10(v) if log else v


def line_plot(path, series: dict, title: str = "", xlabel: str = "", ylabel: str = "",
              logx: bool = True, logy: bool = True, width: int = 480, height: int = 320) -> None:
    """``series`` maps a label to (xs, ys); non-positive values are dropped on log axes."""
    pts = {}
    for k, (xs, ys) in series.items():
        keep = [(x, y) for x, y in zip(xs, ys)
                if math.isfinite(x) and math.isfinite(y) and (x > 0 or not logx) and (y > 0 or not logy)]
        if keep:
            pts[k] = [(_tx(x, logx), _tx(y, logy)) for x, y in keep]
    allp = [p for v in pts.values() for p in v]
    ml, mr, mt, mb = 60, 20, 30, 45
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>']
    if allp:
        x0, x1 = min(p[0] for p in allp), max(p[0] for p in allp)
        y0, y1 = min(p[1] for p in allp), max(p[1] for p in allp)
        if x1 == x0:
            x0, x1 = x0 - 1, x1 + 1
        if y1 == y0:
            y0, y1 = y0 - 1, y1 + 1
        pw, ph = width - ml - mr, height - mt - mb

        def X(v):
            return ml + (v - x0) / (x1 - x0) * pw

        def Y(v):
            return mt + ph - (v - y0) / (y1 - y0) * ph

        out.append(f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>')
        for v, anchor in ((x0, "start"), (x1, "end")):
            lab = f"{10 ** v:.3g}" if logx else f"{v:.3g}"
            out.append(f'<text x="{X(v):.1f}" y="{mt + ph + 14}" text-anchor="{anchor}">{lab}</text>')
        for v in (y0, y1):
            lab = f"{10 ** v:.3g}" if logy else f"{v:.3g}"
            out.append(f'<text x="{ml - 4}" y="{Y(v) + 4:.1f}" text-anchor="end">{lab}</text>')
        out.append(f'<text x="{ml + pw / 2}" y="{height - 8}" text-anchor="middle">{escape(xlabel)}</text>')
        out.append(f'<text x="12" y="{mt + ph / 2}" text-anchor="middle" '
                   f'transform="rotate(-90 12 {mt + ph / 2})">{escape(ylabel)}</text>')
        for n, (k, v) in enumerate(pts.items()):
            c = _COLORS[n % len(_COLORS)]
            d = " ".join(f"{X(a):.1f},{Y(b):.1f}" for a, b in v)
            out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.6" points="{d}"/>')
            for a, b in v:
                out.append(f'<circle cx="{X(a):.1f}" cy="{Y(b):.1f}" r="2.5" fill="{c}"/>')
            out.append(f'<text x="{ml + 8}" y="{mt + 14 + 13 * n}" fill="{c}">{escape(str(k))}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")

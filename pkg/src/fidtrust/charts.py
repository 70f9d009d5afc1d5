"""Tiny hand-written SVG line charts (one metric per file).

Output depends only on the data: fixed canvas, fixed number formatting, no
timestamps or font metrics, so reruns are byte-identical.
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 480, 320
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 20, 30, 50


def _tick(v: float) -> str:
    return format(v, ".4g")


def line_chart(xs, ys, title: str, xlabel: str, ylabel: str, xticklabels=None) -> str:
    xs = [float(x) for x in xs]
    ys = [float(y) for y in ys]
    if len(xs) != len(ys) or not xs:
        raise ValueError("line_chart needs equally long, non-empty x and y")
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x0, x1 = x0 - 1.0, x1 + 1.0
    if y1 == y0:
        pad = abs(y0) * 0.05 or 1.0
        y0, y1 = y0 - pad, y1 + pad
    pw = WIDTH - MARGIN_L - MARGIN_R
    ph = HEIGHT - MARGIN_T - MARGIN_B

    def px(x):
        return MARGIN_L + (x - x0) / (x1 - x0) * pw

    def py(y):
        return MARGIN_T + (1.0 - (y - y0) / (y1 - y0)) * ph

    pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{MARGIN_L}" y1="{MARGIN_T + ph}" x2="{MARGIN_L + pw}" y2="{MARGIN_T + ph}" stroke="black"/>',
        f'<line x1="{MARGIN_L}" y1="{MARGIN_T}" x2="{MARGIN_L}" y2="{MARGIN_T + ph}" stroke="black"/>',
    ]
    for i in range(5):
        yv = y0 + (y1 - y0) * i / 4
        parts.append(
            f'<text x="{MARGIN_L - 6}" y="{py(yv) + 4:.2f}" text-anchor="end" font-size="10">{_tick(yv)}</text>'
        )
    labels = xticklabels if xticklabels is not None else [_tick(x) for x in xs]
    for x, lab in zip(xs, labels):
        parts.append(
            f'<text x="{px(x):.2f}" y="{MARGIN_T + ph + 14}" text-anchor="middle" font-size="9">{escape(str(lab))}</text>'
        )
    parts += [
        f'<text x="{MARGIN_L + pw / 2:.1f}" y="{HEIGHT - 10}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>',
        f'<text x="14" y="{MARGIN_T + ph / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {MARGIN_T + ph / 2:.1f})">{escape(ylabel)}</text>',
        f'<polyline fill="none" stroke="#1f77b4" stroke-width="2" points="{pts}"/>',
    ]
    parts += [
        f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="3" fill="#1f77b4"/>'
        for x, y in zip(xs, ys) if math.isfinite(y)
    ]
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def table_charts(table, metrics) -> dict:
    """Map ``<metric>.svg`` to chart text for each requested table column.

    Rows are plotted against strength, or against row position when the
    strengths are not distinct (OOD tables).
    """
    strengths = table.column("strength")
    labels = table.column("label")
    by_strength = len(set(strengths)) == len(strengths)
    xs = strengths if by_strength else list(range(len(labels)))
    ticks = None if by_strength else labels
    out = {}
    for metric in metrics:
        ys = table.column(metric)
        if any(v is None for v in ys):
            raise ValueError(f"column {metric!r} has empty cells; cannot chart it")
        xlabel = "strength (%)" if by_strength else "test set"
        out[f"{metric}.svg"] = line_chart(xs, ys, f"{metric} ({table.experiment})", xlabel, metric, ticks)
    return out

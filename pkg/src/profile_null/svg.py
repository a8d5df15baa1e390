"""Self-contained SVG funnel plots: measure ratio against effective size,
with fixed-effects and empirical-null control-limit curves and the null line
at 1. No external fonts or styles; byte-deterministic for fixed inputs.
"""

from __future__ import annotations

from typing import Sequence

GENERATOR_COMMENT = "<!-- profile-null funnel svg v1 -->"

_W, _H = 720.0, 480.0
_ML, _MR, _MT, _MB = 64.0, 16.0, 36.0, 48.0


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _ticks(lo: float, hi: float, n: int = 6) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / max(1, n - 1)
    mag = 10.0 ** int(f"{raw:e}".split("e")[1])
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        step = mult * mag
        if step >= raw:
            break
    start = step * (int(lo / step) + (0 if lo % step == 0 else 1) - (1 if lo < 0 else 0))
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        if t >= lo - 1e-9 * step:
            ticks.append(round(t, 10))
        t += step
    return ticks or [lo, hi]


def funnel_svg(
    title: str,
    sizes: Sequence[float],
    ratios: Sequence[float],
    fe_lower: Sequence[float],
    fe_upper: Sequence[float],
    en_lower: Sequence[float],
    en_upper: Sequence[float],
) -> str:
    """Render one measure's funnel plot.

    ``sizes`` must be ascending so the per-center limit values trace the
    control curves; the solid curves are the fixed-effects limits, the dotted
    curves the empirical-null limits, and the dash-dotted line the null
    ratio of one.
    """
    all_y = list(ratios) + list(fe_lower) + list(fe_upper) + list(en_lower) + list(en_upper) + [1.0]
    x_lo, x_hi = 0.0, max(sizes) * 1.05 if sizes else 1.0
    y_lo = min(all_y)
    y_hi = max(all_y)
    pad = 0.05 * (y_hi - y_lo or 1.0)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    def sx(v: float) -> float:
        return _ML + (v - x_lo) / (x_hi - x_lo) * (_W - _ML - _MR)

    def sy(v: float) -> float:
        return _H - _MB - (v - y_lo) / (y_hi - y_lo) * (_H - _MT - _MB)

    def polyline(ys: Sequence[float], style: str) -> str:
        pts = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in zip(sizes, ys))
        return f'<polyline fill="none" {style} points="{pts}"/>'

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        GENERATOR_COMMENT,
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W:g}" height="{_H:g}" '
        f'viewBox="0 0 {_W:g} {_H:g}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{_fmt(_W / 2)}" y="20" font-family="sans-serif" font-size="14" '
        f'text-anchor="middle">{title}</text>',
    ]
    # axes
    parts.append(f'<line x1="{_fmt(_ML)}" y1="{_fmt(_H - _MB)}" x2="{_fmt(_W - _MR)}" '
                 f'y2="{_fmt(_H - _MB)}" stroke="black" stroke-width="1"/>')
    parts.append(f'<line x1="{_fmt(_ML)}" y1="{_fmt(_MT)}" x2="{_fmt(_ML)}" '
                 f'y2="{_fmt(_H - _MB)}" stroke="black" stroke-width="1"/>')
    for t in _ticks(x_lo, x_hi):
        parts.append(f'<line x1="{_fmt(sx(t))}" y1="{_fmt(_H - _MB)}" x2="{_fmt(sx(t))}" '
                     f'y2="{_fmt(_H - _MB + 4)}" stroke="black" stroke-width="1"/>')
        parts.append(f'<text x="{_fmt(sx(t))}" y="{_fmt(_H - _MB + 18)}" '
                     f'font-family="sans-serif" font-size="11" text-anchor="middle">{t:g}</text>')
    for t in _ticks(y_lo, y_hi):
        parts.append(f'<line x1="{_fmt(_ML - 4)}" y1="{_fmt(sy(t))}" x2="{_fmt(_ML)}" '
                     f'y2="{_fmt(sy(t))}" stroke="black" stroke-width="1"/>')
        parts.append(f'<text x="{_fmt(_ML - 8)}" y="{_fmt(sy(t) + 4)}" '
                     f'font-family="sans-serif" font-size="11" text-anchor="end">{t:g}</text>')
    parts.append(f'<text x="{_fmt((_ML + _W - _MR) / 2)}" y="{_fmt(_H - 8)}" '
                 f'font-family="sans-serif" font-size="12" text-anchor="middle">'
                 f'effective size</text>')
    parts.append(f'<text x="14" y="{_fmt((_MT + _H - _MB) / 2)}" font-family="sans-serif" '
                 f'font-size="12" text-anchor="middle" '
                 f'transform="rotate(-90 14 {_fmt((_MT + _H - _MB) / 2)})">observed / expected</text>')
    # null line at ratio 1
    parts.append(f'<line x1="{_fmt(_ML)}" y1="{_fmt(sy(1.0))}" x2="{_fmt(_W - _MR)}" '
                 f'y2="{_fmt(sy(1.0))}" stroke="gray" stroke-width="1" '
                 f'stroke-dasharray="8,3,2,3"/>')
    # control-limit curves
    solid = 'stroke="black" stroke-width="1.2"'
    dotted = 'stroke="black" stroke-width="1.2" stroke-dasharray="2,3"'
    parts.append(polyline(fe_lower, solid))
    parts.append(polyline(fe_upper, solid))
    parts.append(polyline(en_lower, dotted))
    parts.append(polyline(en_upper, dotted))
    # centers
    for x, y in zip(sizes, ratios):
        parts.append(f'<circle cx="{_fmt(sx(x))}" cy="{_fmt(sy(y))}" r="2.4" '
                     f'fill="none" stroke="steelblue" stroke-width="1"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"

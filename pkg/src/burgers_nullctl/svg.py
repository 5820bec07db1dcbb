"""Minimal native SVG figures: line plots and a space-time heat map.

Output is deterministic text (fixed number formatting, no timestamps) so that
figures can be diffed alongside their CSV data.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")

W, H = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 150, 40, 55


@dataclass
class Series:
    label: str
    x: np.ndarray
    y: np.ndarray
    dashed: bool = False


@dataclass
class Axes:
    title: str
    xlabel: str
    ylabel: str
    logx: bool = False
    logy: bool = False
    series: list[Series] = field(default_factory=list)

    def add(self, label: str, x, y, *, dashed: bool = False) -> None:
        self.series.append(Series(label, np.asarray(x, float), np.asarray(y, float), dashed))


def _f(v: float) -> str:
    return f"{v:.2f}"


def _tr(v: np.ndarray, log: bool) -> np.ndarray:
    if not log:
        return v
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(v > 0, np.log10(np.where(v > 0, v, 1.0)), np.nan)


def _range(vals: list[np.ndarray]) -> tuple[float, float]:
    finite = [v[np.isfinite(v)] for v in vals]
    finite = [v for v in finite if v.size]
    if not finite:
        return 0.0, 1.0
    lo = min(float(v.min()) for v in finite)
    hi = max(float(v.max()) for v in finite)
    if hi - lo < 1e-300:
        pad = max(abs(hi), 1.0) * 0.5
        return lo - pad, hi + pad
    return lo, hi


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    step = (hi - lo) / n
    mag = 10.0 ** math.floor(math.log10(step))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= step), default=10 * mag)
    start = math.ceil(lo / step) * step
    out = []
    t = start
    while t <= hi + 1e-9 * step:
        out.append(0.0 if abs(t) < 1e-12 * step else t)
        t += step
    return out


def _tick_label(v: float, log: bool) -> str:
    return f"1e{v:g}" if log else f"{v:g}"


def line_plot(path: str | Path, ax: Axes) -> None:
    xs = [_tr(s.x, ax.logx) for s in ax.series]
    ys = [_tr(s.y, ax.logy) for s in ax.series]
    x0, x1 = _range(xs)
    y0, y1 = _range(ys)
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM

    def px(v):
        return LEFT + (v - x0) / (x1 - x0) * pw

    def py(v):
        return TOP + ph - (v - y0) / (y1 - y0) * ph

    out = [_header(ax.title)]
    out.append(f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#000"/>')
    for t in _ticks(x0, x1):
        X = _f(px(t))
        out.append(f'<line x1="{X}" y1="{TOP + ph}" x2="{X}" y2="{TOP + ph + 5}" stroke="#000"/>')
        out.append(f'<text x="{X}" y="{TOP + ph + 18}" text-anchor="middle">{_tick_label(t, ax.logx)}</text>')
    for t in _ticks(y0, y1):
        Y = _f(py(t))
        out.append(f'<line x1="{LEFT - 5}" y1="{Y}" x2="{LEFT}" y2="{Y}" stroke="#000"/>')
        out.append(f'<text x="{LEFT - 8}" y="{Y}" text-anchor="end" dominant-baseline="middle">'
                   f'{_tick_label(t, ax.logy)}</text>')
    out.append(f'<text x="{LEFT + pw / 2}" y="{H - 12}" text-anchor="middle">{escape(ax.xlabel)}</text>')
    out.append(f'<text x="16" y="{TOP + ph / 2}" text-anchor="middle" '
               f'transform="rotate(-90 16 {TOP + ph / 2})">{escape(ax.ylabel)}</text>')
    for k, (s, xv, yv) in enumerate(zip(ax.series, xs, ys)):
        color = PALETTE[k % len(PALETTE)]
        ok = np.isfinite(xv) & np.isfinite(yv)
        pts = " ".join(f"{_f(px(a))},{_f(py(b))}" for a, b in zip(xv[ok], yv[ok]))
        dash = ' stroke-dasharray="5,3"' if s.dashed else ""
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.4"{dash} points="{pts}"/>')
        ly = TOP + 14 + 16 * k
        out.append(f'<line x1="{W - RIGHT + 10}" y1="{ly}" x2="{W - RIGHT + 30}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"{dash}/>')
        out.append(f'<text x="{W - RIGHT + 35}" y="{ly}" dominant-baseline="middle">{escape(s.label)}</text>')
    out.append("</svg>\n")
    Path(path).write_text("\n".join(out), encoding="utf-8", newline="\n")


def _color(v: float, vmax: float) -> str:
    """Diverging blue-white-red map on ``[-vmax, vmax]``."""
    if vmax <= 0:
        return "#ffffff"
    a = max(-1.0, min(1.0, v / vmax))
    if a >= 0:
        r, g, b = 255, int(255 * (1 - a)), int(255 * (1 - a))
    else:
        r, g, b = int(255 * (1 + a)), int(255 * (1 + a)), 255
    return f"#{r:02x}{g:02x}{b:02x}"


def heat_map(path: str | Path, title: str, t: Sequence[float], x: Sequence[float], values: np.ndarray,
             marks: Sequence[tuple[float, str]] = (), *, max_cols: int = 200, max_rows: int = 100) -> None:
    """``values[i, j]`` at time ``t[i]`` and position ``x[j]``; time runs left to right.

    The image is block-averaged down to at most ``max_cols x max_rows`` cells;
    the colour scale is symmetric in ``max|values|``.
    """
    t = np.asarray(t, float)
    x = np.asarray(x, float)
    V = np.asarray(values, float)
    ti = np.unique(np.linspace(0, t.size - 1, min(max_cols, t.size)).round().astype(int))
    xi = np.unique(np.linspace(0, x.size - 1, min(max_rows, x.size)).round().astype(int))
    vmax = float(np.max(np.abs(V))) if V.size else 0.0
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM
    t0, t1 = float(t[0]), float(t[-1]) if t[-1] > t[0] else float(t[0]) + 1.0
    out = [_header(title)]
    cw = pw / len(ti)
    rh = ph / len(xi)
    for a, i in enumerate(ti):
        for b, j in enumerate(xi):
            out.append(f'<rect x="{_f(LEFT + a * cw)}" y="{_f(TOP + ph - (b + 1) * rh)}" '
                       f'width="{_f(cw + 0.3)}" height="{_f(rh + 0.3)}" fill="{_color(V[i, j], vmax)}"/>')
    out.append(f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#000"/>')
    for tm, label in marks:
        X = _f(LEFT + (tm - t0) / (t1 - t0) * pw)
        out.append(f'<line x1="{X}" y1="{TOP}" x2="{X}" y2="{TOP + ph}" stroke="#000" stroke-dasharray="4,3"/>')
        out.append(f'<text x="{X}" y="{TOP - 6}" text-anchor="middle">{escape(label)}</text>')
    for tk in _ticks(t0, t1):
        X = _f(LEFT + (tk - t0) / (t1 - t0) * pw)
        out.append(f'<text x="{X}" y="{TOP + ph + 18}" text-anchor="middle">{tk:g}</text>')
    for xk in _ticks(float(x[0]), float(x[-1])):
        Y = _f(TOP + ph - (xk - x[0]) / (x[-1] - x[0]) * ph)
        out.append(f'<text x="{LEFT - 8}" y="{Y}" text-anchor="end" dominant-baseline="middle">{xk:g}</text>')
    out.append(f'<text x="{LEFT + pw / 2}" y="{H - 12}" text-anchor="middle">t</text>')
    out.append(f'<text x="16" y="{TOP + ph / 2}" text-anchor="middle">x</text>')
    # colour bar
    bx = W - RIGHT + 25
    for k in range(21):
        v = vmax * (1 - k / 10)
        out.append(f'<rect x="{bx}" y="{_f(TOP + k * ph / 21)}" width="16" height="{_f(ph / 21 + 0.3)}" '
                   f'fill="{_color(v, vmax)}"/>')
    out.append(f'<text x="{bx + 22}" y="{TOP + 8}">{vmax:.3g}</text>')
    out.append(f'<text x="{bx + 22}" y="{TOP + ph}">{-vmax:.3g}</text>')
    out.append("</svg>\n")
    Path(path).write_text("\n".join(out), encoding="utf-8", newline="\n")


def _header(title: str) -> str:
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
            f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">\n'
            f'<rect width="{W}" height="{H}" fill="#fff"/>\n'
            f'<text x="{W / 2}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>')

"""Minimal SVG chart emission.

Line and bar charts are assembled by hand so figure output stays an
optional, dependency-free extra. All coordinates are printed with fixed
precision, keeping rerendered files byte-identical.
"""

from __future__ import annotations

import math

from .dataset import atomic_write_text

_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
            "#8c564b", "#17becf", "#7f7f7f"]
_W, _H = 640, 440
_ML, _MR, _MT, _MB = 72, 24, 46, 58      # plot-area margins


def _num(x: float) -> str:
    return f"{x:.2f}".rstrip("0").rstrip(".")


def _label(x: float) -> str:
    return f"{x:.4g}"


def _ticks(lo: float, hi: float, want: int = 5) -> list[float]:
    """Round tick positions covering [lo, hi]."""
    if not math.isfinite(lo) or not math.isfinite(hi) or hi <= lo:
        return [lo]
    span = hi - lo
    step = 10.0 ** math.floor(math.log10(span / want))
    for mult in (1.0, 2.0, 5.0, 10.0):
        if span / (step * mult) <= want:
            step *= mult
            break
    out = []
    v = math.ceil(lo / step) * step
    while v <= hi + 1e-9 * span:
        out.append(0.0 if abs(v) < 1e-9 * step else v)
        v += step
    return out or [lo]


def _bounds(values) -> tuple[float, float]:
    finite = [v for v in values if math.isfinite(v)]
    if not finite:
        return 0.0, 1.0
    lo, hi = min(finite), max(finite)
    if hi == lo:
        pad = abs(lo) * 0.1 or 1.0
        return lo - pad, hi + pad
    pad = (hi - lo) * 0.05
    return lo - pad, hi + pad


class _Canvas:
    def __init__(self, title: str, xlabel: str, ylabel: str):
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" '
            f'height="{_H}" viewBox="0 0 {_W} {_H}">',
            f'<rect width="{_W}" height="{_H}" fill="white"/>',
            f'<text x="{_W // 2}" y="24" font-family="sans-serif" '
            f'font-size="15" text-anchor="middle">{title}</text>',
            f'<text x="{(_ML + _W - _MR) // 2}" y="{_H - 12}" '
            f'font-family="sans-serif" font-size="12" '
            f'text-anchor="middle">{xlabel}</text>',
            f'<text x="18" y="{(_MT + _H - _MB) // 2}" '
            f'font-family="sans-serif" font-size="12" text-anchor="middle" '
            f'transform="rotate(-90 18 {(_MT + _H - _MB) // 2})">{ylabel}</text>',
        ]

    def add(self, fragment: str) -> None:
        self.parts.append(fragment)

    def finish(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _axes(canvas: _Canvas, xlo, xhi, ylo, yhi, to_px):
    canvas.add(f'<rect x="{_ML}" y="{_MT}" width="{_W - _ML - _MR}" '
               f'height="{_H - _MT - _MB}" fill="none" stroke="#333"/>')
    for tx in _ticks(xlo, xhi):
        px, _ = to_px(tx, ylo)
        canvas.add(f'<line x1="{_num(px)}" y1="{_H - _MB}" x2="{_num(px)}" '
                   f'y2="{_H - _MB + 5}" stroke="#333"/>')
        canvas.add(f'<text x="{_num(px)}" y="{_H - _MB + 18}" '
                   f'font-family="sans-serif" font-size="11" '
                   f'text-anchor="middle">{_label(tx)}</text>')
    for ty in _ticks(ylo, yhi):
        _, py = to_px(xlo, ty)
        canvas.add(f'<line x1="{_ML - 5}" y1="{_num(py)}" x2="{_ML}" '
                   f'y2="{_num(py)}" stroke="#333"/>')
        canvas.add(f'<line x1="{_ML}" y1="{_num(py)}" x2="{_W - _MR}" '
                   f'y2="{_num(py)}" stroke="#eee"/>')
        canvas.add(f'<text x="{_ML - 8}" y="{_num(py + 4)}" '
                   f'font-family="sans-serif" font-size="11" '
                   f'text-anchor="end">{_label(ty)}</text>')


def line_chart(path: str, series, title: str = "", xlabel: str = "",
               ylabel: str = "") -> None:
    """Write a multi-series line chart.

    series: iterable of (label, xs, ys) triples; points with non-finite
    coordinates are dropped.
    """
    series = [(str(lbl), list(map(float, xs)), list(map(float, ys)))
              for lbl, xs, ys in series]
    xlo, xhi = _bounds([x for _, xs, _ in series for x in xs])
    ylo, yhi = _bounds([y for _, _, ys in series for y in ys])

    def to_px(x, y):
        px = _ML + (x - xlo) / (xhi - xlo) * (_W - _ML - _MR)
        py = _H - _MB - (y - ylo) / (yhi - ylo) * (_H - _MT - _MB)
        return px, py

    canvas = _Canvas(title, xlabel, ylabel)
    _axes(canvas, xlo, xhi, ylo, yhi, to_px)
    for i, (label, xs, ys) in enumerate(series):
        color = _PALETTE[i % len(_PALETTE)]
        pts = [(x, y) for x, y in zip(xs, ys)
               if math.isfinite(x) and math.isfinite(y)]
        coords = " ".join(f"{_num(to_px(x, y)[0])},{_num(to_px(x, y)[1])}"
                          for x, y in pts)
        if len(pts) > 1:
            canvas.add(f'<polyline points="{coords}" fill="none" '
                       f'stroke="{color}" stroke-width="1.5"/>')
        for x, y in pts:
            px, py = to_px(x, y)
            canvas.add(f'<circle cx="{_num(px)}" cy="{_num(py)}" r="2.5" '
                       f'fill="{color}"/>')
        ly = _MT + 16 + 16 * i
        canvas.add(f'<line x1="{_W - _MR - 130}" y1="{ly - 4}" '
                   f'x2="{_W - _MR - 106}" y2="{ly - 4}" stroke="{color}" '
                   f'stroke-width="2"/>')
        canvas.add(f'<text x="{_W - _MR - 100}" y="{ly}" '
                   f'font-family="sans-serif" font-size="11">{label}</text>')
    atomic_write_text(path, canvas.finish())


def bar_chart(path: str, labels, values, title: str = "",
              ylabel: str = "") -> None:
    """Write a single-series vertical bar chart with one label per bar."""
    labels = [str(x) for x in labels]
    values = [float(v) for v in values]
    if len(labels) != len(values) or not labels:
        raise ValueError("bar_chart: need equally many labels and values")
    ylo = min(0.0, min(values))
    yhi = max(v for v in values + [1e-12])
    yhi += (yhi - ylo) * 0.05

    def to_py(y):
        return _H - _MB - (y - ylo) / (yhi - ylo) * (_H - _MT - _MB)

    canvas = _Canvas(title, "", ylabel)
    _axes(canvas, 0.0, float(len(labels)), ylo, yhi,
          lambda x, y: (_ML + x / len(labels) * (_W - _ML - _MR), to_py(y)))
    width = (_W - _ML - _MR) / len(labels)
    for i, (label, v) in enumerate(zip(labels, values)):
        x0 = _ML + i * width + 0.15 * width
        top = to_py(max(v, 0.0))
        height = abs(to_py(v) - to_py(0.0))
        canvas.add(f'<rect x="{_num(x0)}" y="{_num(top)}" '
                   f'width="{_num(0.7 * width)}" height="{_num(height)}" '
                   f'fill="{_PALETTE[0]}"/>')
        cx = x0 + 0.35 * width
        canvas.add(f'<text x="{_num(cx)}" y="{_H - _MB + 16}" '
                   f'font-family="sans-serif" font-size="10" '
                   f'text-anchor="middle">{label}</text>')
    atomic_write_text(path, canvas.finish())

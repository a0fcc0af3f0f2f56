"""Hand-written standalone SVG charts: a load-time scatter and a bar chart."""

from __future__ import annotations

import math
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

FONT = 'font-family="sans-serif" font-size="12"'


def nice_ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    """Round-numbered ticks from at or below ``lo`` to at or above ``hi``."""
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    first = math.floor(lo / step + 1e-9)
    last = math.ceil(hi / step - 1e-9)
    return [round(i * step, 10) for i in range(first, last + 1)]


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _tick_label(v: float) -> str:
    return f"{v:g}"


def _document(width: int, height: int, body: list[str]) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">')
    return "\n".join(['<?xml version="1.0" encoding="UTF-8"?>', head,
                      f'<rect width="{width}" height="{height}" fill="white"/>', *body,
                      "</svg>"]) + "\n"


def scatter(x: np.ndarray, y: np.ndarray, flagged: np.ndarray, title: str,
            x_label: str = "Index", y_label: str = "Page load time (s)",
            width: int = 900, height: int = 420) -> str:
    """Normal points as small grey dots, flagged points as red circles."""
    left, right, top, bottom = 70, 20, 40, 50
    pw, ph = width - left - right, height - top - bottom
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    flagged = np.asarray(flagged, dtype=bool)
    x_hi = float(x.max()) if len(x) else 1.0
    y_hi = float(y.max()) if len(y) else 1.0
    xt = nice_ticks(0.0, max(x_hi, 1.0))
    yt = nice_ticks(0.0, max(y_hi, 1e-3))
    x_max, y_max = xt[-1], yt[-1]

    def px(v):
        return left + pw * v / x_max

    def py(v):
        return top + ph - ph * v / y_max

    body = [f'<text x="{width / 2:.0f}" y="22" text-anchor="middle" {FONT} '
            f'font-weight="bold">{escape(title)}</text>',
            f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
            f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>']
    for v in xt:
        body.append(f'<line x1="{_fmt(px(v))}" y1="{top + ph}" x2="{_fmt(px(v))}" '
                    f'y2="{top + ph + 5}" stroke="black"/>')
        body.append(f'<text x="{_fmt(px(v))}" y="{top + ph + 18}" text-anchor="middle" '
                    f'{FONT}>{_tick_label(v)}</text>')
    for v in yt:
        body.append(f'<line x1="{left - 5}" y1="{_fmt(py(v))}" x2="{left}" y2="{_fmt(py(v))}" '
                    f'stroke="black"/>')
        body.append(f'<text x="{left - 8}" y="{_fmt(py(v) + 4)}" text-anchor="end" '
                    f'{FONT}>{_tick_label(v)}</text>')
    body.append(f'<text x="{left + pw / 2:.0f}" y="{height - 10}" text-anchor="middle" '
                f'{FONT}>{escape(x_label)}</text>')
    body.append(f'<text x="16" y="{top + ph / 2:.0f}" text-anchor="middle" {FONT} '
                f'transform="rotate(-90 16 {top + ph / 2:.0f})">{escape(y_label)}</text>')
    normal = ["M" + _fmt(px(a)) + " " + _fmt(py(b)) + "h0" for a, b in zip(x[~flagged], y[~flagged])]
    if normal:
        body.append('<path class="normal" stroke="#7f7f7f" stroke-width="2" stroke-linecap="round" '
                    f'd="{"".join(normal)}"/>')
    body.append('<g class="anomalies" fill="none" stroke="red">')
    for a, b in zip(x[flagged], y[flagged]):
        body.append(f'<circle cx="{_fmt(px(a))}" cy="{_fmt(py(b))}" r="3"/>')
    body.append("</g>")
    n_flag = int(flagged.sum())
    body.append(f'<text x="{left + pw - 4}" y="{top + 14}" text-anchor="end" {FONT}>'
                f'anomalies: {n_flag} of {len(x)}</text>')
    return _document(width, height, body)


def bar_chart(items: Sequence[tuple[str, float]], title: str, width: int = 700) -> str:
    """Horizontal bars in the given order (callers pass them sorted)."""
    bar_h, gap, top, label_w, right = 18, 6, 40, 190, 70
    height = top + len(items) * (bar_h + gap) + 20
    vmax = max((v for _, v in items), default=1.0) or 1.0
    span = width - label_w - right
    body = [f'<text x="{width / 2:.0f}" y="22" text-anchor="middle" {FONT} '
            f'font-weight="bold">{escape(title)}</text>']
    for i, (name, value) in enumerate(items):
        y = top + i * (bar_h + gap)
        w = span * value / vmax
        body.append(f'<text x="{label_w - 8}" y="{y + 13}" text-anchor="end" {FONT}>'
                    f'{escape(name)}</text>')
        body.append(f'<rect class="bar" x="{label_w}" y="{y}" width="{_fmt(w)}" height="{bar_h}" '
                    f'fill="#1f77b4" data-value="{value:.6f}"/>')
        body.append(f'<text x="{_fmt(label_w + w + 4)}" y="{y + 13}" {FONT}>{value:.4f}</text>')
    return _document(width, height, body)


def write(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)

"""Deterministic SVG figures, written by hand so identical inputs give
identical bytes (no library metadata, timestamps or hashed ids).

Two renderers: line charts for training metrics, grouped bars with error
whiskers for the three-setting evaluation report.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

WIDTH, HEIGHT = 640, 420
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 64, 16, 36, 56
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b")


def _fmt(x: float) -> str:
    if x == int(x) and abs(x) < 1e12:
        return str(int(x))
    return f"{x:.6g}"


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-12 * step:
        ticks.append(round(t, 12))
        t += step
    return ticks


@dataclass
class _Frame:
    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float

    def px(self, x: float) -> float:
        span = self.x_hi - self.x_lo or 1.0
        return MARGIN_L + (x - self.x_lo) / span * (WIDTH - MARGIN_L - MARGIN_R)

    def py(self, y: float) -> float:
        span = self.y_hi - self.y_lo or 1.0
        return HEIGHT - MARGIN_B - (y - self.y_lo) / span * (HEIGHT - MARGIN_T - MARGIN_B)


def _header(title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" '
        f'font-family="sans-serif" font-size="15">{title}</text>',
    ]


def _axes(frame: _Frame, xlabel: str, ylabel: str, x_ticks: list[float], y_ticks: list[float]) -> list[str]:
    parts = []
    x0, y0 = MARGIN_L, HEIGHT - MARGIN_B
    parts.append(f'<line x1="{x0}" y1="{MARGIN_T}" x2="{x0}" y2="{y0}" stroke="black"/>')
    parts.append(f'<line x1="{x0}" y1="{y0}" x2="{WIDTH - MARGIN_R}" y2="{y0}" stroke="black"/>')
    for t in x_ticks:
        px = frame.px(t)
        parts.append(f'<line x1="{px:.2f}" y1="{y0}" x2="{px:.2f}" y2="{y0 + 5}" stroke="black"/>')
        parts.append(
            f'<text x="{px:.2f}" y="{y0 + 18}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{_fmt(t)}</text>'
        )
    for t in y_ticks:
        py = frame.py(t)
        parts.append(f'<line x1="{x0 - 5}" y1="{py:.2f}" x2="{x0}" y2="{py:.2f}" stroke="black"/>')
        parts.append(
            f'<text x="{x0 - 8}" y="{py + 4:.2f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{_fmt(t)}</text>'
        )
    parts.append(
        f'<text x="{(MARGIN_L + WIDTH - MARGIN_R) / 2:.1f}" y="{HEIGHT - 16}" '
        f'text-anchor="middle" font-family="sans-serif" font-size="12">{xlabel}</text>'
    )
    parts.append(
        f'<text x="16" y="{(MARGIN_T + HEIGHT - MARGIN_B) / 2:.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 16 {(MARGIN_T + HEIGHT - MARGIN_B) / 2:.1f})">{ylabel}</text>'
    )
    return parts


def render_line_chart(
    series: list[tuple[str, list[float], list[float]]],
    title: str,
    xlabel: str,
    ylabel: str,
) -> str:
    """Polyline chart; series is a list of (label, xs, ys). Empty input gives bare axes."""
    xs_all = [x for _, xs, _ in series for x in xs]
    ys_all = [y for _, _, ys in series for y in ys]
    if xs_all:
        frame = _Frame(min(xs_all), max(xs_all), min(min(ys_all), 0.0), max(ys_all))
    else:
        frame = _Frame(0.0, 1.0, 0.0, 1.0)
    parts = _header(title)
    parts += _axes(frame, xlabel, ylabel,
                   _ticks(frame.x_lo, frame.x_hi), _ticks(frame.y_lo, frame.y_hi))
    for idx, (label, xs, ys) in enumerate(series):
        color = PALETTE[idx % len(PALETTE)]
        if xs:
            points = " ".join(f"{frame.px(x):.2f},{frame.py(y):.2f}" for x, y in zip(xs, ys))
            parts.append(f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = MARGIN_T + 14 + 16 * idx
        parts.append(f'<rect x="{WIDTH - MARGIN_R - 130}" y="{ly - 9}" width="10" height="10" fill="{color}"/>')
        parts.append(
            f'<text x="{WIDTH - MARGIN_R - 115}" y="{ly}" font-family="sans-serif" '
            f'font-size="11">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_grouped_bars(
    group_labels: list[str],
    series: list[tuple[str, list[float], list[float]]],
    title: str,
    ylabel: str,
) -> str:
    """Grouped bar chart; series is (label, means per group, stds per group)."""
    vals = [m for _, means, stds in series for m in means]
    errs = [m + s for _, means, stds in series for m, s in zip(means, stds)]
    lo = min(0.0, *vals) if vals else 0.0
    hi = max(errs) if errs else 1.0
    frame = _Frame(0.0, max(len(group_labels), 1), lo, hi if hi > lo else lo + 1.0)
    parts = _header(title)
    parts += _axes(frame, "", ylabel, [], _ticks(frame.y_lo, frame.y_hi))
    n_series = max(len(series), 1)
    group_w = (WIDTH - MARGIN_L - MARGIN_R) / max(len(group_labels), 1)
    bar_w = 0.8 * group_w / n_series
    y0 = frame.py(0.0)
    for gi, label in enumerate(group_labels):
        cx = MARGIN_L + (gi + 0.5) * group_w
        parts.append(
            f'<text x="{cx:.2f}" y="{HEIGHT - MARGIN_B + 18}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{label}</text>'
        )
        for si, (slabel, means, stds) in enumerate(series):
            if gi >= len(means):
                continue
            color = PALETTE[si % len(PALETTE)]
            x = cx - 0.4 * group_w + si * bar_w
            top = frame.py(means[gi])
            yb, yt = (y0, top) if means[gi] >= 0 else (top, y0)
            parts.append(
                f'<rect x="{x:.2f}" y="{min(yb, yt):.2f}" width="{bar_w:.2f}" '
                f'height="{abs(yb - yt):.2f}" fill="{color}"/>'
            )
            if stds[gi] > 0:
                ex = x + bar_w / 2
                e_lo, e_hi = frame.py(means[gi] - stds[gi]), frame.py(means[gi] + stds[gi])
                parts.append(
                    f'<line x1="{ex:.2f}" y1="{e_lo:.2f}" x2="{ex:.2f}" y2="{e_hi:.2f}" '
                    f'stroke="black" stroke-width="1"/>'
                )
    for si, (slabel, _, _) in enumerate(series):
        color = PALETTE[si % len(PALETTE)]
        ly = MARGIN_T + 14 + 16 * si
        parts.append(f'<rect x="{WIDTH - MARGIN_R - 150}" y="{ly - 9}" width="10" height="10" fill="{color}"/>')
        parts.append(
            f'<text x="{WIDTH - MARGIN_R - 135}" y="{ly}" font-family="sans-serif" '
            f'font-size="11">{slabel}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"

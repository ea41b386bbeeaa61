"""Dependency-free SVG emission for the report figures.

Plots are presentation artifacts; the CSV files hold the data of record.
Canvas size and axis mapping are fixed so outputs are byte-stable across runs.
"""

from __future__ import annotations

import math

import numpy as np

WIDTH, HEIGHT = 640, 420
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 64, 16, 34, 46
PALETTE = ("#000000", "#cc2222", "#2255cc", "#22aa55", "#aa7700", "#7744aa")


def _fmt(v: float) -> str:
    return f"{v:.6g}"


class _Canvas:
    def __init__(self, x_range, y_range, title, xlabel, ylabel):
        self.x0, self.x1 = x_range
        self.y0, self.y1 = y_range
        if self.x1 <= self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 <= self.y0:
            self.y1 = self.y0 + 1.0
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="monospace" font-size="12">',
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH // 2}" y="20" text-anchor="middle">{title}</text>',
            f'<text x="{(MARGIN_L + WIDTH - MARGIN_R) // 2}" y="{HEIGHT - 10}" '
            f'text-anchor="middle">{xlabel}</text>',
            f'<text x="14" y="{(MARGIN_T + HEIGHT - MARGIN_B) // 2}" text-anchor="middle" '
            f'transform="rotate(-90 14 {(MARGIN_T + HEIGHT - MARGIN_B) // 2})">{ylabel}</text>',
        ]
        self._axes()

    def px(self, x: float) -> float:
        w = WIDTH - MARGIN_L - MARGIN_R
        return MARGIN_L + (x - self.x0) / (self.x1 - self.x0) * w

    def py(self, y: float) -> float:
        h = HEIGHT - MARGIN_T - MARGIN_B
        return HEIGHT - MARGIN_B - (y - self.y0) / (self.y1 - self.y0) * h

    def _axes(self):
        xa, xb = self.px(self.x0), self.px(self.x1)
        ya, yb = self.py(self.y0), self.py(self.y1)
        self.parts.append(
            f'<rect x="{_fmt(xa)}" y="{_fmt(yb)}" width="{_fmt(xb - xa)}" '
            f'height="{_fmt(ya - yb)}" fill="none" stroke="#444444"/>'
        )
        for i in range(5):
            xv = self.x0 + i * (self.x1 - self.x0) / 4
            yv = self.y0 + i * (self.y1 - self.y0) / 4
            self.parts.append(
                f'<text x="{_fmt(self.px(xv))}" y="{HEIGHT - MARGIN_B + 16}" '
                f'text-anchor="middle">{_fmt(xv)}</text>'
            )
            self.parts.append(
                f'<text x="{MARGIN_L - 6}" y="{_fmt(self.py(yv) + 4)}" '
                f'text-anchor="end">{_fmt(yv)}</text>'
            )

    def polyline(self, xs, ys, color: str, width: float = 1.5):
        pts = " ".join(f"{_fmt(self.px(x))},{_fmt(self.py(y))}" for x, y in zip(xs, ys))
        self.parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{width}"/>'
        )

    def circle(self, cx, cy, r_data, color: str):
        # radius mapped through the x scale; callers use it on equal-aspect data
        rx = abs(self.px(cx + r_data) - self.px(cx))
        self.parts.append(
            f'<circle cx="{_fmt(self.px(cx))}" cy="{_fmt(self.py(cy))}" r="{_fmt(rx)}" '
            f'fill="{color}" fill-opacity="0.25" stroke="{color}"/>'
        )

    def vline(self, x, color: str, dash: str = "4 3"):
        self.parts.append(
            f'<line x1="{_fmt(self.px(x))}" y1="{_fmt(self.py(self.y0))}" '
            f'x2="{_fmt(self.px(x))}" y2="{_fmt(self.py(self.y1))}" '
            f'stroke="{color}" stroke-dasharray="{dash}"/>'
        )

    def bar(self, x, w, h, color: str):
        self.parts.append(
            f'<rect x="{_fmt(self.px(x))}" y="{_fmt(self.py(h))}" '
            f'width="{_fmt(self.px(x + w) - self.px(x))}" '
            f'height="{_fmt(self.py(0) - self.py(h))}" fill="{color}" stroke="#333333"/>'
        )

    def legend(self, entries):
        y = MARGIN_T + 14
        for label, color in entries:
            self.parts.append(
                f'<line x1="{WIDTH - 170}" y1="{y - 4}" x2="{WIDTH - 140}" y2="{y - 4}" '
                f'stroke="{color}" stroke-width="2"/>'
            )
            self.parts.append(f'<text x="{WIDTH - 134}" y="{y}">{label}</text>')
            y += 16

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def histogram_svg(values, bin_width: float = 0.005, title: str = "", xlabel: str = "rho") -> str:
    vals = np.asarray([v for v in values if math.isfinite(v)], dtype=float)
    if len(vals) == 0:
        vals = np.zeros(1)
    lo = math.floor(vals.min() / bin_width) * bin_width
    hi = math.ceil(vals.max() / bin_width) * bin_width
    if hi <= lo:
        hi = lo + bin_width
    nbins = int(round((hi - lo) / bin_width))
    counts, edges = np.histogram(vals, bins=nbins, range=(lo, hi))
    cv = _Canvas((lo, hi), (0.0, float(counts.max()) * 1.05 + 1), title, xlabel, "count")
    for c, e in zip(counts, edges[:-1]):
        if c > 0:
            cv.bar(e, bin_width, float(c), "#77aadd")
    if lo < 0 < hi:
        cv.vline(0.0, "#cc2222")
    return cv.render()


def trajectory_overlay_svg(curves, circles=(), title: str = "", labels=("x1", "x2")) -> str:
    """Phase-plane overlay of (label, xs, ys) curves plus optional discs."""
    all_x = np.concatenate([np.asarray(xs, dtype=float) for _, xs, _ in curves])
    all_y = np.concatenate([np.asarray(ys, dtype=float) for _, _, ys in curves])
    for (cx, cy), r, _ in circles:
        all_x = np.append(all_x, [cx - r, cx + r])
        all_y = np.append(all_y, [cy - r, cy + r])
    pad_x = 0.05 * (all_x.max() - all_x.min() + 1e-12)
    pad_y = 0.05 * (all_y.max() - all_y.min() + 1e-12)
    cv = _Canvas(
        (all_x.min() - pad_x, all_x.max() + pad_x),
        (all_y.min() - pad_y, all_y.max() + pad_y),
        title,
        labels[0],
        labels[1],
    )
    for (center, r, _), color in zip(circles, ("#22aa55",) * len(circles)):
        cv.circle(center[0], center[1], r, color)
    entries = []
    for i, (label, xs, ys) in enumerate(curves):
        color = PALETTE[i % len(PALETTE)]
        cv.polyline(xs, ys, color)
        entries.append((label, color))
    cv.legend(entries)
    return cv.render()


def states_vs_time_svg(times, states, title: str = "", state_labels=None) -> str:
    times = np.asarray(times, dtype=float)
    states = np.asarray(states, dtype=float)
    n = states.shape[1]
    if state_labels is None:
        state_labels = [f"x{i + 1}" for i in range(n)]
    cv = _Canvas(
        (float(times.min()), float(times.max())),
        (float(states.min()) - 1e-9, float(states.max()) + 1e-9),
        title,
        "t [s]",
        "state",
    )
    entries = []
    for i in range(n):
        color = PALETTE[i % len(PALETTE)]
        cv.polyline(times, states[:, i], color)
        entries.append((state_labels[i], color))
    cv.legend(entries)
    return cv.render()

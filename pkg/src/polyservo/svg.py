"""Minimal deterministic SVG writer for run and batch plots.

Dependency-free on purpose: plots are polylines, rectangles, and text with
fixed decimal formatting, so identical inputs yield identical bytes.
"""

from __future__ import annotations

__all__ = ["SvgCanvas", "line_chart", "bar_chart"]

_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2"]


def _f(v: float) -> str:
    return f"{v:.3f}"


class SvgCanvas:
    def __init__(self, width: int, height: int):
        self.width = width
        self.height = height
        self._parts = []

    def line(self, x1, y1, x2, y2, color="#000000", width=1.0):
        self._parts.append(
            f'<line x1="{_f(x1)}" y1="{_f(y1)}" x2="{_f(x2)}" y2="{_f(y2)}" '
            f'stroke="{color}" stroke-width="{_f(width)}"/>'
        )

    def polyline(self, points, color="#000000", width=1.5):
        pts = " ".join(f"{_f(x)},{_f(y)}" for x, y in points)
        self._parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="{_f(width)}"/>'
        )

    def rect(self, x, y, w, h, fill="none", stroke="#000000", stroke_width=1.0):
        self._parts.append(
            f'<rect x="{_f(x)}" y="{_f(y)}" width="{_f(w)}" height="{_f(h)}" '
            f'fill="{fill}" stroke="{stroke}" stroke-width="{_f(stroke_width)}"/>'
        )

    def text(self, x, y, content, size=11, anchor="start", color="#000000"):
        self._parts.append(
            f'<text x="{_f(x)}" y="{_f(y)}" font-size="{size}" '
            f'font-family="sans-serif" text-anchor="{anchor}" fill="{color}">'
            f"{content}</text>"
        )

    def render(self) -> str:
        body = "\n".join(self._parts)
        return (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
            f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">\n'
            f"{body}\n</svg>\n"
        )

    def save(self, path):
        with open(path, "w") as f:
            f.write(self.render())


def _panel(canvas, x0, y0, w, h, ts, series, title):
    canvas.rect(x0, y0, w, h)
    canvas.text(x0 + 4, y0 + 13, title, size=11)
    lo = min(min(v) for _, v in series)
    hi = max(max(v) for _, v in series)
    if hi - lo < 1e-12:
        lo, hi = lo - 1.0, hi + 1.0
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad
    t0, t1 = ts[0], ts[-1]
    span_t = (t1 - t0) or 1.0

    def sx(t):
        return x0 + (t - t0) / span_t * w

    def sy(v):
        return y0 + h - (v - lo) / (hi - lo) * h

    if lo < 0 < hi:
        canvas.line(x0, sy(0.0), x0 + w, sy(0.0), color="#bbbbbb", width=0.7)
    for idx, (label, values) in enumerate(series):
        color = _PALETTE[idx % len(_PALETTE)]
        canvas.polyline([(sx(t), sy(v)) for t, v in zip(ts, values)], color=color)
        canvas.text(x0 + w - 4, y0 + 13 + 12 * idx, label, size=10, anchor="end", color=color)
    canvas.text(x0 + 2, y0 + h - 3, _f(lo), size=8, color="#666666")
    canvas.text(x0 + 2, y0 + 10 + 13, _f(hi), size=8, color="#666666")


def line_chart(path, ts, panels, width=900, height=600):
    """Grid of time-series panels: ``panels`` is a list of (title, series)
    where series is a list of (label, values)."""
    cols = 2
    rows = (len(panels) + cols - 1) // cols
    margin = 10
    pw = (width - (cols + 1) * margin) / cols
    ph = (height - (rows + 1) * margin) / rows
    canvas = SvgCanvas(width, height)
    for i, (title, series) in enumerate(panels):
        r, c = divmod(i, cols)
        _panel(
            canvas,
            margin + c * (pw + margin),
            margin + r * (ph + margin),
            pw,
            ph,
            ts,
            series,
            title,
        )
    canvas.save(path)


def bar_chart(path, groups, width=700, height=420):
    """Mean +/- std bars with min/max whiskers.

    ``groups`` is a list of (label, mean, std, vmin, vmax).
    """
    canvas = SvgCanvas(width, height)
    margin = 50
    plot_w = width - 2 * margin
    plot_h = height - 2 * margin
    lo = min(0.0, min(g[3] for g in groups))
    hi = max(g[4] for g in groups)
    hi = hi * 1.15 if hi > 0 else 1.0

    def sy(v):
        return margin + plot_h - (v - lo) / (hi - lo) * plot_h

    canvas.rect(margin, margin, plot_w, plot_h)
    slot = plot_w / len(groups)
    bar_w = 0.4 * slot
    for i, (label, mean, std, vmin, vmax) in enumerate(groups):
        cx = margin + (i + 0.5) * slot
        canvas.rect(
            cx - bar_w / 2,
            sy(mean + std),
            bar_w,
            max(sy(max(mean - std, lo)) - sy(mean + std), 0.1),
            fill="#9ecae1",
            stroke="#1f77b4",
        )
        canvas.line(cx, sy(vmin), cx, sy(vmax), color="#333333")
        canvas.line(cx - bar_w / 4, sy(vmin), cx + bar_w / 4, sy(vmin), color="#333333")
        canvas.line(cx - bar_w / 4, sy(vmax), cx + bar_w / 4, sy(vmax), color="#333333")
        canvas.line(cx - bar_w / 2, sy(mean), cx + bar_w / 2, sy(mean), color="#d62728", width=2.0)
        canvas.text(cx, height - margin + 16, label, size=11, anchor="middle")
        canvas.text(cx, sy(vmax) - 5, _f(vmax), size=8, anchor="middle", color="#666666")
    canvas.text(margin - 6, sy(lo) + 4, _f(lo), size=9, anchor="end")
    canvas.text(margin - 6, sy(hi) + 4, _f(hi), size=9, anchor="end")
    canvas.save(path)

"""Minimal SVG line plots (polylines on linear axes)."""

from __future__ import annotations

import numpy as np

COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(v):
    return f"{v:.4g}"


def line_plot(series, path=None, *, title="", xlabel="", ylabel="", width=640, height=400,
              hline=None) -> str:
    """Render ``series`` = [(x, y, label), ...] as an SVG document.

    ``hline`` draws a dashed horizontal reference line (e.g. 0).
    Returns the SVG text and writes it to ``path`` when given.
    """
    pad_l, pad_r, pad_t, pad_b = 60, 20, 30, 45
    xs = np.concatenate([np.asarray(s[0], float) for s in series])
    ys = np.concatenate([np.asarray(s[1], float) for s in series])
    if hline is not None:
        ys = np.append(ys, hline)
    x0, x1 = float(np.min(xs)), float(np.max(xs))
    y0, y1 = float(np.min(ys)), float(np.max(ys))
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1
    W, H = width - pad_l - pad_r, height - pad_t - pad_b

    def px(x):
        return pad_l + (x - x0) / (x1 - x0) * W

    def py(y):
        return pad_t + (y1 - y) / (y1 - y0) * H

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
           f'<rect x="{pad_l}" y="{pad_t}" width="{W}" height="{H}" fill="none" stroke="black"/>']
    for v, anchor in ((x0, "start"), (x1, "end")):
        out.append(f'<text x="{px(v):.2f}" y="{pad_t + H + 15}" font-size="11" '
                   f'text-anchor="{anchor}">{_fmt(v)}</text>')
    for v in (y0, y1):
        out.append(f'<text x="{pad_l - 5}" y="{py(v) + 4:.2f}" font-size="11" '
                   f'text-anchor="end">{_fmt(v)}</text>')
    if hline is not None:
        out.append(f'<line x1="{pad_l}" x2="{pad_l + W}" y1="{py(hline):.2f}" y2="{py(hline):.2f}" '
                   f'stroke="gray" stroke-dasharray="4 3"/>')
    for i, (x, y, label) in enumerate(series):
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y))
        color = COLORS[i % len(COLORS)]
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        if label:
            out.append(f'<text x="{pad_l + W - 5}" y="{pad_t + 15 + 14 * i}" font-size="11" '
                       f'text-anchor="end" fill="{color}">{label}</text>')
    if title:
        out.append(f'<text x="{width / 2}" y="18" font-size="13" text-anchor="middle">{title}</text>')
    if xlabel:
        out.append(f'<text x="{pad_l + W / 2}" y="{height - 8}" font-size="12" '
                   f'text-anchor="middle">{xlabel}</text>')
    if ylabel:
        out.append(f'<text x="14" y="{pad_t + H / 2}" font-size="12" text-anchor="middle" '
                   f'transform="rotate(-90 14 {pad_t + H / 2})">{ylabel}</text>')
    out.append("</svg>")
    text = "\n".join(out) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text

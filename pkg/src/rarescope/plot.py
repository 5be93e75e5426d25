"""Log-scale rank-frequency plot rendered straight to SVG.

One ``<polyline>`` per subset series, a log10 frequency axis and a legend
keyed by subset size.  No plotting library involved, so the output is
byte-stable across runs.
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 720, 480
MARGIN = {"left": 70, "right": 150, "top": 30, "bottom": 50}
PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)


def rank_frequency_svg(series, title: str = "Instruction frequency by rank") -> str:
    """``series`` is a list of dicts with ``subset_size`` and non-increasing ``counts``."""
    plot_w = WIDTH - MARGIN["left"] - MARGIN["right"]
    plot_h = HEIGHT - MARGIN["top"] - MARGIN["bottom"]
    max_rank = max((len(s["counts"]) for s in series), default=1) or 1
    max_count = max((max(s["counts"]) for s in series if s["counts"]), default=1)
    top_decade = max(1, math.ceil(math.log10(max_count))) if max_count > 1 else 1

    def x(rank):
        return MARGIN["left"] + plot_w * (rank - 1) / max(max_rank - 1, 1)

    def y(c):
        return MARGIN["top"] + plot_h * (1 - math.log10(c) / top_decade)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<title>{escape(title)}</title>',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<g id="axes" stroke="black" fill="none">'
        f'<line x1="{MARGIN["left"]}" y1="{MARGIN["top"] + plot_h}" x2="{MARGIN["left"] + plot_w}" y2="{MARGIN["top"] + plot_h}"/>'
        f'<line x1="{MARGIN["left"]}" y1="{MARGIN["top"]}" x2="{MARGIN["left"]}" y2="{MARGIN["top"] + plot_h}"/></g>',
    ]
    ticks = ['<g id="yticks" font-family="sans-serif" font-size="11" text-anchor="end">']
    for d in range(top_decade + 1):
        ty = y(10 ** d)
        ticks.append(f'<line x1="{MARGIN["left"] - 4}" y1="{ty:.2f}" x2="{MARGIN["left"]}" y2="{ty:.2f}" stroke="black"/>')
        ticks.append(f'<text x="{MARGIN["left"] - 8}" y="{ty + 4:.2f}">1e{d}</text>')
    ticks.append("</g>")
    out += ticks
    out.append(
        f'<text x="{MARGIN["left"] + plot_w / 2:.1f}" y="{HEIGHT - 12}" font-family="sans-serif" '
        f'font-size="12" text-anchor="middle">rank</text>'
    )
    out.append(
        f'<text x="16" y="{MARGIN["top"] + plot_h / 2:.1f}" font-family="sans-serif" font-size="12" '
        f'text-anchor="middle" transform="rotate(-90 16 {MARGIN["top"] + plot_h / 2:.1f})">frequency (log10)</text>'
    )
    out.append('<g id="series" fill="none" stroke-width="1.2">')
    for i, s in enumerate(series):
        pts = " ".join(f"{x(r):.2f},{y(c):.2f}" for r, c in enumerate(s["counts"], 1) if c > 0)
        color = PALETTE[i % len(PALETTE)]
        out.append(f'<polyline data-subset-size="{s["subset_size"]}" stroke="{color}" points="{pts}"/>')
    out.append("</g>")
    out.append('<g id="legend" font-family="sans-serif" font-size="11">')
    lx = WIDTH - MARGIN["right"] + 15
    for i, s in enumerate(series):
        ly = MARGIN["top"] + 16 * i + 8
        color = PALETTE[i % len(PALETTE)]
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 26}" y="{ly + 4}">{s["subset_size"]} binaries</text>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"

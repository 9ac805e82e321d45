"""Bare-bones SVG line and bar charts. CSV output stays the source of truth."""

from __future__ import annotations

from xml.sax.saxutils import escape

PALETTE = ("#e6862a", "#3a78c3", "#7b3f9e", "#2e9a4a", "#222222")
W, H, PAD = 480, 300, 40


def _scale(lo, hi, a, b):
    span = (hi - lo) or 1.0
    return lambda v: a + (v - lo) / span * (b - a)


def _frame(title, body, ylo, yhi):
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">\n'
            f'<text x="{W / 2}" y="16" text-anchor="middle">{escape(title)}</text>\n'
            f'<rect x="{PAD}" y="{PAD}" width="{W - 2 * PAD}" height="{H - 2 * PAD}" fill="none" stroke="#999"/>\n'
            f'<text x="4" y="{PAD + 4}">{yhi:.3g}</text><text x="4" y="{H - PAD}">{ylo:.3g}</text>\n'
            + body + "</svg>\n")


def line_chart(title: str, x, series: dict) -> str:
    """``series`` maps a label to a y sequence sharing the x values."""
    ys = [v for s in series.values() for v in s]
    ylo, yhi = min(ys + [0.0]), max(ys + [0.0])
    sx = _scale(min(x), max(x), PAD, W - PAD)
    sy = _scale(ylo, yhi, H - PAD, PAD)
    body = []
    y0 = sy(0.0)
    body.append(f'<line x1="{PAD}" y1="{y0:.2f}" x2="{W - PAD}" y2="{y0:.2f}" stroke="#ccc"/>\n')
    for k, (label, y) in enumerate(series.items()):
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, y))
        color = PALETTE[k % len(PALETTE)]
        body.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>\n')
        body.append(f'<text x="{W - PAD - 4}" y="{PAD + 14 * (k + 1)}" text-anchor="end" fill="{color}">{escape(label)}</text>\n')
    return _frame(title, "".join(body), ylo, yhi)


def bar_chart(title: str, categories, series: dict) -> str:
    """Grouped bars: one group per category, one bar per series."""
    ys = [v for s in series.values() for v in s]
    ylo, yhi = min(ys + [0.0]), max(ys + [0.0])
    sy = _scale(ylo, yhi, H - PAD, PAD)
    group = (W - 2 * PAD) / max(len(categories), 1)
    bw = group * 0.8 / max(len(series), 1)
    body = []
    for k, (label, vals) in enumerate(series.items()):
        color = PALETTE[k % len(PALETTE)]
        for j, v in enumerate(vals):
            x = PAD + j * group + group * 0.1 + k * bw
            top, bottom = sorted((sy(v), sy(0.0)))
            body.append(f'<rect x="{x:.2f}" y="{top:.2f}" width="{bw:.2f}" height="{bottom - top:.2f}" fill="{color}"/>\n')
        body.append(f'<text x="{PAD + 4}" y="{PAD + 14 * (k + 1)}" fill="{color}">{escape(label)}</text>\n')
    for j, c in enumerate(categories):
        body.append(f'<text x="{PAD + (j + 0.5) * group:.2f}" y="{H - PAD + 14}" text-anchor="middle">{escape(str(c))}</text>\n')
    return _frame(title, "".join(body), ylo, yhi)

"""Dependency-free, deterministic SVG charts for entropy series and sections.

Quantum curves are drawn as continuous lines and classical curves dashed.
Section CSVs (``q2,p2,seed_index,crossing_index``) become scatter plots
colored by seed.
"""

from __future__ import annotations

import csv
import io
import math
import os
from xml.sax.saxutils import escape

__all__ = ["EmptyInput", "MalformedCSV", "read_csv", "render_svg", "plot_file"]


class EmptyInput(ValueError):
    """The CSV has a header but no data rows."""


class MalformedCSV(ValueError):
    """The CSV cannot be interpreted as a series or a section."""


SECTION_HEADER = ["q2", "p2", "seed_index", "crossing_index"]

# column -> (stroke, dash pattern or None, width)
_STYLES = {
    "I_q": ("#1f4e9c", None, 1.8),
    "I_cl": ("#c0392b", "6,4", 1.8),
    "I_ref": ("#555555", "1,3", 1.0),
    "Icl_ref": ("#999999", "1,3", 1.0),
    "I_mc": ("#e67e22", "2,2", 1.0),
}
_PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
            "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")

W, H = 640, 420
ML, MR, MT, MB = 64, 130, 24, 48


def read_csv(text: str) -> tuple[list[str], list[list[float]]]:
    rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
    if not rows:
        raise EmptyInput("no header")
    header, body = [h.strip() for h in rows[0]], rows[1:]
    if header != SECTION_HEADER and header[:1] != ["t"]:
        raise MalformedCSV(f"unrecognized header {','.join(header)!r}")
    data = []
    for k, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise MalformedCSV(f"line {k}: expected {len(header)} fields, got {len(row)}")
        try:
            data.append([float(v) for v in row])
        except ValueError as exc:
            raise MalformedCSV(f"line {k}: {exc}") from None
    if not data:
        raise EmptyInput("no data rows")
    return header, data


def _nice_ticks(lo, hi, n=5):
    if not hi > lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    first = math.ceil(lo / step - 1e-9) * step
    ticks, v = [], first
    while v <= hi + 1e-9 * step:
        ticks.append(round(v, 12))
        v += step
    return ticks


def _range(values):
    vals = [v for v in values if math.isfinite(v)]
    if not vals:
        return 0.0, 1.0
    lo, hi = min(vals), max(vals)
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def _frame(xr, yr, xlabel, ylabel, title):
    sx = lambda x: ML + (x - xr[0]) / (xr[1] - xr[0]) * (W - ML - MR)  # noqa: E731
    sy = lambda y: H - MB - (y - yr[0]) / (yr[1] - yr[0]) * (H - MT - MB)  # noqa: E731
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f"<title>{escape(title)}</title>",
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<rect x="{ML}" y="{MT}" width="{W - ML - MR}" height="{H - MT - MB}" fill="none" stroke="black"/>',
    ]
    for x in _nice_ticks(*xr):
        if xr[0] <= x <= xr[1]:
            X = sx(x)
            out.append(f'<line x1="{X:.2f}" y1="{H - MB}" x2="{X:.2f}" y2="{H - MB + 5}" stroke="black"/>')
            out.append(f'<text x="{X:.2f}" y="{H - MB + 18}" font-size="11" text-anchor="middle">{x:g}</text>')
    for y in _nice_ticks(*yr):
        if yr[0] <= y <= yr[1]:
            Y = sy(y)
            out.append(f'<line x1="{ML - 5}" y1="{Y:.2f}" x2="{ML}" y2="{Y:.2f}" stroke="black"/>')
            out.append(f'<text x="{ML - 8}" y="{Y + 4:.2f}" font-size="11" text-anchor="end">{y:g}</text>')
    out.append(f'<text x="{(ML + W - MR) / 2:.1f}" y="{H - 10}" font-size="13" text-anchor="middle">'
               f"{escape(xlabel)}</text>")
    out.append(f'<text x="16" y="{(MT + H - MB) / 2:.1f}" font-size="13" text-anchor="middle" '
               f'transform="rotate(-90 16 {(MT + H - MB) / 2:.1f})">{escape(ylabel)}</text>')
    return out, sx, sy


def _polyline(xs, ys, sx, sy, stroke, dash, width):
    """One path per finite run, so NaN gaps break the line."""
    paths, run = [], []
    for x, y in zip(xs, ys):
        if math.isfinite(x) and math.isfinite(y):
            run.append(f"{sx(x):.2f},{sy(y):.2f}")
        elif run:
            paths.append(run)
            run = []
    if run:
        paths.append(run)
    dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
    return [
        f'<polyline points="{" ".join(r)}" fill="none" stroke="{stroke}" stroke-width="{width}"{dash_attr}/>'
        for r in paths
    ]


def _series_svg(header, data, title):
    cols = {h: [row[i] for row in data] for i, h in enumerate(header)}
    shown = [c for c in _STYLES if c in cols and any(math.isfinite(v) for v in cols[c])]
    if not shown:
        raise MalformedCSV("no mutual-information column to plot")
    xr = _range(cols["t"])
    xr = (min(cols["t"]), max(cols["t"])) if xr[1] > xr[0] and len(data) > 1 else xr
    yr = _range([v for c in shown for v in cols[c]])
    out, sx, sy = _frame(xr, yr, "t", "linear mutual information", title)
    for k, c in enumerate(shown):
        stroke, dash, width = _STYLES[c]
        out.extend(_polyline(cols["t"], cols[c], sx, sy, stroke, dash, width))
        ly = MT + 16 + 18 * k
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        out.append(f'<line x1="{W - MR + 10}" y1="{ly}" x2="{W - MR + 40}" y2="{ly}" stroke="{stroke}" '
                   f'stroke-width="{width}"{dash_attr}/>')
        out.append(f'<text x="{W - MR + 46}" y="{ly + 4}" font-size="11">{escape(c)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _section_svg(data, title):
    q2 = [r[0] for r in data]
    p2 = [r[1] for r in data]
    out, sx, sy = _frame(_range(q2), _range(p2), "q2", "p2", title)
    for q, p, seed, _ in data:
        color = _PALETTE[int(seed) % len(_PALETTE)]
        out.append(f'<circle cx="{sx(q):.2f}" cy="{sy(p):.2f}" r="0.9" fill="{color}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_svg(text: str, title: str = "") -> str:
    """SVG markup for a series or section CSV given as text."""
    header, data = read_csv(text)
    if header == SECTION_HEADER:
        return _section_svg(data, title or "Poincare section")
    return _series_svg(header, data, title or "mutual information")


def plot_file(csv_path: str, svg_path: str) -> None:
    from .runner import write_atomic

    with open(csv_path, "r", encoding="utf-8") as fh:
        text = fh.read()
    write_atomic(svg_path, render_svg(text, title=os.path.basename(csv_path)))

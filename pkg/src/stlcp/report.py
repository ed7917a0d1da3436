"""Deterministic SVG rendering for experiment artifacts.

Every figure is derived from a CSV that holds the raw data; the SVG is a
view, never the source of truth.  No plotting dependency: the files are
assembled from fixed-size primitives with two-decimal pixel coordinates so
golden tests can assert exact bytes and diffs stay readable.
"""

from __future__ import annotations

import csv
from typing import Sequence

WIDTH = 480
HEIGHT = 320
MARGIN = 50.0
PLOT_W = WIDTH - 2 * MARGIN
PLOT_H = HEIGHT - 2 * MARGIN


def _px(v: float) -> str:
    return f"{v:.2f}"


def _header(title: str) -> list[str]:
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if title:
        lines.append(
            f'<text x="{_px(WIDTH / 2)}" y="20" text-anchor="middle" '
            f'font-family="monospace" font-size="13">{title}</text>'
        )
    return lines


def _axes() -> list[str]:
    x0, y0 = MARGIN, HEIGHT - MARGIN
    return [
        f'<line x1="{_px(x0)}" y1="{_px(y0)}" x2="{_px(MARGIN + PLOT_W)}" y2="{_px(y0)}" '
        'stroke="black" stroke-width="1"/>',
        f'<line x1="{_px(x0)}" y1="{_px(y0)}" x2="{_px(x0)}" y2="{_px(MARGIN)}" '
        'stroke="black" stroke-width="1"/>',
    ]


def _label(x: float, y: float, text: str, anchor: str = "middle") -> str:
    return (
        f'<text x="{_px(x)}" y="{_px(y)}" text-anchor="{anchor}" '
        f'font-family="monospace" font-size="10">{text}</text>'
    )


def render_empty_svg(title: str = "no data") -> str:
    lines = _header(title) + _axes()
    lines.append(_label(WIDTH / 2, HEIGHT / 2, "no data"))
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def render_histogram_svg(
    edges: Sequence[float], counts: Sequence[int], title: str = "", band: tuple[float, float] | None = None
) -> str:
    """Bars with height proportional to count; bar i spans pixel columns
    [MARGIN + i*bw, MARGIN + (i+1)*bw] with bw = PLOT_W / n."""
    counts = [int(c) for c in counts]
    if not counts or max(counts) == 0:
        return render_empty_svg(title or "histogram")
    if len(edges) != len(counts) + 1:
        raise ValueError("need one more edge than counts")
    n = len(counts)
    top = max(counts)
    bw = PLOT_W / n
    lines = _header(title)
    if band is not None:
        # shade the expected-coverage band behind the bars
        lo = MARGIN + (band[0] - edges[0]) / (edges[-1] - edges[0]) * PLOT_W
        hi = MARGIN + (band[1] - edges[0]) / (edges[-1] - edges[0]) * PLOT_W
        lines.append(
            f'<rect x="{_px(lo)}" y="{_px(MARGIN)}" width="{_px(hi - lo)}" '
            f'height="{_px(PLOT_H)}" fill="#dfe8f5"/>'
        )
    for i, c in enumerate(counts):
        h = PLOT_H * c / top
        x = MARGIN + i * bw
        y = HEIGHT - MARGIN - h
        lines.append(
            f'<rect x="{_px(x)}" y="{_px(y)}" width="{_px(bw)}" height="{_px(h)}" '
            'fill="#4878a8" stroke="black" stroke-width="0.5"/>'
        )
    lines += _axes()
    step = max(1, n // 6)
    for i in range(0, n + 1, step):
        lines.append(_label(MARGIN + i * bw, HEIGHT - MARGIN + 14, f"{edges[i]:.2f}"))
    lines.append(_label(MARGIN - 6, MARGIN + 4, str(top), anchor="end"))
    lines.append(_label(MARGIN - 6, HEIGHT - MARGIN + 4, "0", anchor="end"))
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def render_overlay_svg(
    plan: Sequence[tuple[float, float]],
    realized: Sequence[tuple[float, float]],
    balls: Sequence[tuple[float, float, float]],
    bounds: tuple[float, float, float, float],
    title: str = "",
) -> str:
    """Planar plan path, realized agent path, and prediction balls.

    balls holds (center_x, center_y, radius) in data units; the radius is
    passed through the single uniform scale, never recomputed.  bounds is
    (x_lo, x_hi, y_lo, y_hi); the scale is shared by both axes so circles
    stay circles.
    """
    x_lo, x_hi, y_lo, y_hi = bounds
    scale = min(PLOT_W / (x_hi - x_lo), PLOT_H / (y_hi - y_lo))

    def to_px(p: tuple[float, float]) -> tuple[float, float]:
        return MARGIN + (p[0] - x_lo) * scale, HEIGHT - MARGIN - (p[1] - y_lo) * scale

    def poly(pts, color, dash="") -> str:
        path = " ".join(f"{_px(a)},{_px(b)}" for a, b in (to_px(p) for p in pts))
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        return f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"{extra}/>'

    lines = _header(title) + _axes()
    for cx, cy, r in balls:
        px, py = to_px((cx, cy))
        lines.append(
            f'<circle cx="{_px(px)}" cy="{_px(py)}" r="{_px(r * scale)}" '
            'fill="#4878a8" fill-opacity="0.12" stroke="#4878a8" stroke-width="0.5"/>'
        )
    if plan:
        lines.append(poly(plan, "#202020"))
    if realized:
        lines.append(poly(realized, "#a84848", dash="4 2"))
    lines.append(_label(MARGIN, HEIGHT - MARGIN + 14, f"{x_lo:g}", anchor="start"))
    lines.append(_label(MARGIN + PLOT_W, HEIGHT - MARGIN + 14, f"{x_hi:g}", anchor="end"))
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def render_series_svg(
    series: dict[str, Sequence[float]],
    intervals: Sequence[tuple[int, float, float]] = (),
    title: str = "",
) -> str:
    """Time-indexed line per named series with optional (t, lo, hi) interval
    whiskers, for scalar signals like temperatures."""
    if not series or all(len(v) == 0 for v in series.values()):
        return render_empty_svg(title or "series")
    n = max(len(v) for v in series.values())
    vals = [float(v) for vs in series.values() for v in vs]
    vals += [v for _, lo, hi in intervals for v in (lo, hi)]
    v_lo, v_hi = min(vals), max(vals)
    if v_hi - v_lo < 1e-9:
        v_lo, v_hi = v_lo - 1.0, v_hi + 1.0
    sx = PLOT_W / max(1, n - 1)
    sy = PLOT_H / (v_hi - v_lo)

    def to_px(t: float, v: float) -> tuple[float, float]:
        return MARGIN + t * sx, HEIGHT - MARGIN - (v - v_lo) * sy

    lines = _header(title) + _axes()
    for t, lo, hi in intervals:
        x, y1 = to_px(t, lo)
        _, y2 = to_px(t, hi)
        lines.append(
            f'<line x1="{_px(x)}" y1="{_px(y1)}" x2="{_px(x)}" y2="{_px(y2)}" '
            'stroke="#4878a8" stroke-width="3" stroke-opacity="0.35"/>'
        )
    palette = ["#202020", "#a84848", "#48a858", "#8048a8", "#a88448"]
    for j, (name, vs) in enumerate(series.items()):
        pts = " ".join(_px(c) for t, v in enumerate(vs) for c in to_px(t, float(v)))
        pairs = pts.split(" ")
        path = " ".join(f"{pairs[2 * i]},{pairs[2 * i + 1]}" for i in range(len(pairs) // 2))
        color = palette[j % len(palette)]
        lines.append(
            f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        lines.append(_label(MARGIN + PLOT_W + 2, MARGIN + 12 * (j + 1), name, anchor="start"))
    lines.append(_label(MARGIN - 6, MARGIN + 4, f"{v_hi:g}", anchor="end"))
    lines.append(_label(MARGIN - 6, HEIGHT - MARGIN + 4, f"{v_lo:g}", anchor="end"))
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def read_csv_rows(path: str) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        return [], []
    return rows[0], rows[1:]


def write_csv_rows(path: str, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    """CSV with repr-formatted floats so equal data gives equal bytes."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(header))
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])

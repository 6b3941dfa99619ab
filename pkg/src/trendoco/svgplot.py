"""Tiny self-contained SVG emitter for the two plot kinds the harness needs.

No plotting dependency: documents are assembled from polylines, circles
and text so tests can make structural assertions on the XML tree.
"""

from __future__ import annotations

import math

__all__ = ["scaling_svg", "overlay_svg"]

_WIDTH, _HEIGHT = 640, 440
_MARGIN = 60
_COLORS = ["#d95f02", "#1b9e77", "#7570b3", "#e7298a", "#66a61e", "#e6ab02"]


def _scale(values, lo, hi, out_lo, out_hi):
    span = hi - lo
    if span <= 0:
        span = 1.0
    return [out_lo + (v - lo) / span * (out_hi - out_lo) for v in values]


def _axes(parts, title, xlabel, ylabel):
    parts.append(
        f'<rect x="{_MARGIN}" y="{_MARGIN}" width="{_WIDTH - 2 * _MARGIN}" '
        f'height="{_HEIGHT - 2 * _MARGIN}" fill="none" stroke="#333"/>'
    )
    parts.append(
        f'<text x="{_WIDTH / 2}" y="24" text-anchor="middle" '
        f'font-size="15">{title}</text>'
    )
    parts.append(
        f'<text x="{_WIDTH / 2}" y="{_HEIGHT - 12}" text-anchor="middle" '
        f'font-size="12">{xlabel}</text>'
    )
    parts.append(
        f'<text x="16" y="{_HEIGHT / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {_HEIGHT / 2})">{ylabel}</text>'
    )


def _document(parts) -> str:
    body = "\n".join(parts)
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" '
        f'height="{_HEIGHT}" viewBox="0 0 {_WIDTH} {_HEIGHT}">\n{body}\n</svg>\n'
    )


def _polyline(xs, ys, color, dashed=False, cls="series"):
    points = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
    dash = ' stroke-dasharray="6 4"' if dashed else ""
    return (
        f'<polyline class="{cls}" points="{points}" fill="none" '
        f'stroke="{color}" stroke-width="1.5"{dash}/>'
    )


def scaling_svg(groups: dict, fits: dict | None = None,
                title: str = "regret scaling") -> str:
    """Log-log regret-vs-horizon chart with optional fitted lines.

    ``groups`` maps a label to ``(ns, regrets)``; ``fits`` maps a label to
    ``(slope, intercept)`` of a log10-log10 fit.
    """
    if not groups:
        raise ValueError("nothing to plot")
    all_x, all_y = [], []
    for ns, regrets in groups.values():
        if len(ns) == 0:
            raise ValueError("empty group")
        all_x.extend(math.log10(v) for v in ns)
        all_y.extend(math.log10(v) for v in regrets)
    pad = 0.08
    xlo, xhi = min(all_x) - pad, max(all_x) + pad
    ylo, yhi = min(all_y) - pad, max(all_y) + pad

    parts = []
    _axes(parts, title, "log10 n", "log10 regret")
    for i, (label, (ns, regrets)) in enumerate(sorted(groups.items())):
        color = _COLORS[i % len(_COLORS)]
        lx = [math.log10(v) for v in ns]
        ly = [math.log10(v) for v in regrets]
        px = _scale(lx, xlo, xhi, _MARGIN, _WIDTH - _MARGIN)
        py = _scale(ly, ylo, yhi, _HEIGHT - _MARGIN, _MARGIN)
        if len(px) > 1:
            parts.append(_polyline(px, py, color))
        for x, y in zip(px, py):
            parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3.5" fill="{color}"/>')
        if fits and label in fits:
            slope, intercept = fits[label]
            fy = [slope * x + intercept for x in (xlo, xhi)]
            fx = _scale([xlo, xhi], xlo, xhi, _MARGIN, _WIDTH - _MARGIN)
            fpy = _scale(fy, ylo, yhi, _HEIGHT - _MARGIN, _MARGIN)
            parts.append(_polyline(fx, fpy, color, dashed=True, cls="fit"))
            parts.append(
                f'<text x="{_WIDTH - _MARGIN - 4}" y="{_MARGIN + 16 * (i + 1)}" '
                f'text-anchor="end" font-size="11" fill="{color}">'
                f"{label}: slope {slope:.3f}</text>"
            )
        else:
            parts.append(
                f'<text x="{_WIDTH - _MARGIN - 4}" y="{_MARGIN + 16 * (i + 1)}" '
                f'text-anchor="end" font-size="11" fill="{color}">{label}</text>'
            )
    return _document(parts)


def overlay_svg(values, trend, title: str = "series and fitted trend") -> str:
    """Raw series with its fitted trend overlaid (both as polylines)."""
    values = list(values)
    trend = list(trend)
    if not values or len(values) != len(trend):
        raise ValueError("series and trend must be nonempty and equally long")
    lo = min(min(values), min(trend))
    hi = max(max(values), max(trend))
    xs = _scale(range(len(values)), 0, max(len(values) - 1, 1),
                _MARGIN, _WIDTH - _MARGIN)
    y_series = _scale(values, lo, hi, _HEIGHT - _MARGIN, _MARGIN)
    y_trend = _scale(trend, lo, hi, _HEIGHT - _MARGIN, _MARGIN)
    parts = []
    _axes(parts, title, "t", "value")
    parts.append(_polyline(xs, y_series, "#555", cls="series"))
    parts.append(_polyline(xs, y_trend, _COLORS[0], cls="trend"))
    return _document(parts)

"""Deterministic SVG plots of speed against signed distance to the center.

The SVG is emitted by direct geometry building (no plotting library), so the
output bytes depend only on the input rows: one translucent polyline per
(trial, vehicle) plus one solid mean line per vehicle, mirroring a
speed-over-position figure with the intersection at zero.
"""

from __future__ import annotations

import math
from collections import defaultdict
from typing import Mapping, Sequence

VEHICLE_COLORS = ["#2e8b57", "#e07b00", "#4169e1", "#b22222", "#6a5acd", "#2f4f4f"]

TraceRow = tuple[int, int, float, float, float]  # trial, vehicle, time, signed_dist, speed


def parse_trace_csv(text: str) -> list[TraceRow]:
    rows = []
    lines = text.strip().splitlines()
    for line in lines[1:]:
        parts = line.split(",")
        rows.append((int(parts[0]), int(parts[1]), float(parts[2]), float(parts[3]), float(parts[4])))
    return rows


def mean_speed_by_distance(
    points: Sequence[tuple[float, float]], bin_width: float = 2.0
) -> list[tuple[float, float]]:
    """Mean speed per signed-distance bin, at bin centers, sorted by distance."""
    sums: dict[int, list[float]] = defaultdict(lambda: [0.0, 0.0])
    for d, v in points:
        b = math.floor(d / bin_width)
        acc = sums[b]
        acc[0] += v
        acc[1] += 1.0
    return [
        ((b + 0.5) * bin_width, acc[0] / acc[1]) for b, acc in sorted(sums.items())
    ]


def _polyline(points: Sequence[tuple[float, float]], sx, sy, color: str, width: float, opacity: float) -> str:
    coords = " ".join(f"{sx(d):.2f},{sy(v):.2f}" for d, v in points)
    return (
        f'<polyline fill="none" stroke="{color}" stroke-width="{width}" '
        f'stroke-opacity="{opacity}" points="{coords}" />'
    )


def speed_profile_svg(
    rows: Sequence[TraceRow],
    title: str,
    x_range: tuple[float, float] = (-80.0, 80.0),
    y_max: float = 16.0,
) -> str:
    """SVG document with per-trial translucent lines and per-vehicle means."""
    width, height = 840, 520
    ml, mr, mt, mb = 60, 20, 40, 50
    x0, x1 = x_range

    def sx(d: float) -> float:
        return ml + (d - x0) / (x1 - x0) * (width - ml - mr)

    def sy(v: float) -> float:
        return height - mb - v / y_max * (height - mt - mb)

    by_trial_vehicle: dict[tuple[int, int], list[tuple[float, float]]] = defaultdict(list)
    by_vehicle: dict[int, list[tuple[float, float]]] = defaultdict(list)
    for trial, vid, _t, d, v in rows:
        if x0 <= d <= x1:
            by_trial_vehicle[(trial, vid)].append((d, v))
            by_vehicle[vid].append((d, v))

    vids = sorted(by_vehicle)
    colors = {vid: VEHICLE_COLORS[i % len(VEHICLE_COLORS)] for i, vid in enumerate(vids)}

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white" />',
        f'<text x="{width / 2:.0f}" y="24" text-anchor="middle" font-size="16" '
        f'font-family="sans-serif">{title}</text>',
    ]
    # Axes and ticks.
    parts.append(
        f'<line x1="{ml}" y1="{sy(0):.2f}" x2="{width - mr}" y2="{sy(0):.2f}" stroke="black" />'
    )
    parts.append(f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{height - mb}" stroke="black" />')
    for d in range(int(x0), int(x1) + 1, 20):
        parts.append(
            f'<text x="{sx(d):.2f}" y="{height - mb + 18}" text-anchor="middle" font-size="11" '
            f'font-family="sans-serif">{d}</text>'
        )
    for v in range(0, int(y_max) + 1, 4):
        parts.append(
            f'<text x="{ml - 8}" y="{sy(v) + 4:.2f}" text-anchor="end" font-size="11" '
            f'font-family="sans-serif">{v}</text>'
        )
    parts.append(
        f'<text x="{width / 2:.0f}" y="{height - 12}" text-anchor="middle" font-size="12" '
        f'font-family="sans-serif">signed distance to center (m), positive = direction of travel</text>'
    )
    parts.append(
        f'<text x="16" y="{height / 2:.0f}" text-anchor="middle" font-size="12" '
        f'font-family="sans-serif" transform="rotate(-90 16 {height / 2:.0f})">speed (m/s)</text>'
    )

    for (trial, vid) in sorted(by_trial_vehicle):
        pts = by_trial_vehicle[(trial, vid)]
        parts.append(_polyline(pts, sx, sy, colors[vid], 1.0, 0.25))
    for vid in vids:
        mean_pts = mean_speed_by_distance(by_vehicle[vid])
        parts.append(_polyline(mean_pts, sx, sy, colors[vid], 2.5, 1.0))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"

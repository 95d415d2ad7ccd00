"""Geometric and temporal path representations.

A *trajectory* pairs positions with target speeds (planner output, controller
input).  A *future path* pairs positions with the absolute times at which the
vehicle expects to occupy them; it is derived from a trajectory under the
assumption that the speed from one point to the next is constant, so the
arrival time of point n is

    t_n = t_0 + sum_{k=1..n} dist(x_{k-1}, x_k) / v_k

with point 0 anchored at the generation time t_0.  Segments whose speed is at
or below V_EPS terminate the future path: a (nearly) stopped vehicle reserves
no downstream space-time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

# Speed threshold below which a segment counts as stopped.
V_EPS = 0.01


@dataclass(frozen=True)
class Point2D:
    """Planar position in meters, local scenario frame."""

    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite coordinates: ({self.x}, {self.y})")

    def distance_to(self, other: "Point2D") -> float:
        dx = self.x - other.x
        dy = self.y - other.y
        return math.sqrt(dx * dx + dy * dy)


@dataclass(frozen=True)
class VehicleShape:
    """Bounding box of a vehicle, meters."""

    length: float
    width: float

    def __post_init__(self) -> None:
        if self.length <= 0 or self.width <= 0:
            raise ValueError("vehicle shape dimensions must be positive")


DEFAULT_SHAPE = VehicleShape(length=4.5, width=1.8)


@dataclass(frozen=True)
class TrajectoryPoint:
    pos: Point2D
    speed: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.speed) or self.speed < 0:
            raise ValueError(f"invalid speed {self.speed}")


@dataclass(frozen=True)
class Trajectory:
    """Ordered sequence of (position, speed) points."""

    points: tuple[TrajectoryPoint, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "points", tuple(self.points))

    def __len__(self) -> int:
        return len(self.points)

    @cached_property
    def xy(self) -> np.ndarray:
        return np.array([(p.pos.x, p.pos.y) for p in self.points], dtype=float).reshape(-1, 2)

    @cached_property
    def speeds(self) -> np.ndarray:
        return np.array([p.speed for p in self.points], dtype=float)

    @cached_property
    def arc_lengths(self) -> np.ndarray:
        """Cumulative arc length along the points, starting at 0."""
        if not self.points:
            return np.zeros(0)
        d = np.hypot(*np.diff(self.xy, axis=0).T)
        return np.concatenate([[0.0], np.cumsum(d)])

    def with_speeds(self, speeds: Sequence[float]) -> "Trajectory":
        """Same positions, new speeds (longitudinal-only edits)."""
        if len(speeds) != len(self.points):
            raise ValueError("speed count does not match point count")
        return Trajectory(tuple(TrajectoryPoint(p.pos, float(v)) for p, v in zip(self.points, speeds)))


@dataclass(frozen=True)
class FuturePathPoint:
    pos: Point2D
    t: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.t):
            raise ValueError(f"non-finite time {self.t}")


@dataclass(frozen=True)
class FuturePath:
    """Broadcast payload: where a vehicle will be and when.

    Carries the sender id, its current kinematic state and shape alongside the
    time-parametrized points.  Point times are absolute simulation seconds and
    non-decreasing.
    """

    vehicle_id: int
    current_pos: Point2D
    current_speed: float
    shape: VehicleShape
    points: tuple[FuturePathPoint, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "points", tuple(self.points))
        times = [p.t for p in self.points]
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("future path times must be non-decreasing")

    def __len__(self) -> int:
        return len(self.points)

    @cached_property
    def xy(self) -> np.ndarray:
        return np.array([(p.pos.x, p.pos.y) for p in self.points], dtype=float).reshape(-1, 2)

    @cached_property
    def times(self) -> np.ndarray:
        return np.array([p.t for p in self.points], dtype=float)


def nearest_point_index(traj: Trajectory, pos: Point2D) -> int:
    """Index of the trajectory point closest to pos; ties go to the lowest index."""
    if not traj.points:
        raise ValueError("empty trajectory")
    d = traj.xy - np.array([pos.x, pos.y])
    return int(np.argmin(np.einsum("ij,ij->i", d, d)))


def to_future_path(
    traj: Trajectory,
    start_index: int,
    t0: float,
    vehicle_id: int,
    shape: VehicleShape = DEFAULT_SHAPE,
    current_pos: Optional[Point2D] = None,
    current_speed: Optional[float] = None,
    v_eps: float = V_EPS,
) -> FuturePath:
    """Convert a trajectory to a future path starting at start_index.

    Point 0 is the trajectory point at start_index, anchored at t0.  Each
    following segment is traversed at the speed of its end point; the first
    segment whose end-point speed is <= v_eps truncates the output just before
    it.
    """
    if not traj.points:
        raise ValueError("empty trajectory")
    if not 0 <= start_index < len(traj.points):
        raise ValueError(f"start_index {start_index} out of range")

    pts = traj.points[start_index:]
    speeds = traj.speeds[start_index:]
    seg = np.hypot(*np.diff(traj.xy[start_index:], axis=0).T)

    n_keep = len(pts)
    slow = np.nonzero(speeds[1:] <= v_eps)[0]
    if slow.size:
        n_keep = int(slow[0]) + 1

    times = t0 + np.concatenate([[0.0], np.cumsum(seg[: n_keep - 1] / speeds[1:n_keep])])
    out = tuple(FuturePathPoint(pts[i].pos, float(times[i])) for i in range(n_keep))
    return FuturePath(
        vehicle_id=vehicle_id,
        current_pos=current_pos if current_pos is not None else pts[0].pos,
        current_speed=current_speed if current_speed is not None else float(speeds[0]),
        shape=shape,
        points=out,
    )


def truncate_horizon(fp: FuturePath, now: float, horizon: float) -> FuturePath:
    """Keep exactly the points with t <= now + horizon (a prefix, times being sorted)."""
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    limit = now + horizon
    kept = tuple(p for p in fp.points if p.t <= limit)
    return FuturePath(fp.vehicle_id, fp.current_pos, fp.current_speed, fp.shape, kept)


def resample_polyline(route: Sequence[Point2D], spacing: float) -> list[Point2D]:
    """Resample a polyline at roughly uniform arc-length spacing.

    Output points lie on the input polyline; the first and last input points
    are preserved.  Interior gaps equal `spacing` and the final gap lies in
    [spacing, 2*spacing), except for routes shorter than `spacing`, which
    reduce to their two endpoints (or a single point for zero-length routes).
    """
    if spacing < 0.1:
        raise ValueError("spacing must be >= 0.1 m")
    if len(route) < 2:
        raise ValueError("route needs at least 2 points")

    xy = np.array([(p.x, p.y) for p in route], dtype=float)
    seg = np.hypot(*np.diff(xy, axis=0).T)
    keep = seg > 0
    if not keep.any():
        return [route[0]]
    # Drop zero-length segments so interpolation is well defined.
    xy = np.concatenate([xy[:1], xy[1:][keep]])
    cum = np.concatenate([[0.0], np.cumsum(seg[keep])])
    total = float(cum[-1])

    k = int(total // spacing)
    arcs = np.concatenate([np.arange(k) * spacing, [total]]) if k >= 1 else np.array([0.0, total])
    xs = np.interp(arcs, cum, xy[:, 0])
    ys = np.interp(arcs, cum, xy[:, 1])
    return [Point2D(float(x), float(y)) for x, y in zip(xs, ys)]


class RoutePath:
    """Arc-length parametrization of a fixed route polyline."""

    def __init__(self, points: Sequence[Point2D]):
        if len(points) < 2:
            raise ValueError("route needs at least 2 points")
        self.points = tuple(points)
        self.xy = np.array([(p.x, p.y) for p in self.points], dtype=float)
        seg = np.hypot(*np.diff(self.xy, axis=0).T)
        self.cum = np.concatenate([[0.0], np.cumsum(seg)])
        self.length = float(self.cum[-1])

    def pos_at(self, s: float) -> Point2D:
        s = min(max(s, 0.0), self.length)
        return Point2D(
            float(np.interp(s, self.cum, self.xy[:, 0])),
            float(np.interp(s, self.cum, self.xy[:, 1])),
        )

    def sample(self, arcs: np.ndarray) -> np.ndarray:
        arcs = np.clip(arcs, 0.0, self.length)
        return np.column_stack(
            [np.interp(arcs, self.cum, self.xy[:, 0]), np.interp(arcs, self.cum, self.xy[:, 1])]
        )

    def project(self, pos: Point2D) -> float:
        """Arc position of the point on the route closest to pos."""
        p = np.array([pos.x, pos.y])
        a = self.xy[:-1]
        b = self.xy[1:]
        ab = b - a
        denom = np.einsum("ij,ij->i", ab, ab)
        denom[denom == 0] = 1.0
        t = np.clip(np.einsum("ij,ij->i", p - a, ab) / denom, 0.0, 1.0)
        proj = a + t[:, None] * ab
        d2 = np.einsum("ij,ij->i", proj - p, proj - p)
        i = int(np.argmin(d2))
        return float(self.cum[i] + t[i] * math.sqrt(denom[i]))

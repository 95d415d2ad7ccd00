"""Reservation table and space-time conflict queries.

Two future paths conflict when some pair of their points is simultaneously
close in space (within d_margin) and in time (within tau_time), and the
earlier of the two point times falls inside the checking horizon.  The
horizon is t_collision for ordinary conflict checks and t_free for the
acceleration-room query.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .path_model import FuturePath, Point2D


@dataclass(frozen=True)
class CoordinationParams:
    """Tunables of the coordination protocol.

    t_collision: horizon (s) for conflict checks on incoming paths.
    t_free: horizon (s) that must be conflict-free to grant acceleration.
    d_margin: spatial safety margin (m) between path points.
    v_max: road maximum speed (m/s) used for speed-up overrides (50 km/h).
    tau_time: temporal tolerance (s) for two points to count as co-located.
    """

    t_collision: float = 5.0
    t_free: float = 10.0
    d_margin: float = 2.8
    v_max: float = 13.889
    tau_time: float = 1.5

    def __post_init__(self) -> None:
        for name in ("t_collision", "t_free", "d_margin", "v_max", "tau_time"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.t_free < self.t_collision:
            raise ValueError("t_free must be >= t_collision")


@dataclass(frozen=True)
class IntersectionGeometry:
    """Conflict zone and approach region around the intersection center."""

    center: Point2D = Point2D(0.0, 0.0)
    zone_radius: float = 7.0
    approach_radius: float = 50.0

    def __post_init__(self) -> None:
        if not 0 < self.zone_radius < self.approach_radius:
            raise ValueError("need approach_radius > zone_radius > 0")


@dataclass(frozen=True)
class ConflictInfo:
    """Earliest conflicting point pair between an own and another path."""

    other_id: int
    own_point_index: int
    other_point_index: int
    distance: float
    time_gap: float


@dataclass
class ReservationTable:
    """Latest future path per vehicle, with staleness-based eviction.

    Entries that have not been refreshed for stale_timeout seconds are
    evicted on the next upsert; a silent sender therefore stops blocking
    others after roughly ten missed 10 Hz updates.
    """

    stale_timeout: float = 1.0
    entries: dict[int, FuturePath] = field(default_factory=dict)
    last_update: dict[int, float] = field(default_factory=dict)

    def upsert_path(self, fp: FuturePath, now: float) -> None:
        stale = [vid for vid, t in self.last_update.items() if now - t >= self.stale_timeout]
        for vid in stale:
            self.discard_path(vid)
        self.entries[fp.vehicle_id] = fp
        self.last_update[fp.vehicle_id] = now

    def discard_path(self, vehicle_id: int) -> None:
        self.entries.pop(vehicle_id, None)
        self.last_update.pop(vehicle_id, None)

    def get(self, vehicle_id: int) -> Optional[FuturePath]:
        return self.entries.get(vehicle_id)

    def vehicle_ids(self) -> list[int]:
        return sorted(self.entries)

    def clone(self) -> "ReservationTable":
        return ReservationTable(self.stale_timeout, dict(self.entries), dict(self.last_update))


def detect_conflict(
    a: FuturePath,
    b: FuturePath,
    params: CoordinationParams,
    now: float,
    horizon: Optional[float] = None,
) -> Optional[ConflictInfo]:
    """Earliest conflicting point pair of two future paths, if any.

    A pair (i from a, j from b) conflicts when dist <= d_margin,
    |t_i - t_j| <= tau_time and min(t_i, t_j) <= now + horizon.  Among
    conflicting pairs the one with the smallest min(t_i, t_j) wins, ties
    broken by lowest i, then lowest j.  Boundaries are inclusive.
    """
    if a.vehicle_id == b.vehicle_id:
        raise ValueError("detect_conflict needs two distinct vehicles")
    if horizon is None:
        horizon = params.t_collision
    if not a.points or not b.points:
        return None

    diff = a.xy[:, None, :] - b.xy[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    gap = np.abs(a.times[:, None] - b.times[None, :])
    t_min = np.minimum(a.times[:, None], b.times[None, :])
    mask = (dist <= params.d_margin) & (gap <= params.tau_time) & (t_min <= now + horizon)
    if not mask.any():
        return None

    ii, jj = np.nonzero(mask)
    order = np.lexsort((jj, ii, t_min[ii, jj]))
    k = order[0]
    i, j = int(ii[k]), int(jj[k])
    return ConflictInfo(
        other_id=b.vehicle_id,
        own_point_index=i,
        other_point_index=j,
        distance=float(dist[i, j]),
        time_gap=float(gap[i, j]),
    )


def table_check(
    table: ReservationTable,
    fp: FuturePath,
    params: CoordinationParams,
    now: float,
    horizon: Optional[float] = None,
) -> list[ConflictInfo]:
    """Conflicts of fp against every table entry except its own, ordered by other id."""
    out = []
    for vid in table.vehicle_ids():
        if vid == fp.vehicle_id:
            continue
        hit = detect_conflict(fp, table.entries[vid], params, now, horizon)
        if hit is not None:
            out.append(hit)
    return out


def has_acceleration_room(
    table: ReservationTable,
    fp: FuturePath,
    geometry: IntersectionGeometry,
    params: CoordinationParams,
    now: float,
) -> bool:
    """Whether fp may be granted a speed-up to v_max.

    Requires a conflict-free t_free horizon against the whole table plus an
    approach condition: the vehicle sits between the conflict zone and the
    approach radius, and its in-horizon points make progress toward the
    center (the nearest in-horizon approach is closer than the start; a
    through-path ends beyond the center, so the endpoint distance alone
    cannot express "approaching").
    """
    if table_check(table, fp, params, now, horizon=params.t_free):
        return False

    center = geometry.center
    d_now = fp.current_pos.distance_to(center)
    if not geometry.zone_radius < d_now <= geometry.approach_radius:
        return False

    in_horizon = [p for p in fp.points if p.t <= now + params.t_free]
    if len(in_horizon) < 2:
        return False
    d_first = in_horizon[0].pos.distance_to(center)
    d_nearest = min(p.pos.distance_to(center) for p in in_horizon[1:])
    return d_nearest < d_first


def dist_to_center(pos: Point2D, geometry: IntersectionGeometry) -> float:
    return pos.distance_to(geometry.center)


def segment_point_distance(p: Point2D, a: Point2D, b: Point2D) -> float:
    """Distance from p to segment ab (helper for geometry checks in tests)."""
    ax, ay, bx, by = a.x, a.y, b.x, b.y
    abx, aby = bx - ax, by - ay
    denom = abx * abx + aby * aby
    if denom == 0:
        return p.distance_to(a)
    t = max(0.0, min(1.0, ((p.x - ax) * abx + (p.y - ay) * aby) / denom))
    return math.sqrt((ax + t * abx - p.x) ** 2 + (ay + t * aby - p.y) ** 2)

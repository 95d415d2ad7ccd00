"""Vehicle-side stack: planning, yielding rules, control and message cadences.

Each agent follows a fixed route (longitudinal motion only).  Its planner
emits a trajectory from the current arc position to the route end at a cruise
speed with a terminal ramp-down.  On top of that plan three layers may edit
speeds, never positions:

* a stand-alone right-of-way rule that stops at a line before the conflict
  zone when a perceived vehicle is inside the zone or would reach it first,
* a shared-path obstacle rule that ramps to a stop short of the earliest
  space-time conflict with a received future path, and
* a coordinated override received from the roadside unit, which wins over
  everything while fresh.

Broadcasts of the active plan (as a future path) leave every 100 ms; in a
coordinated mode the unconstrained plan is additionally unicast to the RSU at
the same cadence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .modes import CoordinationMode
from .netsim import (
    AutonomousPathMsg,
    CoordinatedPathMsg,
    FuturePathMsg,
    InitiationMsg,
    Message,
    TerminationMsg,
)
from .path_model import (
    DEFAULT_SHAPE,
    FuturePath,
    Point2D,
    RoutePath,
    Trajectory,
    TrajectoryPoint,
    VehicleShape,
    nearest_point_index,
    to_future_path,
)
from .reservation import CoordinationParams, IntersectionGeometry, detect_conflict

MAX_PLAN_POINTS = 120
MIN_PLAN_SPACING = 0.5
BROADCAST_PERIOD = 0.1
COORDINATED_PATH_TTL = 0.5
COORDINATED_SILENCE_TIMEOUT = 1.0
FOREIGN_PATH_TTL = 1.0
STOP_LINE_OFFSET = 5.0
OBSTACLE_STOP_MARGIN = 5.0
# Stops planned for a known line (the baseline rule) brake firmly at b_max;
# stops provoked by a predicted moving conflict begin much earlier, at a
# comfortable rate, which reproduces the early cautious slowdowns seen when
# vehicles treat received paths as obstacles.
OBSTACLE_COMFORT_DECEL = 0.8
# Mutual-deadlock breaker: a vehicle held below DEADLOCK_SPEED for longer
# than DEADLOCK_HOLD while every conflicting sender is equally slow yields
# right of way to the lowest vehicle id.
DEADLOCK_SPEED = 0.3
DEADLOCK_HOLD = 3.0
DEADLOCK_CLEAR = 1.0
# A stop decision is kept this long after the conflict last appeared, so the
# 10 Hz replan does not flap between braking and cruising.
OBSTACLE_HOLD = 1.5
# The local obstacle reaction looks one second less far ahead than the
# roadside conflict check, so where an RSU is present its coordination
# decision always lands before vehicles start yielding on their own.
OBSTACLE_REACTION_MARGIN = 1.0
ARRIVAL_TOLERANCE = 0.1


@dataclass(frozen=True)
class ControlLimits:
    """Longitudinal acceleration/braking bounds, m/s^2 (braking positive)."""

    a_max: float = 2.0
    b_max: float = 3.0

    def __post_init__(self) -> None:
        if self.a_max <= 0 or self.b_max <= 0:
            raise ValueError("control limits must be positive")


@dataclass(frozen=True)
class PerceptionConfig:
    """Occlusion model: mutual visibility near the center plus close range.

    r_vis: radius around the intersection center inside which two vehicles
    see each other (both must be inside).  d_detect: unconditional detection
    range regardless of occlusion.
    """

    r_vis: float = 50.0
    d_detect: float = 15.0

    def __post_init__(self) -> None:
        if self.r_vis <= 0 or self.d_detect <= 0:
            raise ValueError("perception radii must be positive")


@dataclass
class VehicleState:
    vehicle_id: int
    route: RoutePath
    s: float = 0.0
    v: float = 0.0
    mode: CoordinationMode = CoordinationMode.AUTO
    active_coordinated_path: Optional[Trajectory] = None
    coordinated_received_at: float = -math.inf
    shape: VehicleShape = DEFAULT_SHAPE
    cruise_speed: float = 11.111
    destination_s: Optional[float] = None
    pos: Point2D = field(init=False)

    def __post_init__(self) -> None:
        if self.destination_s is None:
            self.destination_s = self.route.length - ARRIVAL_TOLERANCE
        self.pos = self.route.pos_at(self.s)

    @property
    def done(self) -> bool:
        return self.s >= self.destination_s - 1e-9


def plan_route_trajectory(
    state: VehicleState,
    v_target: float,
    limits: ControlLimits,
    max_points: int = MAX_PLAN_POINTS,
    min_spacing: float = MIN_PLAN_SPACING,
) -> Trajectory:
    """Plan from the current arc position to the route end.

    Speeds are v_target everywhere except a terminal ramp-down to zero at the
    destination over v_target^2 / (2 b_max).  The remaining route is sampled
    so the plan never exceeds max_points.
    """
    route = state.route
    remaining = route.length - state.s
    if remaining <= 1e-9:
        return Trajectory((TrajectoryPoint(route.pos_at(route.length), 0.0),))

    spacing = max(min_spacing, remaining / (max_points - 1))
    k = int(remaining // spacing)
    if k >= 1:
        rel = np.concatenate([np.arange(k) * spacing, [remaining]])
    else:
        rel = np.array([0.0, remaining])
    arcs = state.s + rel
    xy = route.sample(arcs)
    dist_to_end = route.length - arcs
    speeds = np.minimum(v_target, np.sqrt(2.0 * limits.b_max * np.maximum(dist_to_end, 0.0)))
    return Trajectory(
        tuple(
            TrajectoryPoint(Point2D(float(x), float(y)), float(v))
            for (x, y), v in zip(xy, speeds)
        )
    )


def _ramp_stop_speeds(traj: Trajectory, s_stop: float, b_max: float) -> Trajectory:
    """Cap speeds so the vehicle can stop at arc position s_stop along traj."""
    arcs = traj.arc_lengths
    allowed = np.sqrt(2.0 * b_max * np.maximum(s_stop - arcs, 0.0))
    return traj.with_speeds(np.minimum(traj.speeds, allowed))


def perceive(
    self_state: VehicleState,
    others: Iterable[VehicleState],
    geometry: IntersectionGeometry,
    pcfg: PerceptionConfig,
) -> list[VehicleState]:
    """Vehicles visible to self: mutual near-center visibility or close range."""
    center = geometry.center
    d_self = self_state.pos.distance_to(center)
    out = []
    for other in sorted(others, key=lambda o: o.vehicle_id):
        if other.vehicle_id == self_state.vehicle_id:
            continue
        mutual = d_self <= pcfg.r_vis and other.pos.distance_to(center) <= pcfg.r_vis
        close = self_state.pos.distance_to(other.pos) <= pcfg.d_detect
        if mutual or close:
            out.append(other)
    return out


def apply_intersection_rule(
    traj: Trajectory,
    self_state: VehicleState,
    perceived: Sequence[VehicleState],
    geometry: IntersectionGeometry,
    limits: ControlLimits,
    d_stop: float = STOP_LINE_OFFSET,
) -> Trajectory:
    """Baseline blind-intersection behavior for vehicles without communication.

    Yield (stop at a line d_stop before the zone boundary) when a perceived
    vehicle occupies the zone or would reach it earlier by the naive estimate
    distance-to-center / max(v, 1); on equal estimates the lower vehicle id
    proceeds.  A vehicle already inside the zone clears it instead.
    """
    if not perceived or not traj.points:
        return traj
    center = geometry.center
    d_self = self_state.pos.distance_to(center)
    if d_self <= geometry.zone_radius:
        return traj

    self_eta = d_self / max(self_state.v, 1.0)
    must_yield = False
    for other in perceived:
        d_other = other.pos.distance_to(center)
        if d_other <= geometry.zone_radius:
            must_yield = True
            break
        other_eta = d_other / max(other.v, 1.0)
        if other_eta < self_eta or (other_eta == self_eta and other.vehicle_id < self_state.vehicle_id):
            must_yield = True
            break
    if not must_yield:
        return traj

    line = geometry.zone_radius + d_stop
    dists = np.hypot(traj.xy[:, 0] - center.x, traj.xy[:, 1] - center.y)
    inside = np.nonzero(dists <= line)[0]
    if inside.size == 0:
        return traj
    j = int(inside[0])
    arcs = traj.arc_lengths
    if j == 0:
        s_stop = 0.0
    else:
        # Interpolate the crossing of the stop line between points j-1 and j.
        frac = (dists[j - 1] - line) / max(dists[j - 1] - dists[j], 1e-12)
        s_stop = float(arcs[j - 1] + frac * (arcs[j] - arcs[j - 1]))
    return _ramp_stop_speeds(traj, s_stop, limits.b_max)


def obstacle_conflicts(
    own_fp: FuturePath,
    foreign: Sequence[FuturePath],
    params: CoordinationParams,
    horizon: Optional[float] = None,
) -> list[tuple[int, int]]:
    """(own point index, foreign vehicle id) per conflicting foreign path,
    sorted by own point index then id; horizon anchored at the path start."""
    if not own_fp.points:
        return []
    now = own_fp.points[0].t
    hits = []
    for fp in sorted(foreign, key=lambda f: f.vehicle_id):
        if fp.vehicle_id == own_fp.vehicle_id:
            continue
        c = detect_conflict(own_fp, fp, params, now, horizon)
        if c is not None:
            hits.append((c.own_point_index, fp.vehicle_id))
    hits.sort()
    return hits


def apply_future_obstacles(
    traj: Trajectory,
    own_fp: FuturePath,
    foreign: Sequence[FuturePath],
    params: CoordinationParams,
    limits: ControlLimits,
    d_safe: float = OBSTACLE_STOP_MARGIN,
    decel: float = OBSTACLE_COMFORT_DECEL,
    horizon: Optional[float] = None,
) -> Trajectory:
    """Ramp to a stop d_safe before the earliest conflict with a foreign path.

    own_fp must be the future-path conversion of traj (same leading points),
    so conflict indices map directly onto trajectory arc positions.  Without
    conflicts the trajectory is returned unchanged.
    """
    hits = obstacle_conflicts(own_fp, foreign, params, horizon)
    if not hits:
        return traj
    idx = hits[0][0]
    s_stop = float(traj.arc_lengths[min(idx, len(traj.points) - 1)]) - d_safe
    return _ramp_stop_speeds(traj, max(s_stop, 0.0), min(decel, limits.b_max))


def select_active_plan(
    state: VehicleState,
    planned: Trajectory,
    now: float,
    ttl: float = COORDINATED_PATH_TTL,
) -> Trajectory:
    """Coordinated override wins while fresh; otherwise the vehicle's own plan."""
    if (
        state.mode.is_coordinated
        and state.active_coordinated_path is not None
        and now - state.coordinated_received_at < ttl
    ):
        return state.active_coordinated_path
    return planned


def _projected_arc(traj: Trajectory, pos: Point2D) -> float:
    """Arc position along traj of the point closest to pos."""
    xy = traj.xy
    if len(xy) == 1:
        return 0.0
    p = np.array([pos.x, pos.y])
    a, b = xy[:-1], xy[1:]
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    safe = np.where(denom == 0, 1.0, denom)
    t = np.clip(np.einsum("ij,ij->i", p - a, ab) / safe, 0.0, 1.0)
    proj = a + t[:, None] * ab
    d2 = np.einsum("ij,ij->i", proj - p, proj - p)
    i = int(np.argmin(d2))
    return float(traj.arc_lengths[i] + t[i] * math.sqrt(denom[i]))


def control_step(
    state: VehicleState,
    active: Trajectory,
    limits: ControlLimits,
    dt: float,
) -> VehicleState:
    """One longitudinal control update tracking the active plan.

    The target is the plan speed just ahead of the vehicle's projection onto
    the plan; the new speed is the target clamped to the acceleration and
    braking limits and floored at zero.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    if active.points:
        arc = _projected_arc(active, state.pos)
        target = float(np.interp(arc + state.v * dt, active.arc_lengths, active.speeds))
    else:
        target = 0.0
    v_new = min(max(target, state.v - limits.b_max * dt), state.v + limits.a_max * dt)
    state.v = max(0.0, v_new)
    state.s = min(state.route.length, state.s + state.v * dt)
    state.pos = state.route.pos_at(state.s)
    return state


class VehicleAgent:
    """One simulated vehicle: planner, controller and message endpoints."""

    def __init__(
        self,
        state: VehicleState,
        params: CoordinationParams,
        geometry: IntersectionGeometry,
        limits: ControlLimits,
        pcfg: PerceptionConfig,
        share_paths: bool = False,
        use_rsu: bool = False,
        launch_time: float = 0.0,
        rsu_id: int = 0,
    ):
        self.state = state
        self.params = params
        self.geometry = geometry
        self.limits = limits
        self.pcfg = pcfg
        self.share_paths = share_paths
        self.use_rsu = use_rsu
        self.launch_time = launch_time
        self.rsu_id = rsu_id

        self._next_tx = launch_time
        self._foreign: dict[int, tuple[FuturePath, float]] = {}
        self._cached_plan: Optional[Trajectory] = None
        self._cached_base: Optional[Trajectory] = None
        self._held_since: Optional[float] = None
        self._last_conflict_time = -math.inf
        self._conflict_ids: set[int] = set()
        self._yield_latched = False

    # -- inbox ---------------------------------------------------------------

    def _process_message(self, msg: Message, now: float) -> None:
        state = self.state
        if isinstance(msg, FuturePathMsg):
            if self.share_paths and msg.path.vehicle_id != state.vehicle_id:
                self._foreign[msg.path.vehicle_id] = (msg.path, now)
        elif isinstance(msg, InitiationMsg):
            if msg.vehicle_id == state.vehicle_id:
                state.mode = msg.target_mode
                state.active_coordinated_path = None
                state.coordinated_received_at = now
        elif isinstance(msg, TerminationMsg):
            if msg.vehicle_id == state.vehicle_id:
                state.mode = CoordinationMode.AUTO
                state.active_coordinated_path = None
        elif isinstance(msg, CoordinatedPathMsg):
            if msg.vehicle_id == state.vehicle_id and msg.trajectory.points:
                state.active_coordinated_path = msg.trajectory
                state.coordinated_received_at = now
        # Unknown message types are ignored.

    # -- obstacle layer -------------------------------------------------------

    def _apply_obstacle_layer(self, planned: Trajectory, now: float) -> Trajectory:
        foreign = [fp for fp, _ in (self._foreign[v] for v in sorted(self._foreign))]
        if not foreign:
            return planned
        own_fp = to_future_path(
            planned,
            0,
            now,
            self.state.vehicle_id,
            self.state.shape,
            current_pos=self.state.pos,
            current_speed=self.state.v,
        )
        horizon = max(self.params.t_collision - OBSTACLE_REACTION_MARGIN, 1.0)
        hits = obstacle_conflicts(own_fp, foreign, self.params, horizon)
        if hits:
            self._last_conflict_time = now
            self._conflict_ids = {vid for _, vid in hits}
        elif now - self._last_conflict_time > DEADLOCK_CLEAR:
            self._conflict_ids = set()
            self._yield_latched = False

        # Standstill detector for the deadlock breaker.  It must survive the
        # brief speed blips of the stop-and-release oscillation, so it only
        # resets once the vehicle genuinely moves again.
        if self.state.v < DEADLOCK_SPEED:
            if self._held_since is None:
                self._held_since = now
        else:
            self._held_since = None

        if self._yield_latched:
            return planned
        if (
            self._held_since is not None
            and now - self._held_since > DEADLOCK_HOLD
            and self._conflict_ids
            and self.state.vehicle_id < min(self._conflict_ids)
            and all(
                self._foreign[vid][0].current_speed < DEADLOCK_SPEED
                for vid in self._conflict_ids
                if vid in self._foreign
            )
        ):
            self._yield_latched = True
            return planned

        if hits:
            return apply_future_obstacles(
                planned, own_fp, foreign, self.params, self.limits,
                decel=OBSTACLE_COMFORT_DECEL, horizon=horizon,
            )
        if now - self._last_conflict_time <= OBSTACLE_HOLD and self._cached_base is not None:
            # Sticky window: keep the last stop decision briefly to avoid flapping.
            return self._cached_base
        return planned

    # -- main loop ------------------------------------------------------------

    def tick(
        self,
        now: float,
        inbox: Sequence[Message],
        others: Sequence[VehicleState],
        dt: float,
    ) -> list[Message]:
        state = self.state
        if now + 1e-9 < self.launch_time:
            return []

        for msg in inbox:
            self._process_message(msg, now)
        self._foreign = {
            vid: (fp, t) for vid, (fp, t) in self._foreign.items() if now - t <= FOREIGN_PATH_TTL
        }

        # Fail-safe: a coordinated vehicle starved of override paths demotes
        # itself and resumes autonomous planning.
        if state.mode.is_coordinated and now - state.coordinated_received_at > COORDINATED_SILENCE_TIMEOUT:
            state.mode = CoordinationMode.AUTO
            state.active_coordinated_path = None

        if state.done:
            state.v = 0.0
            return []

        out: list[Message] = []
        if now + 1e-9 >= self._next_tx or self._cached_base is None:
            planned = plan_route_trajectory(state, state.cruise_speed, self.limits)
            base = planned
            if not self.share_paths:
                visible = perceive(state, others, self.geometry, self.pcfg)
                base = apply_intersection_rule(planned, state, visible, self.geometry, self.limits)
            elif state.mode is CoordinationMode.AUTO:
                base = self._apply_obstacle_layer(planned, now)
            self._cached_plan = planned
            self._cached_base = base

            if self.share_paths:
                active = select_active_plan(state, base, now)
                start = nearest_point_index(active, state.pos)
                fp = to_future_path(
                    active,
                    start,
                    now,
                    state.vehicle_id,
                    state.shape,
                    current_pos=state.pos,
                    current_speed=state.v,
                )
                out.append(FuturePathMsg(fp))
                if self.use_rsu and state.mode.is_coordinated:
                    out.append(AutonomousPathMsg(state.vehicle_id, planned, now))
            while self._next_tx <= now + 1e-9:
                self._next_tx += BROADCAST_PERIOD

        active = select_active_plan(state, self._cached_base, now)
        control_step(state, active, self.limits, dt)
        return out

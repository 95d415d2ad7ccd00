"""Roadside unit: per-vehicle mode management and coordinated path generation.

The RSU keeps one session per known vehicle.  Broadcast future paths feed the
reservation table and drive mode decisions; while a vehicle is coordinated it
unicasts its unconstrained (autonomous) plan, which the RSU answers with a
coordinated path: the same positions with overridden speeds, zero to yield or
the road maximum to clear the intersection quickly.

Mode transitions follow a fixed flowchart: AUTO -> C_SLOW on conflict,
AUTO -> C_FAST on acceleration room, C_SLOW -> {C_FAST, AUTO} once its
autonomous plan stops conflicting, C_FAST -> AUTO after the vehicle has
passed through the conflict zone.  There is no direct C_SLOW <-> C_FAST edge
without passing the conflict-cleared check, and a vehicle that already holds
a C_FAST grant keeps it; newcomers conflicting with it are the ones slowed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Union

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
    Trajectory,
    VehicleShape,
    to_future_path,
)
from .reservation import (
    CoordinationParams,
    IntersectionGeometry,
    ReservationTable,
    has_acceleration_room,
    table_check,
)

logger = logging.getLogger(__name__)

# Leaving the zone by this much counts as having passed through it.
ZONE_EXIT_MARGIN = 2.0
# A coordinated vehicle silent for longer is force-terminated back to AUTO.
COORDINATED_SILENCE_TIMEOUT = 1.0


def make_coordinated_path(
    ap: Trajectory,
    mode: CoordinationMode,
    geometry: IntersectionGeometry,
    params: CoordinationParams,
    exit_margin: float = ZONE_EXIT_MARGIN,
) -> Trajectory:
    """Speed override for an autonomous path; positions are never modified.

    C_SLOW zeroes every speed.  C_FAST sets v_max on every point up to and
    including the last one inside the exit boundary (center distance <=
    zone_radius + exit_margin) and keeps original speeds beyond it; a path
    with no point inside that boundary is returned unchanged.
    """
    if mode is CoordinationMode.AUTO:
        raise ValueError("no coordinated path exists in AUTO mode")
    if not ap.points:
        raise ValueError("empty autonomous path")

    if mode is CoordinationMode.C_SLOW:
        return ap.with_speeds([0.0] * len(ap.points))

    limit = geometry.zone_radius + exit_margin
    last_inside = -1
    for i, p in enumerate(ap.points):
        if p.pos.distance_to(geometry.center) <= limit:
            last_inside = i
    if last_inside < 0:
        return ap
    speeds = [params.v_max if i <= last_inside else p.speed for i, p in enumerate(ap.points)]
    return ap.with_speeds(speeds)


@dataclass
class VehicleSession:
    """Per-vehicle bookkeeping on the RSU side."""

    vehicle_id: int
    mode: CoordinationMode = CoordinationMode.AUTO
    last_autonomous_path: Optional[Trajectory] = None
    last_seen: float = 0.0
    last_autonomous_seen: float = 0.0
    passed_intersection: bool = False
    entered_zone: bool = False
    last_position: Optional[Point2D] = None
    shape: VehicleShape = DEFAULT_SHAPE


@dataclass
class RsuState:
    table: ReservationTable
    sessions: dict[int, VehicleSession]
    params: CoordinationParams
    geometry: IntersectionGeometry


class RoadsideUnit:
    """Single-actor coordinator: consumes timestamped messages, emits messages.

    `mode_log` records (time, vehicle_id, new_mode) for every transition and
    the initial AUTO registration, for post-hoc protocol checks.
    """

    def __init__(
        self,
        params: CoordinationParams,
        geometry: IntersectionGeometry,
        node_id: int = 0,
        stale_timeout: float = 1.0,
    ):
        self.node_id = node_id
        self.state = RsuState(
            table=ReservationTable(stale_timeout=stale_timeout),
            sessions={},
            params=params,
            geometry=geometry,
        )
        self.mode_log: list[tuple[float, int, CoordinationMode]] = []

    # -- session helpers ----------------------------------------------------

    def _session(self, vehicle_id: int, now: float) -> VehicleSession:
        s = self.state.sessions.get(vehicle_id)
        if s is None:
            s = VehicleSession(vehicle_id=vehicle_id, last_seen=now)
            self.state.sessions[vehicle_id] = s
            self.mode_log.append((now, vehicle_id, CoordinationMode.AUTO))
        return s

    def _set_mode(self, session: VehicleSession, mode: CoordinationMode, now: float) -> None:
        if session.mode is not mode:
            session.mode = mode
            self.mode_log.append((now, session.vehicle_id, mode))

    def _update_zone_progress(self, session: VehicleSession, pos: Point2D) -> None:
        d = pos.distance_to(self.state.geometry.center)
        if d <= self.state.geometry.zone_radius:
            session.entered_zone = True
        if session.entered_zone and d > self.state.geometry.zone_radius + ZONE_EXIT_MARGIN:
            session.passed_intersection = True

    # -- message plane -------------------------------------------------------

    def handle_message(self, msg: Message, now: float) -> list[Message]:
        if isinstance(msg, FuturePathMsg):
            if not msg.path.points:
                return []
            session = self._session(msg.path.vehicle_id, now)
            session.last_seen = now
            session.last_position = msg.path.current_pos
            session.shape = msg.path.shape
            return self.step_mode(msg.path, now)
        if isinstance(msg, AutonomousPathMsg):
            if not msg.trajectory.points:
                return []
            session = self.state.sessions.get(msg.vehicle_id)
            if session is None or session.mode is CoordinationMode.AUTO:
                logger.debug("autonomous path from %s ignored outside coordinated mode", msg.vehicle_id)
                return []
            session.last_seen = now
            return self.step_mode(msg.trajectory, now, vehicle_id=msg.vehicle_id, t0=msg.t0)
        # Initiation/Termination/CoordinatedPath are RSU outputs, not inputs.
        return []

    def step_mode(
        self,
        incoming: Union[FuturePath, Trajectory],
        now: float,
        vehicle_id: Optional[int] = None,
        t0: Optional[float] = None,
    ) -> list[Message]:
        if isinstance(incoming, FuturePath):
            if not incoming.points:
                return []
            return self._on_future_path(incoming, now)
        if vehicle_id is None:
            raise ValueError("trajectory input needs an explicit vehicle_id")
        if not incoming.points:
            return []
        return self._on_autonomous_path(vehicle_id, incoming, now if t0 is None else t0, now)

    def tick(self, now: float) -> list[Message]:
        """Fail-safe: terminate coordinated sessions whose sender went silent."""
        out: list[Message] = []
        for vid in sorted(self.state.sessions):
            session = self.state.sessions[vid]
            if session.mode.is_coordinated and now - session.last_seen > COORDINATED_SILENCE_TIMEOUT:
                logger.debug("terminating silent coordinated vehicle %s", vid)
                self._set_mode(session, CoordinationMode.AUTO, now)
                out.append(TerminationMsg(vid))
        return out

    # -- mode machine ---------------------------------------------------------

    def _on_future_path(self, fp: FuturePath, now: float) -> list[Message]:
        state = self.state
        session = self._session(fp.vehicle_id, now)
        self._update_zone_progress(session, fp.current_pos)

        if session.mode is CoordinationMode.AUTO:
            conflicts = table_check(state.table, fp, state.params, now)
            if conflicts:
                state.table.discard_path(fp.vehicle_id)
                self._set_mode(session, CoordinationMode.C_SLOW, now)
                session.last_autonomous_seen = now
                return [InitiationMsg(fp.vehicle_id, CoordinationMode.C_SLOW)]
            state.table.upsert_path(fp, now)
            if has_acceleration_room(state.table, fp, state.geometry, state.params, now):
                self._set_mode(session, CoordinationMode.C_FAST, now)
                session.last_autonomous_seen = now
                return [InitiationMsg(fp.vehicle_id, CoordinationMode.C_FAST)]
            return []

        if session.mode is CoordinationMode.C_SLOW:
            # Broadcasts from a slowed vehicle are discarded, not stored.
            return []

        # C_FAST: keep the reservation fresh; release once through the zone.
        state.table.upsert_path(fp, now)
        if session.passed_intersection:
            self._set_mode(session, CoordinationMode.AUTO, now)
            return [TerminationMsg(fp.vehicle_id)]
        return []

    def _on_autonomous_path(self, vehicle_id: int, ap: Trajectory, t0: float, now: float) -> list[Message]:
        state = self.state
        session = self._session(vehicle_id, now)
        session.last_autonomous_path = ap
        session.last_autonomous_seen = now
        self._update_zone_progress(session, ap.points[0].pos)

        fp = to_future_path(ap, 0, t0, vehicle_id, session.shape)

        if session.mode is CoordinationMode.C_SLOW:
            conflicts = table_check(state.table, fp, state.params, now)
            if conflicts:
                coord = make_coordinated_path(ap, CoordinationMode.C_SLOW, state.geometry, state.params)
                return [CoordinatedPathMsg(vehicle_id, coord)]
            if has_acceleration_room(state.table, fp, state.geometry, state.params, now):
                self._set_mode(session, CoordinationMode.C_FAST, now)
                coord = make_coordinated_path(ap, CoordinationMode.C_FAST, state.geometry, state.params)
                # Reserve the granted plan right away so later arrivals see it.
                state.table.upsert_path(to_future_path(coord, 0, t0, vehicle_id, session.shape), now)
                return [
                    InitiationMsg(vehicle_id, CoordinationMode.C_FAST),
                    CoordinatedPathMsg(vehicle_id, coord),
                ]
            self._set_mode(session, CoordinationMode.AUTO, now)
            state.table.upsert_path(fp, now)
            return [TerminationMsg(vehicle_id)]

        if session.mode is CoordinationMode.C_FAST:
            if session.passed_intersection:
                self._set_mode(session, CoordinationMode.AUTO, now)
                state.table.upsert_path(fp, now)
                return [TerminationMsg(vehicle_id)]
            coord = make_coordinated_path(ap, CoordinationMode.C_FAST, state.geometry, state.params)
            return [CoordinatedPathMsg(vehicle_id, coord)]

        logger.debug("autonomous path from %s while AUTO; ignored", vehicle_id)
        return []

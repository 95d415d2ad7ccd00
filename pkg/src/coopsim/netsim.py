"""Message set, codecs, simulated channel and bandwidth accounting.

Two codecs exist for the same messages:

* a self-describing JSON form with full double precision (the verbose,
  debug-friendly representation; see docs/message.schema.json), and
* a compact little-endian binary form sized to fit one UDP payload
  (<= 1460 bytes for up to 120 path points).

Binary layout, all little-endian:

    header   : msg_type u8, vehicle_id u32, point_count u16, t0 u64 (microseconds)
    future path points      : x i32, y i32 (0.01 m units), t u32 (ms offset from t0)
    trajectory points       : x i32, y i32 (0.01 m units), speed u16 (0.01 m/s)
    initiation extra byte   : target mode u8

so a future path weighs 15 + 12*n bytes and a speed-carrying path
15 + 10*n bytes.  The binary form carries only what fits the layout: the
sender's current position/speed and shape ride exclusively on the JSON form,
and a binary decode restores them from the first point and package defaults.
"""

from __future__ import annotations

import heapq
import json
import math
import random
import struct
from dataclasses import dataclass, field
from typing import Optional, Union

from .modes import CoordinationMode
from .path_model import (
    DEFAULT_SHAPE,
    FuturePath,
    FuturePathPoint,
    Point2D,
    Trajectory,
    TrajectoryPoint,
    VehicleShape,
)

MAX_PATH_POINTS = 120
MAX_UDP_PAYLOAD = 1460
HEADER_BYTES = 15
FUTURE_POINT_BYTES = 12
SPEED_POINT_BYTES = 10
BROADCAST = -1


class EncodeError(ValueError):
    pass


class DecodeError(ValueError):
    pass


# --------------------------------------------------------------------------
# Message set
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FuturePathMsg:
    path: FuturePath

    def __post_init__(self) -> None:
        if len(self.path) > MAX_PATH_POINTS:
            raise ValueError(f"future path exceeds {MAX_PATH_POINTS} points")

    @property
    def vehicle_id(self) -> int:
        return self.path.vehicle_id


@dataclass(frozen=True)
class AutonomousPathMsg:
    vehicle_id: int
    trajectory: Trajectory
    t0: float

    def __post_init__(self) -> None:
        if len(self.trajectory) > MAX_PATH_POINTS:
            raise ValueError(f"trajectory exceeds {MAX_PATH_POINTS} points")


@dataclass(frozen=True)
class CoordinatedPathMsg:
    vehicle_id: int
    trajectory: Trajectory

    def __post_init__(self) -> None:
        if len(self.trajectory) > MAX_PATH_POINTS:
            raise ValueError(f"trajectory exceeds {MAX_PATH_POINTS} points")


@dataclass(frozen=True)
class InitiationMsg:
    vehicle_id: int
    target_mode: CoordinationMode

    def __post_init__(self) -> None:
        if self.target_mode is CoordinationMode.AUTO:
            raise ValueError("initiation targets a coordinated mode")


@dataclass(frozen=True)
class TerminationMsg:
    vehicle_id: int


Message = Union[FuturePathMsg, AutonomousPathMsg, CoordinatedPathMsg, InitiationMsg, TerminationMsg]

_MSG_TYPE_IDS = {
    FuturePathMsg: 1,
    AutonomousPathMsg: 2,
    CoordinatedPathMsg: 3,
    InitiationMsg: 4,
    TerminationMsg: 5,
}
_MSG_TYPE_NAMES = {
    FuturePathMsg: "future_path",
    AutonomousPathMsg: "autonomous_path",
    CoordinatedPathMsg: "coordinated_path",
    InitiationMsg: "initiation",
    TerminationMsg: "termination",
}
_MODE_WIRE = {CoordinationMode.C_SLOW: 2, CoordinationMode.C_FAST: 3}
_MODE_WIRE_INV = {v: k for k, v in _MODE_WIRE.items()}


# --------------------------------------------------------------------------
# JSON codec
# --------------------------------------------------------------------------


def _heading_quaternion(xy: list[tuple[float, float]], i: int) -> dict:
    """Unit quaternion for the path heading at point i (yaw only, planar)."""
    if len(xy) < 2:
        yaw = 0.0
    else:
        j = i if i < len(xy) - 1 else i - 1
        dx = xy[j + 1][0] - xy[j][0]
        dy = xy[j + 1][1] - xy[j][1]
        yaw = math.atan2(dy, dx) if (dx != 0.0 or dy != 0.0) else 0.0
    return {"x": 0.0, "y": 0.0, "z": math.sin(yaw / 2.0), "w": math.cos(yaw / 2.0)}


def _position_obj(p: Point2D) -> dict:
    return {"x": p.x, "y": p.y, "z": 0.0}


def _path_points_obj(points, time_key: Optional[str], speeds: Optional[list[float]]) -> list[dict]:
    xy = [(p.pos.x, p.pos.y) for p in points]
    out = []
    for i, p in enumerate(points):
        obj = {"position": _position_obj(p.pos), "orientation": _heading_quaternion(xy, i)}
        if time_key is not None:
            obj[time_key] = p.t
        if speeds is not None:
            obj["speed_mps"] = speeds[i]
        out.append(obj)
    return out


def encode_json(msg: Message) -> bytes:
    """Self-describing JSON encoding with full double precision."""
    kind = _MSG_TYPE_NAMES.get(type(msg))
    if kind is None:
        raise EncodeError(f"unknown message type {type(msg)!r}")

    doc: dict = {"message_type": kind, "vehicle_id": _msg_vehicle_id(msg)}
    if isinstance(msg, FuturePathMsg):
        fp = msg.path
        doc["current_position"] = _position_obj(fp.current_pos)
        doc["current_speed_mps"] = fp.current_speed
        doc["vehicle_shape"] = {"length_m": fp.shape.length, "width_m": fp.shape.width}
        doc["points"] = _path_points_obj(fp.points, "arrival_time_s", None)
    elif isinstance(msg, AutonomousPathMsg):
        doc["creation_time_s"] = msg.t0
        doc["points"] = _trajectory_points_obj(msg.trajectory)
    elif isinstance(msg, CoordinatedPathMsg):
        doc["points"] = _trajectory_points_obj(msg.trajectory)
    elif isinstance(msg, InitiationMsg):
        doc["target_mode"] = msg.target_mode.value
    return json.dumps(doc, indent=2).encode()


def _trajectory_points_obj(traj: Trajectory) -> list[dict]:
    xy = [(p.pos.x, p.pos.y) for p in traj.points]
    out = []
    for i, p in enumerate(traj.points):
        out.append(
            {
                "position": _position_obj(p.pos),
                "orientation": _heading_quaternion(xy, i),
                "speed_mps": p.speed,
            }
        )
    return out


def decode_json(data: bytes) -> Message:
    try:
        doc = json.loads(data.decode())
    except json.JSONDecodeError as e:
        raise DecodeError(f"malformed JSON at position {e.pos}: {e.msg}") from e
    if not isinstance(doc, dict):
        raise DecodeError("top-level JSON value must be an object")

    try:
        kind = doc["message_type"]
        vid = int(doc["vehicle_id"])
        if kind == "future_path":
            cp = doc["current_position"]
            shape = doc["vehicle_shape"]
            pts = tuple(
                FuturePathPoint(Point2D(q["position"]["x"], q["position"]["y"]), q["arrival_time_s"])
                for q in doc["points"]
            )
            return FuturePathMsg(
                FuturePath(
                    vehicle_id=vid,
                    current_pos=Point2D(cp["x"], cp["y"]),
                    current_speed=doc["current_speed_mps"],
                    shape=VehicleShape(shape["length_m"], shape["width_m"]),
                    points=pts,
                )
            )
        if kind in ("autonomous_path", "coordinated_path"):
            traj = Trajectory(
                tuple(
                    TrajectoryPoint(Point2D(q["position"]["x"], q["position"]["y"]), q["speed_mps"])
                    for q in doc["points"]
                )
            )
            if kind == "autonomous_path":
                return AutonomousPathMsg(vid, traj, doc["creation_time_s"])
            return CoordinatedPathMsg(vid, traj)
        if kind == "initiation":
            return InitiationMsg(vid, CoordinationMode(doc["target_mode"]))
        if kind == "termination":
            return TerminationMsg(vid)
    except (KeyError, TypeError, ValueError) as e:
        raise DecodeError(f"invalid message document: {e!r}") from e
    raise DecodeError(f"unknown message_type {kind!r}")


# --------------------------------------------------------------------------
# Binary codec
# --------------------------------------------------------------------------

_HEADER = struct.Struct("<BIHQ")
_FUTURE_POINT = struct.Struct("<iiI")
_SPEED_POINT = struct.Struct("<iiH")
_MODE_BYTE = struct.Struct("<B")


def _fixed(value: float, scale: float, lo: int, hi: int, what: str) -> int:
    q = round(value * scale)
    if not lo <= q <= hi:
        raise EncodeError(f"{what} {value} out of range for fixed-point encoding")
    return int(q)


def _msg_vehicle_id(msg: Message) -> int:
    return msg.path.vehicle_id if isinstance(msg, FuturePathMsg) else msg.vehicle_id


def binary_size(msg: Message) -> int:
    """Wire size of the binary encoding, without encoding."""
    if isinstance(msg, FuturePathMsg):
        return HEADER_BYTES + FUTURE_POINT_BYTES * len(msg.path)
    if isinstance(msg, (AutonomousPathMsg, CoordinatedPathMsg)):
        return HEADER_BYTES + SPEED_POINT_BYTES * len(msg.trajectory)
    if isinstance(msg, InitiationMsg):
        return HEADER_BYTES + 1
    return HEADER_BYTES


def encode_binary(msg: Message) -> bytes:
    """Compact fixed-point encoding; <= 1460 bytes for any valid message."""
    type_id = _MSG_TYPE_IDS.get(type(msg))
    if type_id is None:
        raise EncodeError(f"unknown message type {type(msg)!r}")
    vid = _msg_vehicle_id(msg)
    if not 0 <= vid <= 0xFFFFFFFF:
        raise EncodeError(f"vehicle_id {vid} out of u32 range")

    if isinstance(msg, FuturePathMsg):
        pts = msg.path.points
        t0 = pts[0].t if pts else 0.0
        out = [_HEADER.pack(type_id, vid, len(pts), _fixed(t0, 1e6, 0, 2**64 - 1, "t0"))]
        for p in pts:
            out.append(
                _FUTURE_POINT.pack(
                    _fixed(p.pos.x, 100, -(2**31), 2**31 - 1, "x"),
                    _fixed(p.pos.y, 100, -(2**31), 2**31 - 1, "y"),
                    _fixed(p.t - t0, 1000, 0, 2**32 - 1, "time offset"),
                )
            )
        return b"".join(out)

    if isinstance(msg, (AutonomousPathMsg, CoordinatedPathMsg)):
        t0 = msg.t0 if isinstance(msg, AutonomousPathMsg) else 0.0
        pts = msg.trajectory.points
        out = [_HEADER.pack(type_id, vid, len(pts), _fixed(t0, 1e6, 0, 2**64 - 1, "t0"))]
        for p in pts:
            out.append(
                _SPEED_POINT.pack(
                    _fixed(p.pos.x, 100, -(2**31), 2**31 - 1, "x"),
                    _fixed(p.pos.y, 100, -(2**31), 2**31 - 1, "y"),
                    _fixed(p.speed, 100, 0, 2**16 - 1, "speed"),
                )
            )
        return b"".join(out)

    head = _HEADER.pack(type_id, vid, 0, 0)
    if isinstance(msg, InitiationMsg):
        return head + _MODE_BYTE.pack(_MODE_WIRE[msg.target_mode])
    return head


def decode_binary(data: bytes) -> Message:
    if len(data) < HEADER_BYTES:
        raise DecodeError(f"buffer too short for header ({len(data)} bytes)")
    type_id, vid, count, t0_us = _HEADER.unpack_from(data, 0)
    t0 = t0_us / 1e6

    if type_id == 1:
        need = HEADER_BYTES + FUTURE_POINT_BYTES * count
        if len(data) < need:
            raise DecodeError(f"truncated future path: {len(data)} < {need} bytes")
        pts = []
        for off in range(HEADER_BYTES, need, FUTURE_POINT_BYTES):
            x, y, dt_ms = _FUTURE_POINT.unpack_from(data, off)
            pts.append(FuturePathPoint(Point2D(x / 100.0, y / 100.0), t0 + dt_ms / 1000.0))
        current = pts[0].pos if pts else Point2D(0.0, 0.0)
        return FuturePathMsg(
            FuturePath(vid, current, 0.0, DEFAULT_SHAPE, tuple(pts))
        )

    if type_id in (2, 3):
        need = HEADER_BYTES + SPEED_POINT_BYTES * count
        if len(data) < need:
            raise DecodeError(f"truncated trajectory: {len(data)} < {need} bytes")
        pts = []
        for off in range(HEADER_BYTES, need, SPEED_POINT_BYTES):
            x, y, v = _SPEED_POINT.unpack_from(data, off)
            pts.append(TrajectoryPoint(Point2D(x / 100.0, y / 100.0), v / 100.0))
        traj = Trajectory(tuple(pts))
        if type_id == 2:
            return AutonomousPathMsg(vid, traj, t0)
        return CoordinatedPathMsg(vid, traj)

    if type_id == 4:
        if len(data) < HEADER_BYTES + 1:
            raise DecodeError("truncated initiation message")
        (mode_byte,) = _MODE_BYTE.unpack_from(data, HEADER_BYTES)
        mode = _MODE_WIRE_INV.get(mode_byte)
        if mode is None:
            raise DecodeError(f"unknown mode byte {mode_byte}")
        return InitiationMsg(vid, mode)

    if type_id == 5:
        return TerminationMsg(vid)

    raise DecodeError(f"unknown message type id {type_id}")


# --------------------------------------------------------------------------
# Simulated channel
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ChannelConfig:
    latency_mean: float = 0.0
    latency_jitter: float = 0.0
    loss_probability: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.loss_probability <= 1.0:
            raise ValueError("loss_probability must lie in [0, 1]")
        if self.latency_mean < 0 or self.latency_jitter < 0:
            raise ValueError("latencies must be >= 0")


@dataclass(frozen=True)
class Envelope:
    src: int
    dst: int
    send_time: float
    deliver_time: float
    payload: Message
    wire_bytes: int
    seq: int

    def __post_init__(self) -> None:
        if self.deliver_time < self.send_time:
            raise ValueError("deliver_time must be >= send_time")


class Channel:
    """Broadcast/unicast event queue with seeded loss and latency.

    Broadcast fans out one envelope per registered receiver except the
    sender; each envelope is independently dropped or delayed.  Delivery is
    deterministic given the configuration seed and the send sequence.
    """

    def __init__(self, config: ChannelConfig):
        self.config = config
        self._rng = random.Random(config.seed)
        self._nodes: list[int] = []
        self._queue: list[tuple[float, int, Envelope]] = []
        self._seq = 0
        self.sent_envelopes = 0
        self.dropped_envelopes = 0
        self.bytes_offered = 0

    def register(self, node_id: int) -> None:
        if node_id not in self._nodes:
            self._nodes.append(node_id)

    def send(self, src: int, dst: int, msg: Message, now: float) -> None:
        targets = [n for n in self._nodes if n != src] if dst == BROADCAST else [dst]
        size = binary_size(msg)
        for node in targets:
            self.sent_envelopes += 1
            self.bytes_offered += size
            if self.config.loss_probability > 0 and self._rng.random() < self.config.loss_probability:
                self.dropped_envelopes += 1
                continue
            latency = self.config.latency_mean
            if self.config.latency_jitter > 0:
                latency += self._rng.uniform(-self.config.latency_jitter, self.config.latency_jitter)
            env = Envelope(
                src=src,
                dst=node,
                send_time=now,
                deliver_time=now + max(0.0, latency),
                payload=msg,
                wire_bytes=size,
                seq=self._seq,
            )
            self._seq += 1
            heapq.heappush(self._queue, (env.deliver_time, env.seq, env))

    def poll(self, now: float) -> list[Envelope]:
        """Envelopes due at or before now, in (deliver_time, send sequence) order."""
        out = []
        while self._queue and self._queue[0][0] <= now + 1e-12:
            out.append(heapq.heappop(self._queue)[2])
        return out


# --------------------------------------------------------------------------
# Bandwidth accounting
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BandwidthReport:
    packet_bytes: int
    rate_hz: float
    streams_per_car: int
    media_rate_bps: float
    per_stream_bps: float
    per_car_bps: float
    car_capacity: int

    def lines(self) -> list[str]:
        return [
            f"packet size: {self.packet_bytes} B",
            f"per-stream rate: {self.per_stream_bps:.0f} bps ({int(self.per_stream_bps // 1000)} Kbps)",
            f"per-car rate ({self.streams_per_car} streams): {self.per_car_bps:.0f} bps "
            f"({int(self.per_car_bps // 1000)} Kbps)",
            f"media rate: {self.media_rate_bps:.0f} bps",
            f"car capacity: {self.car_capacity} cars",
        ]

    def csv_lines(self) -> list[str]:
        return [
            "metric,value",
            f"packet_bytes,{self.packet_bytes}",
            f"rate_hz,{self.rate_hz}",
            f"streams_per_car,{self.streams_per_car}",
            f"per_stream_bps,{self.per_stream_bps:.0f}",
            f"per_car_bps,{self.per_car_bps:.0f}",
            f"media_rate_bps,{self.media_rate_bps:.0f}",
            f"car_capacity,{self.car_capacity}",
        ]


def future_path_packet_bytes(points: int) -> int:
    return HEADER_BYTES + FUTURE_POINT_BYTES * points


def bandwidth_report(
    packet_bytes: Optional[int] = None,
    points: Optional[int] = None,
    rate_hz: float = 10.0,
    streams_per_car: int = 3,
    media_rate_bps: float = 6.0e6,
) -> BandwidthReport:
    """Per-stream / per-car traffic and how many cars a medium can carry.

    With no size argument the full UDP payload budget (1460 B) is assumed,
    i.e. the worst-case packet; `points` switches to the exact binary size of
    an n-point future path.  Kilo is 1000-based throughout.
    """
    if packet_bytes is not None and points is not None:
        raise ValueError("give either packet_bytes or points, not both")
    if points is not None:
        if points <= 0:
            raise ValueError("points must be > 0")
        packet_bytes = future_path_packet_bytes(points)
    if packet_bytes is None:
        packet_bytes = MAX_UDP_PAYLOAD
    if packet_bytes <= 0 or rate_hz <= 0 or streams_per_car <= 0 or media_rate_bps <= 0:
        raise ValueError("all bandwidth inputs must be > 0")

    per_stream = packet_bytes * 8 * rate_hz
    per_car = per_stream * streams_per_car
    return BandwidthReport(
        packet_bytes=packet_bytes,
        rate_hz=rate_hz,
        streams_per_car=streams_per_car,
        media_rate_bps=media_rate_bps,
        per_stream_bps=per_stream,
        per_car_bps=per_car,
        car_capacity=int(media_rate_bps // per_car),
    )

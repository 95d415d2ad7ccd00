"""Fixed-step deterministic simulation of crossing traffic at one intersection.

A trial advances the world in dt steps: channel deliveries first, then the
roadside unit (only in the RSU scenario), then every vehicle in id order.
Each vehicle's launch is delayed by a seeded jitter; all randomness derives
from the trial seed, so a (config, seed) pair reproduces bit-identical
metrics and CSV exports.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .coordinator import RoadsideUnit
from .modes import CoordinationMode
from .netsim import (
    BROADCAST,
    AutonomousPathMsg,
    Channel,
    ChannelConfig,
    InitiationMsg,
    Message,
    TerminationMsg,
)
from .path_model import DEFAULT_SHAPE, Point2D, RoutePath, VehicleShape
from .reservation import CoordinationParams, IntersectionGeometry
from .vehicle_agent import (
    ControlLimits,
    PerceptionConfig,
    VehicleAgent,
    VehicleState,
)

RSU_NODE_ID = 0


class ScenarioMode(Enum):
    STAND_ALONE = "stand_alone"
    FUTURE_PATH_ONLY = "future_path_only"
    FUTURE_PATH_WITH_RSU = "future_path_with_rsu"


@dataclass(frozen=True)
class VehicleRouteConfig:
    vehicle_id: int
    route: tuple[Point2D, ...]
    start_s: float = 0.0
    destination_s: Optional[float] = None
    cruise_speed: float = 11.111
    shape: VehicleShape = DEFAULT_SHAPE


@dataclass(frozen=True)
class ScenarioConfig:
    mode: ScenarioMode
    vehicles: tuple[VehicleRouteConfig, ...]
    geometry: IntersectionGeometry = IntersectionGeometry()
    params: CoordinationParams = CoordinationParams()
    limits: ControlLimits = ControlLimits()
    pcfg: PerceptionConfig = PerceptionConfig()
    channel: ChannelConfig = ChannelConfig()
    dt: float = 0.02
    horizon: float = 120.0
    launch_jitter_max: float = 0.3
    master_seed: int = 42

    def __post_init__(self) -> None:
        if not 0 < self.dt <= 0.1:
            raise ValueError("dt must lie in (0, 0.1]")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.launch_jitter_max < 0:
            raise ValueError("launch_jitter_max must be >= 0")
        if len({v.vehicle_id for v in self.vehicles}) != len(self.vehicles):
            raise ValueError("vehicle ids must be unique")
        if any(v.vehicle_id == RSU_NODE_ID for v in self.vehicles):
            raise ValueError(f"vehicle id {RSU_NODE_ID} is reserved for the RSU")


def default_scenario(mode: ScenarioMode = ScenarioMode.STAND_ALONE) -> ScenarioConfig:
    """Two perpendicular roads crossing at the origin.

    Vehicle 1 starts 80 m west of the center heading east, vehicle 2 starts
    95 m south heading north; both destinations lie 80 m past the center, so
    vehicle 1 reaches the crossing first when undisturbed.
    """
    return ScenarioConfig(
        mode=mode,
        vehicles=(
            VehicleRouteConfig(vehicle_id=1, route=(Point2D(-80.0, 0.0), Point2D(80.0, 0.0))),
            VehicleRouteConfig(vehicle_id=2, route=(Point2D(0.0, -95.0), Point2D(0.0, 80.0))),
        ),
    )


# --------------------------------------------------------------------------
# Metrics
# --------------------------------------------------------------------------


@dataclass
class TrialMetrics:
    trial_index: int
    seed: int
    launch_times: dict[int, float] = field(default_factory=dict)
    passing_times: dict[int, Optional[float]] = field(default_factory=dict)
    first_pass: Optional[int] = None
    min_speed_near_zone: dict[int, float] = field(default_factory=dict)
    speed_traces: dict[int, list[tuple[float, float, float, str]]] = field(default_factory=dict)
    mode_log: list[tuple[float, int, str]] = field(default_factory=list)
    protocol_events: list[tuple[float, str, int]] = field(default_factory=list)
    safety_violations: int = 0
    min_zone_separation: float = math.inf
    finished: dict[int, bool] = field(default_factory=dict)

    @property
    def all_finished(self) -> bool:
        return all(self.finished.values())

    def mean_passing_time(self) -> Optional[float]:
        vals = [t for t in self.passing_times.values() if t is not None]
        return sum(vals) / len(vals) if vals else None


@dataclass
class ExperimentSummary:
    mode: ScenarioMode
    trials: list[TrialMetrics]
    mean_passing: dict[int, float]
    overall_mean: float
    first_pass_counts: dict[int, int]
    all_finished: bool


def passing_time(samples: Sequence[tuple[float, float]], destination_s: float) -> Optional[float]:
    """First time the arc position reaches destination_s, linearly interpolated.

    samples is a time-ordered sequence of (time, arc position) pairs; returns
    None when the destination is never reached.
    """
    if not samples:
        return None
    t_prev, s_prev = samples[0]
    if s_prev >= destination_s:
        return t_prev
    for t, s in samples[1:]:
        if s >= destination_s:
            if s == s_prev:
                return t
            frac = (destination_s - s_prev) / (s - s_prev)
            return t_prev + frac * (t - t_prev)
        t_prev, s_prev = t, s
    return None


# --------------------------------------------------------------------------
# Trial runner
# --------------------------------------------------------------------------


def _trial_rng(trial_seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(trial_seed))


def run_trial(cfg: ScenarioConfig, trial_seed: int, trial_index: int = 0) -> TrialMetrics:
    rng = _trial_rng(trial_seed)
    metrics = TrialMetrics(trial_index=trial_index, seed=trial_seed)

    share = cfg.mode is not ScenarioMode.STAND_ALONE
    use_rsu = cfg.mode is ScenarioMode.FUTURE_PATH_WITH_RSU

    agents: list[VehicleAgent] = []
    for vc in sorted(cfg.vehicles, key=lambda v: v.vehicle_id):
        launch = float(rng.uniform(0.0, cfg.launch_jitter_max)) if cfg.launch_jitter_max > 0 else 0.0
        state = VehicleState(
            vehicle_id=vc.vehicle_id,
            route=RoutePath(vc.route),
            s=vc.start_s,
            cruise_speed=vc.cruise_speed,
            shape=vc.shape,
            destination_s=vc.destination_s,
        )
        agents.append(
            VehicleAgent(
                state,
                cfg.params,
                cfg.geometry,
                cfg.limits,
                cfg.pcfg,
                share_paths=share,
                use_rsu=use_rsu,
                launch_time=launch,
                rsu_id=RSU_NODE_ID,
            )
        )
        metrics.launch_times[vc.vehicle_id] = launch
        metrics.speed_traces[vc.vehicle_id] = []

    channel: Optional[Channel] = None
    if share:
        channel_seed = int(rng.integers(0, 2**63 - 1))
        channel = Channel(replace(cfg.channel, seed=channel_seed))
        for agent in agents:
            channel.register(agent.state.vehicle_id)
        if use_rsu:
            channel.register(RSU_NODE_ID)

    rsu = RoadsideUnit(cfg.params, cfg.geometry, node_id=RSU_NODE_ID) if use_rsu else None

    centers = {a.state.vehicle_id: a.state.route.project(cfg.geometry.center) for a in agents}
    arc_samples: dict[int, list[tuple[float, float]]] = {a.state.vehicle_id: [] for a in agents}

    def record(t: float) -> None:
        for agent in agents:
            st = agent.state
            arc_samples[st.vehicle_id].append((t, st.s))
            metrics.speed_traces[st.vehicle_id].append(
                (t, st.s - centers[st.vehicle_id], st.v, st.mode.value)
            )
        positions = [(a.state.vehicle_id, a.state.pos) for a in agents]
        for i in range(len(positions)):
            for j in range(i + 1, len(positions)):
                pi = positions[i][1]
                pj = positions[j][1]
                if (
                    pi.distance_to(cfg.geometry.center) <= cfg.geometry.zone_radius
                    and pj.distance_to(cfg.geometry.center) <= cfg.geometry.zone_radius
                ):
                    d = pi.distance_to(pj)
                    metrics.min_zone_separation = min(metrics.min_zone_separation, d)
                    if d < cfg.params.d_margin:
                        metrics.safety_violations += 1

    def track_protocol(msgs: Sequence[Message], t: float) -> None:
        for m in msgs:
            if isinstance(m, InitiationMsg):
                metrics.protocol_events.append((t, f"initiation_{m.target_mode.value}", m.vehicle_id))
            elif isinstance(m, TerminationMsg):
                metrics.protocol_events.append((t, "termination", m.vehicle_id))

    record(0.0)
    steps = int(round(cfg.horizon / cfg.dt))
    for step in range(steps):
        now = step * cfg.dt

        inboxes: dict[int, list[Message]] = {a.state.vehicle_id: [] for a in agents}
        rsu_inbox: list[Message] = []
        if channel is not None:
            for env in channel.poll(now):
                if env.dst == RSU_NODE_ID:
                    rsu_inbox.append(env.payload)
                elif env.dst in inboxes:
                    inboxes[env.dst].append(env.payload)

        if rsu is not None and channel is not None:
            outbound = rsu.tick(now)
            for msg in rsu_inbox:
                outbound.extend(rsu.handle_message(msg, now))
            track_protocol(outbound, now)
            for msg in outbound:
                channel.send(RSU_NODE_ID, msg.vehicle_id, msg, now)

        snapshot = [a.state for a in agents]
        for agent in agents:
            others = [s for s in snapshot if s.vehicle_id != agent.state.vehicle_id]
            out = agent.tick(now, inboxes[agent.state.vehicle_id], others, cfg.dt)
            if channel is not None:
                for msg in out:
                    if isinstance(msg, AutonomousPathMsg):
                        channel.send(agent.state.vehicle_id, RSU_NODE_ID, msg, now)
                    else:
                        channel.send(agent.state.vehicle_id, BROADCAST, msg, now)

        record(now + cfg.dt)
        if all(a.state.done for a in agents):
            break

    for agent in agents:
        vid = agent.state.vehicle_id
        dest = agent.state.destination_s
        arrival = passing_time(arc_samples[vid], dest)
        metrics.finished[vid] = arrival is not None
        metrics.passing_times[vid] = (
            arrival - metrics.launch_times[vid] if arrival is not None else None
        )
        near = [
            v
            for _, signed, v, _ in metrics.speed_traces[vid]
            if abs(signed) <= 30.0
        ]
        metrics.min_speed_near_zone[vid] = min(near) if near else math.inf

    crossings = []
    for agent in agents:
        vid = agent.state.vehicle_id
        t_cross = passing_time(arc_samples[vid], centers[vid])
        if t_cross is not None:
            crossings.append((t_cross, vid))
    metrics.first_pass = min(crossings)[1] if crossings else None

    if rsu is not None:
        metrics.mode_log = [(t, vid, mode.value) for t, vid, mode in rsu.mode_log]

    return metrics


def trial_seeds(master_seed: int, n_trials: int) -> list[int]:
    """Stable per-trial seeds derived from the master seed."""
    return [
        int(np.random.SeedSequence(entropy=master_seed, spawn_key=(i,)).generate_state(1)[0])
        for i in range(n_trials)
    ]


def run_experiment(cfg: ScenarioConfig, n_trials: int, master_seed: Optional[int] = None) -> ExperimentSummary:
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    if master_seed is None:
        master_seed = cfg.master_seed

    trials = [
        run_trial(cfg, seed, trial_index=i)
        for i, seed in enumerate(trial_seeds(master_seed, n_trials))
    ]

    vids = sorted(v.vehicle_id for v in cfg.vehicles)
    mean_passing = {}
    for vid in vids:
        vals = [t.passing_times[vid] for t in trials if t.passing_times[vid] is not None]
        mean_passing[vid] = sum(vals) / len(vals) if vals else math.nan
    all_vals = [
        t.passing_times[vid]
        for t in trials
        for vid in vids
        if t.passing_times[vid] is not None
    ]
    overall = sum(all_vals) / len(all_vals) if all_vals else math.nan
    counts = {vid: sum(1 for t in trials if t.first_pass == vid) for vid in vids}

    return ExperimentSummary(
        mode=cfg.mode,
        trials=trials,
        mean_passing=mean_passing,
        overall_mean=overall,
        first_pass_counts=counts,
        all_finished=all(t.all_finished for t in trials),
    )


# --------------------------------------------------------------------------
# Scenario files (self-describing JSON, every field explicit)
# --------------------------------------------------------------------------


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    return {
        "mode": cfg.mode.value,
        "geometry": {
            "center": {"x": cfg.geometry.center.x, "y": cfg.geometry.center.y},
            "zone_radius": cfg.geometry.zone_radius,
            "approach_radius": cfg.geometry.approach_radius,
        },
        "vehicles": [
            {
                "vehicle_id": v.vehicle_id,
                "route": [{"x": p.x, "y": p.y} for p in v.route],
                "start_s": v.start_s,
                "destination_s": v.destination_s,
                "cruise_speed": v.cruise_speed,
                "shape": {"length": v.shape.length, "width": v.shape.width},
            }
            for v in cfg.vehicles
        ],
        "params": {
            "t_collision": cfg.params.t_collision,
            "t_free": cfg.params.t_free,
            "d_margin": cfg.params.d_margin,
            "v_max": cfg.params.v_max,
            "tau_time": cfg.params.tau_time,
        },
        "limits": {"a_max": cfg.limits.a_max, "b_max": cfg.limits.b_max},
        "pcfg": {"r_vis": cfg.pcfg.r_vis, "d_detect": cfg.pcfg.d_detect},
        "channel": {
            "latency_mean": cfg.channel.latency_mean,
            "latency_jitter": cfg.channel.latency_jitter,
            "loss_probability": cfg.channel.loss_probability,
            "seed": cfg.channel.seed,
        },
        "dt": cfg.dt,
        "horizon": cfg.horizon,
        "launch_jitter_max": cfg.launch_jitter_max,
        "master_seed": cfg.master_seed,
    }


def scenario_from_dict(doc: dict) -> ScenarioConfig:
    geometry = IntersectionGeometry(
        center=Point2D(**doc["geometry"]["center"]),
        zone_radius=doc["geometry"]["zone_radius"],
        approach_radius=doc["geometry"]["approach_radius"],
    )
    vehicles = tuple(
        VehicleRouteConfig(
            vehicle_id=v["vehicle_id"],
            route=tuple(Point2D(**p) for p in v["route"]),
            start_s=v.get("start_s", 0.0),
            destination_s=v.get("destination_s"),
            cruise_speed=v.get("cruise_speed", 11.111),
            shape=VehicleShape(**v["shape"]) if "shape" in v else DEFAULT_SHAPE,
        )
        for v in doc["vehicles"]
    )
    return ScenarioConfig(
        mode=ScenarioMode(doc["mode"]),
        vehicles=vehicles,
        geometry=geometry,
        params=CoordinationParams(**doc.get("params", {})),
        limits=ControlLimits(**doc.get("limits", {})),
        pcfg=PerceptionConfig(**doc.get("pcfg", {})),
        channel=ChannelConfig(**doc.get("channel", {})),
        dt=doc.get("dt", 0.02),
        horizon=doc.get("horizon", 120.0),
        launch_jitter_max=doc.get("launch_jitter_max", 0.3),
        master_seed=doc.get("master_seed", 42),
    )


def save_scenario(cfg: ScenarioConfig, path: Path | str) -> Path:
    import json

    p = Path(path)
    p.write_text(json.dumps(scenario_to_dict(cfg), indent=2) + "\n")
    return p


def load_scenario(path: Path | str) -> ScenarioConfig:
    import json

    return scenario_from_dict(json.loads(Path(path).read_text()))


# --------------------------------------------------------------------------
# Exports
# --------------------------------------------------------------------------


def traces_csv(trials: Sequence[TrialMetrics]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["trial", "vehicle", "time_s", "signed_dist_m", "speed_mps", "mode"])
    for tm in trials:
        for vid in sorted(tm.speed_traces):
            for t, signed, v, mode in tm.speed_traces[vid]:
                w.writerow([tm.trial_index, vid, f"{t:.3f}", f"{signed:.3f}", f"{v:.3f}", mode])
    return buf.getvalue()


def export_traces(trials: Sequence[TrialMetrics], out_path: Path | str) -> Path:
    path = Path(out_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(traces_csv(trials))
    return path


def trials_csv(summary: ExperimentSummary) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(
        ["trial", "seed", "vehicle", "launch_s", "passing_time_s", "min_speed_near_zone_mps",
         "first_pass", "finished"]
    )
    for tm in summary.trials:
        for vid in sorted(tm.passing_times):
            pt = tm.passing_times[vid]
            w.writerow(
                [
                    tm.trial_index,
                    tm.seed,
                    vid,
                    f"{tm.launch_times[vid]:.3f}",
                    f"{pt:.3f}" if pt is not None else "",
                    f"{tm.min_speed_near_zone[vid]:.3f}",
                    int(tm.first_pass == vid),
                    int(tm.finished[vid]),
                ]
            )
    return buf.getvalue()


def summary_csv(summaries: Sequence[ExperimentSummary]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    vids = sorted(summaries[0].mean_passing) if summaries else []
    header = ["scenario", "trials", "overall_mean_passing_s"]
    for vid in vids:
        header += [f"v{vid}_mean_passing_s", f"v{vid}_first_pass_count"]
    header += ["safety_violations", "all_finished"]
    w.writerow(header)
    for s in summaries:
        row = [s.mode.value, len(s.trials), f"{s.overall_mean:.3f}"]
        for vid in vids:
            row += [f"{s.mean_passing[vid]:.3f}", s.first_pass_counts[vid]]
        row += [sum(t.safety_violations for t in s.trials), int(s.all_finished)]
        w.writerow(row)
    return buf.getvalue()


def format_summary_table(summaries: Sequence[ExperimentSummary]) -> str:
    """Human-readable cross-scenario table of first-pass counts and mean times."""
    if not summaries:
        return "(no results)"
    vids = sorted(summaries[0].mean_passing)
    names = [s.mode.value for s in summaries]
    width = max(len(n) for n in names) + 2
    lines = [" " * 28 + "".join(f"{n:>{width}}" for n in names)]
    for vid in vids:
        lines.append(
            f"vehicle {vid} passes first   "
            + "".join(f"{s.first_pass_counts[vid]:>{width}}" for s in summaries)
        )
    for vid in vids:
        lines.append(
            f"vehicle {vid} passing time   "
            + "".join(f"{s.mean_passing[vid]:>{width}.2f}" for s in summaries)
        )
    lines.append(
        "overall passing time       "
        + "".join(f"{s.overall_mean:>{width}.2f}" for s in summaries)
    )
    return "\n".join(lines)

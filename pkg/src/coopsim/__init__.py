"""coopsim: deterministic multi-agent simulation of cooperative intersection crossing.

Vehicles broadcast time-parametrized future paths at 10 Hz; a roadside unit
keeps a reservation table of those paths, detects space-time conflicts and
answers with coordinated speed overrides (stop to yield, road maximum to
clear) so traffic crosses a blind intersection without stopping.
"""

from .modes import CoordinationMode
from .path_model import (
    DEFAULT_SHAPE,
    FuturePath,
    FuturePathPoint,
    Point2D,
    RoutePath,
    Trajectory,
    TrajectoryPoint,
    VehicleShape,
    nearest_point_index,
    resample_polyline,
    to_future_path,
    truncate_horizon,
)
from .reservation import (
    ConflictInfo,
    CoordinationParams,
    IntersectionGeometry,
    ReservationTable,
    detect_conflict,
    has_acceleration_room,
    table_check,
)
from .coordinator import RoadsideUnit, VehicleSession, make_coordinated_path
from .vehicle_agent import (
    ControlLimits,
    PerceptionConfig,
    VehicleAgent,
    VehicleState,
    apply_future_obstacles,
    apply_intersection_rule,
    control_step,
    perceive,
    plan_route_trajectory,
    select_active_plan,
)
from .netsim import (
    AutonomousPathMsg,
    Channel,
    ChannelConfig,
    CoordinatedPathMsg,
    Envelope,
    FuturePathMsg,
    InitiationMsg,
    TerminationMsg,
    bandwidth_report,
    decode_binary,
    decode_json,
    encode_binary,
    encode_json,
)
from .sim_engine import (
    ExperimentSummary,
    ScenarioConfig,
    ScenarioMode,
    TrialMetrics,
    VehicleRouteConfig,
    default_scenario,
    export_traces,
    load_scenario,
    passing_time,
    run_experiment,
    run_trial,
    save_scenario,
)

__version__ = "0.1.0"

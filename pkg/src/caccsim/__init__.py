"""Microscopic freeway simulator for CACC platooning on managed lanes."""
from .comms import ChannelKind, ChannelModel, reception_probability, sample_link
from .core import World, simulate
from .enums import ControlMode, LaneChangeKind, Strategy, VehicleClass
from .errors import ConfigError, JoinRejected, OverlapFault, SimulationFault
from .fleet import VehicleState
from .lateral import (
    CACC_LC,
    HUMAN_LC,
    LaneChangeAssessment,
    LaneChangeParams,
    mandatory_merge,
    mobil_assess,
    select_cluster_target,
)
from .longitudinal import (
    CACC_IDM,
    HUMAN_IDM,
    IdmParams,
    cah_accel,
    desired_gap,
    eidm_accel,
    idm_accel,
)
from .metrics import (
    MetricsLedger,
    ScoreMatrix,
    VTMicroCoefficients,
    equity_summary,
    fuel_rate,
    load_vtmicro,
    platoon_measures,
    pti,
    q_value,
    score_matrix,
    speed_stddev,
)
from .platooning import (
    FallbackState,
    PlatoonParams,
    PlatoonRecord,
    fallback_loop,
    free_agent_step,
    gap_policy,
    integrity_check,
    join_rear,
)
from .scenario import (
    DemandTable,
    NetworkGeometry,
    ScenarioConfig,
    access_zone_builder,
    desk_scale,
    generate_arrivals,
    lane_eligibility,
    load_config,
)

__version__ = "0.1.0"

__all__ = [
    "ChannelKind",
    "ChannelModel",
    "reception_probability",
    "sample_link",
    "World",
    "simulate",
    "ControlMode",
    "LaneChangeKind",
    "Strategy",
    "VehicleClass",
    "ConfigError",
    "JoinRejected",
    "OverlapFault",
    "SimulationFault",
    "VehicleState",
    "CACC_LC",
    "HUMAN_LC",
    "LaneChangeAssessment",
    "LaneChangeParams",
    "mandatory_merge",
    "mobil_assess",
    "select_cluster_target",
    "CACC_IDM",
    "HUMAN_IDM",
    "IdmParams",
    "cah_accel",
    "desired_gap",
    "eidm_accel",
    "idm_accel",
    "MetricsLedger",
    "ScoreMatrix",
    "VTMicroCoefficients",
    "equity_summary",
    "fuel_rate",
    "load_vtmicro",
    "platoon_measures",
    "pti",
    "q_value",
    "score_matrix",
    "speed_stddev",
    "FallbackState",
    "PlatoonParams",
    "PlatoonRecord",
    "fallback_loop",
    "free_agent_step",
    "gap_policy",
    "integrity_check",
    "join_rear",
    "DemandTable",
    "NetworkGeometry",
    "ScenarioConfig",
    "access_zone_builder",
    "desk_scale",
    "generate_arrivals",
    "lane_eligibility",
    "load_config",
    "__version__",
]

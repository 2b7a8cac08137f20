"""Deterministic corridor simulation of mixed CAV/HDV traffic with lossy V2V.

The package couples longitudinal control (IDM human drivers, linear ACC, and
a constant-time-headway CACC with beacon feedforward) to a Bernoulli-loss
beaconing channel, and measures traffic efficiency as edge-based travel rate
and relative congestion index over an MPR x PER scenario grid.
"""

from .comms import BeaconMsg, ChannelConfig, LinkState
from .config import (BatchSpec, ConfigError, OutputOptions, ScenarioConfig,
                     SimParams, default_scenario, derive_seed, load_scenario,
                     save_scenario)
from .control import (CaccState, CavParams, ControlConfig, ControlMode,
                      HdvParams, LeaderObservation, Mode, VehicleClass,
                      acc_accel, actuator_step, brake_to_avoid, cacc_step,
                      cruise_accel, headway_blend, idm_accel, select_mode)
from .engine import (SpawnQueueOverflow, TrajectoryWriter, VehicleState,
                     World, kinematics_update)
from .metrics import (EdgeRecord, MetricsAccumulator, RunSummary,
                      network_summary, rci, record_traversal, travel_rate)
from .network import DemandSpec, Edge, Ramp, RoadNetwork, default_corridor
from .runner import BatchResult, RunResult, run_batch, run_scenario

__version__ = "1.0.0"

__all__ = [
    "BeaconMsg", "ChannelConfig", "LinkState",
    "BatchSpec", "ConfigError", "OutputOptions", "ScenarioConfig", "SimParams",
    "default_scenario", "derive_seed", "load_scenario", "save_scenario",
    "CaccState", "CavParams", "ControlConfig", "ControlMode", "HdvParams",
    "LeaderObservation", "Mode", "VehicleClass",
    "acc_accel", "actuator_step", "brake_to_avoid", "cacc_step", "cruise_accel",
    "headway_blend", "idm_accel", "select_mode",
    "SpawnQueueOverflow", "TrajectoryWriter", "VehicleState", "World",
    "kinematics_update",
    "EdgeRecord", "MetricsAccumulator", "RunSummary", "network_summary", "rci",
    "record_traversal", "travel_rate",
    "DemandSpec", "Edge", "Ramp", "RoadNetwork", "default_corridor",
    "BatchResult", "RunResult", "run_batch", "run_scenario",
]

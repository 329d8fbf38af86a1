"""Fleet coordination of plug-in hybrid EV/ICE mode choices against a renewable-energy forecast."""

from sponge.fleet import (
    BatterySpec,
    DriveMode,
    FleetConfig,
    FuelSpec,
    TripPlan,
    VehicleState,
    aggregate_dissipation,
    check_eligibility,
    spawn_fleet,
    step_vehicle,
)
from sponge.targets import EnergyForecast, TargetTrajectory, Window, build_trajectory, build_windows, carry_over
from sponge.controllers import BroadcastSignal, ControllerState, SignalKind, pi_update, proportional_update
from sponge.aimd import (
    AimdAgentState,
    UtilityFunction,
    additive_increase,
    backoff_decision,
    congestion_detect,
    consensus_spread,
    kkt_oracle,
    update_share,
)
from sponge.engine import ControllerConfig, MetricsRecord, RunSummary, Scenario, feasibility_probe, run_scenario

__all__ = [
    "AimdAgentState",
    "BatterySpec",
    "BroadcastSignal",
    "ControllerConfig",
    "ControllerState",
    "DriveMode",
    "EnergyForecast",
    "FleetConfig",
    "FuelSpec",
    "MetricsRecord",
    "RunSummary",
    "Scenario",
    "SignalKind",
    "TargetTrajectory",
    "TripPlan",
    "UtilityFunction",
    "VehicleState",
    "Window",
    "additive_increase",
    "aggregate_dissipation",
    "backoff_decision",
    "build_trajectory",
    "build_windows",
    "carry_over",
    "check_eligibility",
    "congestion_detect",
    "consensus_spread",
    "feasibility_probe",
    "kkt_oracle",
    "pi_update",
    "proportional_update",
    "run_scenario",
    "spawn_fleet",
    "step_vehicle",
    "update_share",
]

"""Closed-loop operator/aggregator control with maximum entropy flexibility feedback."""
from .controllers import (
    MPC,
    PPC,
    DeadEndError,
    InfeasibleInstance,
    MpcConfig,
    PpcConfig,
    Replay,
    beta_sweep,
    mpc_step,
    offline_optimal_bruteforce,
    offline_optimal_flow,
    ppc_step,
)
from .core import (
    ActionGrid,
    CostSchedule,
    InstanceError,
    Scenario,
    TimeGrid,
    UnconstrainedOracle,
    Violation,
    evaluate_cost,
    validate_scenario,
)
from .ev import ChargingSession, EVAggregator, EVState, load_sessions_csv
from .harness import RunReport, RunSpec, compute_mpe, compute_mse, run_batch, run_closed_loop
from .mef import (
    BudgetExceeded,
    CapacityError,
    ExactProvider,
    FlexibilityFeedback,
    SampledProvider,
    chain_entropy,
    count_continuations,
    exact_mef,
    sampled_mef,
    system_capacity,
)
from .scenario_io import load_scenario, save_scenario

__version__ = "0.1.0"

__all__ = [
    "ActionGrid",
    "BudgetExceeded",
    "CapacityError",
    "ChargingSession",
    "CostSchedule",
    "DeadEndError",
    "EVAggregator",
    "EVState",
    "ExactProvider",
    "FlexibilityFeedback",
    "InfeasibleInstance",
    "InstanceError",
    "MPC",
    "MpcConfig",
    "PPC",
    "PpcConfig",
    "Replay",
    "RunReport",
    "RunSpec",
    "SampledProvider",
    "Scenario",
    "TimeGrid",
    "UnconstrainedOracle",
    "Violation",
    "beta_sweep",
    "chain_entropy",
    "compute_mpe",
    "compute_mse",
    "count_continuations",
    "evaluate_cost",
    "exact_mef",
    "load_scenario",
    "load_sessions_csv",
    "mpc_step",
    "offline_optimal_bruteforce",
    "offline_optimal_flow",
    "ppc_step",
    "run_batch",
    "run_closed_loop",
    "sampled_mef",
    "save_scenario",
    "system_capacity",
    "validate_scenario",
]

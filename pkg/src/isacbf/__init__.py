"""ISAC transmit beamforming via dual subgradient ascent and fixed-point iteration."""

from .model import (
    BeamformingSolution,
    NumericsError,
    Scenario,
    SensingOperator,
    ViolationReport,
    beampattern_mse,
    build_sensing_operator,
    check_solution,
    optimal_scaling,
    sensing_map,
    sinr,
    steering_vector,
)
from .downlink import (
    DownlinkProblem,
    DownlinkSolution,
    FpiOutcome,
    FpiStatus,
    NotEvaluableError,
    RecoveryError,
    assess_boundedness,
    certificate_holds,
    dual_matrix,
    fpi_solve,
    interference_map,
    recover_primal,
    solve_power_allocation,
    weighting_matrix,
)
from .ascent import (
    AscentParams,
    InfeasibleScenarioError,
    IsacSolution,
    bb_stepsize,
    dual_ascent_solve,
    inner_value_and_solution,
    penalized_dual_value,
    subgradient,
)
from .harness import (
    GenConfig,
    emit_fpi_trace,
    enumerate_fixed_points,
    generate_scenario,
    run_benchmark,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]

"""Totally asynchronous multi-agent tracking of time-varying convex optima.

The package simulates a block projected-gradient update law under
arbitrary communication and computation delays, detects completed
communication cycles, evaluates the closed-form tracking-error bounds,
and allocates a communication-cycle budget across epochs.
"""

from .blocks import BoxSet, Partition, PartitionedVector, block_max_norm, block_slice, project_box
from .bounds import (
    BoundInputs,
    asymptotic_bound,
    finite_time_bound,
    required_cycles_asymptotic,
    required_cycles_finite,
)
from .cycles import CycleCount, detect_cycles
from .errors import (
    AssumptionViolation,
    ConfigError,
    ConvergenceFailure,
    InfeasibleBudget,
    InvalidStepsize,
    PartitionMismatch,
    SolverFailure,
)
from .objectives import (
    EpochConstants,
    ObjectiveEpoch,
    TimeVaryingProblem,
    assemble_problem,
    check_block_diagonal_dominance,
    contraction_factor,
    estimate_epoch_constants,
    generate_feedback_problem,
    generate_quadratic_problem,
    make_feedback_objective,
    minimizer_drift,
    minimizer_oracle,
    quadratic_epoch,
    stepsize_bound,
)
from .planner import CyclePlan, brute_force_plan, objective_value, round_plan, solve_kkt
from .simulator import CommRule, DelayRule, EventTrace, Schedule, audit_trace, error_series, run

__version__ = "0.1.0"

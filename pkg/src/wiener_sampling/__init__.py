"""Optimal sampling of a Wiener process over a random-delay FIFO channel.

Solvers for the MMSE-optimal (signal-variation) and age-optimal
(time-variation) sampling thresholds, and a Monte Carlo simulator that checks
them.
"""
__version__ = "0.1.0"

from .analytics import (
    Binding,
    FrequencyConstraint,
    MultipleRootsError,
    SolverError,
    ThresholdSolution,
    e_max_beta2_wy4,
    e_max_beta_wy2,
    mmse_age_value,
    mmse_opt_value,
    small_fmax_ratio,
    solve_beta_age,
    solve_beta_mmse,
    zero_wait_age_optimal,
    zero_wait_mmse_optimal,
)
from .delay import (
    Degenerate,
    DelayFileError,
    DelayModel,
    Empirical,
    Exponential,
    LogNormalNormalized,
    Scaled,
    load_empirical,
    parse_delay,
)
from .kernels import (
    FixedTime,
    TwoSidedExit,
    advance_fixed,
    dt_halving_check,
    simulate_hitting,
    wald_moment_oracle,
)
from .simulator import (
    AgeThreshold,
    SignalThreshold,
    SimulationResult,
    Uniform,
    ZeroWait,
    age_equals_mse_for_signal_independent,
    cycle_identity_check,
    parse_policy,
    run_cycles,
)

__all__ = [
    "__version__",
    "Binding",
    "FrequencyConstraint",
    "MultipleRootsError",
    "SolverError",
    "ThresholdSolution",
    "e_max_beta2_wy4",
    "e_max_beta_wy2",
    "mmse_age_value",
    "mmse_opt_value",
    "small_fmax_ratio",
    "solve_beta_age",
    "solve_beta_mmse",
    "zero_wait_age_optimal",
    "zero_wait_mmse_optimal",
    "Degenerate",
    "DelayFileError",
    "DelayModel",
    "Empirical",
    "Exponential",
    "LogNormalNormalized",
    "Scaled",
    "load_empirical",
    "parse_delay",
    "FixedTime",
    "TwoSidedExit",
    "advance_fixed",
    "dt_halving_check",
    "simulate_hitting",
    "wald_moment_oracle",
    "AgeThreshold",
    "SignalThreshold",
    "SimulationResult",
    "Uniform",
    "ZeroWait",
    "age_equals_mse_for_signal_independent",
    "cycle_identity_check",
    "parse_policy",
    "run_cycles",
]

"""Numerical laboratory for staged null control of generalized viscous Burgers equations."""

from __future__ import annotations

from .control_pipeline import StagePlan, StrategyResult, StrategyTargets, plan_strategy, run_strategy
from .errors import (
    BadTiming,
    BlowUp,
    BracketFailure,
    BurgersError,
    CflViolation,
    HypothesisViolation,
    HypothesisWarning,
    NonFinite,
    PreconditionNotOrdered,
    StageFailed,
    StepBudgetExceeded,
    TargetMissed,
    WeightOverflow,
)
from .kernels import BACKEND
from .model import ControlSchedule, Field, FluxVariant, Grid, ModelParams, Trajectory, flux, flux_prime
from .solver import SolverConfig, solve, step
from .steady_state import SteadyStateProfile, solve_steady

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "BadTiming", "BlowUp", "BracketFailure", "BurgersError", "CflViolation", "ControlSchedule",
    "Field", "FluxVariant", "Grid", "HypothesisViolation", "HypothesisWarning", "ModelParams", "NonFinite",
    "PreconditionNotOrdered", "SolverConfig", "StageFailed", "StagePlan", "StepBudgetExceeded",
    "SteadyStateProfile", "StrategyResult", "StrategyTargets", "TargetMissed", "Trajectory", "WeightOverflow",
    "flux", "flux_prime", "plan_strategy", "run_strategy", "solve", "solve_steady", "step",
]

"""Exception types raised across the package."""

from __future__ import annotations

from typing import Any


class BurgersError(Exception):
    """Base class for all errors raised by :mod:`burgers_nullctl`."""


class CflViolation(BurgersError):
    def __init__(self, dt: float, bound: float) -> None:
        super().__init__(f"time step {dt:.3e} exceeds the stability bound {bound:.3e}")
        self.dt = dt
        self.bound = bound


class NonFinite(BurgersError):
    pass


class StepBudgetExceeded(BurgersError):
    pass


class BlowUp(BurgersError):
    pass


class BracketFailure(BurgersError):
    pass


class BadTiming(BurgersError, ValueError):
    pass


class HypothesisViolation(BurgersError):
    pass


class PreconditionNotOrdered(BurgersError, ValueError):
    pass


class WeightOverflow(BurgersError, OverflowError):
    pass


class StageFailed(BurgersError):
    def __init__(self, stage: int, report: Any) -> None:
        super().__init__(f"stage {stage} exit condition failed: {report}")
        self.stage = stage
        self.report = report


class TargetMissed(BurgersError):
    """The optimizer ran out of budget above the requested terminal norm.

    The best control found and its trajectory are attached so callers can
    still inspect or use them.
    """

    def __init__(self, best_norm: float, control: Any = None, trajectory: Any = None) -> None:
        super().__init__(f"terminal L2 norm {best_norm:.3e} above target")
        self.best_norm = best_norm
        self.control = control
        self.trajectory = trajectory


class HypothesisWarning(UserWarning):
    """Parameters fall outside the regime covered by the controllability theorem."""

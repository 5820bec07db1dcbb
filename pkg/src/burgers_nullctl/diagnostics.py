"""Functionals of computed states and the property checks built on them.

Quadrature is the trapezoid rule on the nodal values throughout. Bound checks
return a :class:`FunctionalReport` carrying the sampled values, the bound, and
the worst margin, so a verdict is never reported without its slack.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import PreconditionNotOrdered, WeightOverflow
from .model import ControlSchedule, Field, Grid, ModelParams, Trajectory, _interp_left
from .solver import SolverConfig, solve

PASS = "pass"
FAIL = "fail"
NOT_APPLICABLE = "not-applicable"

_EXP_LIMIT = 700.0


@dataclass
class FunctionalReport:
    name: str
    times: np.ndarray
    values: np.ndarray
    verdict: str
    bound: np.ndarray | None = None
    margin: float = math.nan
    """Smallest ``bound - value`` over the sampled times (negative on failure)."""
    notes: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    @property
    def series(self) -> list[tuple[float, float]]:
        return list(zip(self.times.tolist(), self.values.tolist()))

    @property
    def bound_series(self) -> list[tuple[float, float]] | None:
        if self.bound is None:
            return None
        return list(zip(self.times.tolist(), self.bound.tolist()))


def trapezoid_weights(grid: Grid) -> np.ndarray:
    w = np.full(grid.n_nodes, grid.h)
    w[0] = w[-1] = 0.5 * grid.h
    return w


def integrate(values: np.ndarray, grid: Grid) -> float:
    return float(trapezoid_weights(grid) @ values)


def l1_norm(y: Field) -> float:
    return integrate(np.abs(y.values), y.grid)


def l2_norm(y: Field) -> float:
    return math.sqrt(integrate(y.values ** 2, y.grid))


def weight_exponent(theta: float, gamma: float) -> float:
    return 0.5 * gamma * theta ** (gamma - 1.0)


def weighted_l2_A(y: Field, theta: float, gamma: float) -> float:
    """``int y^2 A dx`` with ``A(x) = exp(gamma theta^(gamma-1) (1 - x) / 2)``.

    Raises :class:`WeightOverflow` once the weight exponent exceeds 700; use
    :func:`log_weighted_l2_A` there.
    """
    s = weight_exponent(theta, gamma)
    if s > _EXP_LIMIT:
        raise WeightOverflow(f"weight exponent {s:.4g} > {_EXP_LIMIT}; use log_weighted_l2_A")
    A = np.exp(s * (1.0 - y.grid.x))
    return integrate(y.values ** 2 * A, y.grid)


def log_weighted_l2_A(y: Field, theta: float, gamma: float) -> float:
    """Natural log of :func:`weighted_l2_A`, valid for any exponent (``-inf`` for ``y = 0``)."""
    s = weight_exponent(theta, gamma)
    sq = y.values ** 2
    keep = sq > 0
    if not np.any(keep):
        return -math.inf
    w = trapezoid_weights(y.grid)
    terms = np.log(w[keep]) + np.log(sq[keep]) + s * (1.0 - y.grid.x[keep])
    return float(logsumexp(terms))


def moment_x_minus_1(y: Field) -> float:
    return integrate((y.grid.x - 1.0) * y.values, y.grid)


# -- passive-stage residue ------------------------------------------------

def residue_alpha(gamma: float) -> float:
    """Midpoint of ``(1/2, gamma - 1)``: the exponent used for the residue width."""
    return 0.5 * (0.5 + (gamma - 1.0))


def residue_data(grid: Grid, theta: float, eta: float, width: float) -> Field:
    """``-2 eta - theta * 1[x >= 1 - width]``: a lower envelope of the stage-2 exit states."""
    if width < 0 or eta < 0 or theta < 0:
        raise ValueError("theta, eta and width must be nonnegative")
    x = grid.x
    return Field(-2.0 * eta - theta * (x >= 1.0 - width - 1e-14), grid)


def residue_moment(theta: float, eta: float, width: float) -> float:
    """Exact ``(x-1)``-moment of the residue data, ``theta width^2 / 2 + eta``.

    With ``width = C theta^(-alpha)`` this is ``C^2 theta^(1-2 alpha) / 2 + eta``.
    """
    return 0.5 * theta * width * width + eta


# -- time-series functionals ----------------------------------------------

def _time_integral(times: np.ndarray, vals: np.ndarray) -> float:
    if times.size < 2:
        return 0.0
    return float(np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(times)))


def _window(traj: Trajectory, window: tuple[float, float] | None) -> tuple[np.ndarray, list[Field]]:
    times = traj.times
    if window is None:
        return times, list(traj.snapshots)
    t0, t1 = window
    tol = 1e-12 * max(1.0, abs(t1))
    if t0 < times[0] - tol or t1 > times[-1] + tol or t0 >= t1:
        raise ValueError(f"window {window} not inside [{times[0]}, {times[-1]}]")
    keep = (times >= t0 - tol) & (times <= t1 + tol)
    return times[keep], [s for s, k in zip(traj.snapshots, keep) if k]


def lgamma_spacetime(traj: Trajectory, gamma: float, window: tuple[float, float] | None = None) -> float:
    """``int int |y|^gamma dx dt`` over the snapshots inside ``window``.

    Accuracy follows the snapshot density, so record every step (stride 1).
    """
    times, snaps = _window(traj, window)
    vals = np.array([integrate(np.abs(s.values) ** gamma, s.grid) for s in snaps])
    return _time_integral(times, vals)


def moment_balance(traj: Trajectory, gamma: float) -> float:
    """Defect of the integrated moment identity for variant E, zero boundary data::

        M(t) - M(0) + int_0^t int |y|^gamma - int_0^t y_x(0) = 0   (y <= 0).

    ``y_x(0)`` uses the one-sided difference, so the defect is O(h) plus the
    time quadrature error.
    """
    times = traj.times
    snaps = traj.snapshots
    h = traj.grid.h
    lg = np.array([integrate(np.abs(s.values) ** gamma, s.grid) for s in snaps])
    dx0 = np.array([(s.values[1] - s.values[0]) / h for s in snaps])
    m = moment_x_minus_1(snaps[-1]) - moment_x_minus_1(snaps[0])
    return m + _time_integral(times[1:], lg[1:]) - _time_integral(times[1:], dx0[1:])


def smoothing_bound_check(traj: Trajectory, gamma: float, *, slack: float = 0.05,
                          fit_window: tuple[float, float] | None = None) -> FunctionalReport:
    """Compare ``sup|y(t)|`` with ``||y(t0)||_1 / sqrt(4 pi (t - t0))`` along a zero-control run.

    The sharp constant is checked for ``gamma >= 2`` (strictly convex flux on
    each sign); the bound gets a relative slack ``slack`` and an ``h * sup|y(t0)|``
    allowance on the L1 norm for quadrature. For ``gamma < 2`` the verdict is
    not-applicable and the decay exponent ``p`` of ``sup|y| ~ t^-p`` is fitted
    over ``fit_window`` (relative to ``t0``, default the middle of the run).
    """
    t0 = traj.times[0]
    y0 = traj.initial
    times = traj.times[1:] - t0
    sup = np.array([s.sup_norm for s in traj.snapshots[1:]])
    l1 = l1_norm(y0) + y0.grid.h * y0.sup_norm
    bound = l1 / np.sqrt(4.0 * math.pi * times) * (1.0 + slack)
    notes: dict = {"l1_initial": l1_norm(y0)}

    if gamma >= 2.0:
        margin = float(np.min(bound - sup)) if sup.size else math.inf
        verdict = PASS if margin >= 0 else FAIL
    else:
        verdict = NOT_APPLICABLE
        margin = math.nan
        lo, hi = fit_window if fit_window is not None else (0.1 * times[-1], 0.5 * times[-1])
        keep = (times >= lo) & (times <= hi) & (sup > 0)
        if np.count_nonzero(keep) >= 2:
            slope = np.polyfit(np.log(times[keep]), np.log(sup[keep]), 1)[0]
            notes["decay_exponent"] = float(-slope)
    return FunctionalReport("smoothing", times + t0, sup, verdict, bound, margin, notes)


def time_to_fraction(traj: Trajectory, fraction: float = 0.5) -> float:
    """First time (relative to the start) with ``sup|y| <= fraction * sup|y(t0)|``, linearly interpolated."""
    times = traj.times - traj.times[0]
    sup = np.array([s.sup_norm for s in traj.snapshots])
    level = fraction * sup[0]
    below = np.nonzero(sup <= level)[0]
    if below.size == 0:
        return math.inf
    i = int(below[0])
    if i == 0:
        return 0.0
    s0, s1 = sup[i - 1], sup[i]
    return float(times[i - 1] + (s0 - level) / (s0 - s1) * (times[i] - times[i - 1]))


# -- comparison principle -------------------------------------------------

def _one_sided(knots: np.ndarray, t: float) -> tuple[float, float]:
    """Left and right limits of a piecewise-linear signal at ``t``."""
    if knots.size == 0:
        return 0.0, 0.0
    times = knots[:, 0]
    i = int(np.searchsorted(times, t, side="left"))
    j = int(np.searchsorted(times, t, side="right"))
    if i < j:
        return float(knots[i, 1]), float(knots[j - 1, 1])
    v = _interp_left(knots, t)
    return v, v


def _signal_ordered(lo: np.ndarray, hi: np.ndarray, tol: float) -> bool:
    """Is ``lo <= hi`` for all times? Both are linear between the union of knot times."""
    parts = [k[:, 0] for k in (lo, hi) if k.size]
    if not parts:
        return True
    for t in np.unique(np.concatenate(parts)):
        (a1, a2), (b1, b2) = _one_sided(lo, t), _one_sided(hi, t)
        if a1 > b1 + tol or a2 > b2 + tol:
            return False
    return True


def inputs_ordered(lo: ControlSchedule, hi: ControlSchedule, y0_lo: Field, y0_hi: Field,
                   tol: float = 0.0) -> bool:
    if np.any(y0_lo.values > y0_hi.values + tol):
        return False
    return all(_signal_ordered(getattr(lo, k), getattr(hi, k), tol)
               for k in ("u_knots", "v_knots", "w_knots"))


def comparison_check(run_lo: Trajectory, run_hi: Trajectory, tol: float = 1e-10) -> FunctionalReport:
    """Check ``y <= y~`` at every shared snapshot for runs with ordered inputs.

    Raises :class:`PreconditionNotOrdered` when initial data or any control
    of ``run_lo`` exceeds that of ``run_hi`` somewhere.
    """
    if not inputs_ordered(run_lo.schedule, run_hi.schedule, run_lo.initial, run_hi.initial):
        raise PreconditionNotOrdered("inputs of the two runs are not ordered")
    t_lo, t_hi = run_lo.times, run_hi.times
    if t_lo.shape != t_hi.shape or not np.allclose(t_lo, t_hi, rtol=0, atol=1e-12):
        raise ValueError("runs must share their snapshot times (use the same fixed_dt)")
    excess = np.max(run_lo.values - run_hi.values, axis=1)
    margin = float(tol - np.max(excess))
    return FunctionalReport("comparison", t_lo, excess, PASS if margin >= 0 else FAIL,
                            np.full_like(excess, tol), margin)


# -- energy identity on linear runs ---------------------------------------

def energy_identity_check(traj: Trajectory, forcing: Callable[[float, np.ndarray], np.ndarray] | None = None,
                          rel_tol: float = 0.01) -> FunctionalReport:
    """``|y(t)|^2 + 2 int |y_x|^2 = |y0|^2 + 2 int <f, y>`` for heat runs with zero boundary data."""
    times = traj.times
    snaps = traj.snapshots
    grid = traj.grid
    h = grid.h
    l2 = np.array([integrate(s.values ** 2, grid) for s in snaps])
    grad = np.array([float(np.sum(np.diff(s.values) ** 2) / h) for s in snaps])
    if forcing is None:
        work = np.zeros_like(times)
    else:
        work = np.array([integrate(forcing(t, grid.x) * s.values, grid) for t, s in zip(times, snaps)])
    dissip = np.concatenate([[0.0], np.cumsum(0.5 * (grad[1:] + grad[:-1]) * np.diff(times))])
    supply = np.concatenate([[0.0], np.cumsum(0.5 * (work[1:] + work[:-1]) * np.diff(times))])
    lhs = l2 + 2.0 * dissip
    rhs = l2[0] + 2.0 * supply
    rel = np.abs(lhs - rhs) / np.maximum(np.abs(rhs), 1e-300)
    margin = float(rel_tol - np.max(rel))
    return FunctionalReport("energy_identity", times, rel, PASS if margin >= 0 else FAIL,
                            np.full_like(rel, rel_tol), margin)


# -- convergence -----------------------------------------------------------

@dataclass(frozen=True)
class ConvergenceResult:
    order: float
    n_cells: tuple[int, ...]
    errors: tuple[float, ...]


class HeatProblem:
    """Advection off, ``y0 = sin(pi x)``; exact solution ``exp(-pi^2 t) sin(pi x)``.

    Crank-Nicolson with ``dt = h / 2`` so that both error sources scale like ``h^2``.
    """

    def __init__(self, t_final: float = 0.1) -> None:
        self.t_final = t_final

    def error(self, n_cells: int) -> float:
        grid = Grid(n_cells)
        params = ModelParams(2.0, horizon_T=self.t_final)
        cfg = SolverConfig(theta_method=0.5, advection=False)
        y0 = Field(np.sin(math.pi * grid.x), grid)
        traj = solve(y0, ControlSchedule(), params, grid, cfg, 0.0, self.t_final,
                     stride=10**9, fixed_dt=0.5 * grid.h)
        exact = math.exp(-math.pi ** 2 * self.t_final) * np.sin(math.pi * grid.x)
        return float(np.max(np.abs(traj.final.values - exact)))


class AdvectiveProblem:
    """Manufactured ``y = 2 + sin(pi x) cos(t)`` with the forcing that makes it exact.

    Backward Euler for diffusion and ``dt = h / (2 max speed)``, so the first
    order upwind flux sets the rate.
    """

    def __init__(self, gamma: float = 2.5, variant: str = "E", t_final: float = 0.2) -> None:
        self.params = ModelParams(gamma, variant, horizon_T=t_final)
        self.t_final = t_final

    def exact(self, t: float, x: np.ndarray) -> np.ndarray:
        return 2.0 + np.sin(math.pi * x) * math.cos(t)

    def forcing(self, t: float, x: np.ndarray) -> np.ndarray:
        g = self.params.gamma
        y = self.exact(t, x)
        yt = -np.sin(math.pi * x) * math.sin(t)
        yx = math.pi * np.cos(math.pi * x) * math.cos(t)
        yxx = -math.pi ** 2 * np.sin(math.pi * x) * math.cos(t)
        # y > 0 so both flux variants have derivative gamma y^(gamma-1)
        return yt + g * y ** (g - 1.0) * yx - yxx

    def error(self, n_cells: int) -> float:
        grid = Grid(n_cells)
        g = self.params.gamma
        speed = g * 3.0 ** (g - 1.0)
        cfg = SolverConfig(theta_method=1.0)
        y0 = Field(self.exact(0.0, grid.x), grid)
        s = ControlSchedule.constant(0.0, self.t_final, 0.0, 2.0, 2.0)
        traj = solve(y0, s, self.params, grid, cfg, 0.0, self.t_final, stride=10**9,
                     forcing=self.forcing, fixed_dt=0.5 * grid.h / speed)
        return float(np.max(np.abs(traj.final.values - self.exact(self.t_final, grid.x))))


def convergence_order(problem, refinements: Sequence[int]) -> ConvergenceResult:
    """Least-squares slope of ``log error`` against ``log h``; ``nan`` if the grids coincide."""
    if len(refinements) < 3:
        raise ValueError("need at least three refinement levels")
    ns = tuple(int(n) for n in refinements)
    errs = tuple(problem.error(n) for n in ns)
    hs = 1.0 / np.array(ns, dtype=np.float64)
    if np.ptp(hs) == 0:
        return ConvergenceResult(math.nan, ns, errs)
    order = float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
    return ConvergenceResult(order, ns, errs)

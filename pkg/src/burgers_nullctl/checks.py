"""Property-check suites run by ``burgers-nullctl checks``.

Each suite returns a :class:`SuiteResult` with a verdict, the worst margin
against its tolerance and a one-line detail. Suites are independent and
deterministic for a given seed.
"""

from __future__ import annotations

import math
import time
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from . import diagnostics as dg
from . import local_control
from .control_pipeline import stage3_entry
from .diagnostics import FAIL, NOT_APPLICABLE, PASS
from .errors import BurgersError
from .model import ControlSchedule, Field, Grid, ModelParams
from .solver import SolverConfig, solve
from .steady_state import half_height_width, linear_profile, solve_steady, tanh_profile

CONVERGENCE_MIN_CELLS = 32


@dataclass
class SuiteResult:
    name: str
    verdict: str
    margin: float
    detail: str
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return self.verdict != FAIL

    def row(self) -> str:
        return f"{self.name:<12} {self.verdict:<15} margin={self.margin:<11.4g} {self.seconds:7.2f}s  {self.detail}"


def _verdict(ok: bool) -> str:
    return PASS if ok else FAIL


# -- steady states ---------------------------------------------------------

def oracle_suite(n_cells: int = 4096) -> SuiteResult:
    """Shooting profile against the closed forms: tanh for gamma = 2, exponential for gamma = 1."""
    grid = Grid(n_cells)
    worst = math.inf
    parts = []
    for gamma, thetas, tol, exact in ((2.0, (2.0, 5.0), 1e-6, tanh_profile), (1.0, (1.0, 2.0, 5.0), 1e-8, linear_profile)):
        for th in thetas:
            p = solve_steady(th, gamma, grid)
            err = float(np.max(np.abs(p.samples.values - exact(th, grid.x))))
            worst = min(worst, tol - err)
            parts.append(f"g={gamma:g},th={th:g}:{err:.1e}")
    return SuiteResult("oracle", _verdict(worst >= 0), worst, " ".join(parts))


BRACKET_GAMMAS = (1.5, 2.0, 2.5, 3.0, 5.0)
BRACKET_THETAS = (1.0, 2.0, 5.0, 10.0, 20.0)


def bracket_suite(n_cells: int = 256) -> SuiteResult:
    """``-theta^g - theta < C < -theta^g`` and ``C`` strictly decreasing in theta.

    With ``C = -theta^g - delta`` the margin is ``log(theta) - log(delta)``;
    the upper side holds iff ``log(delta)`` is finite, since delta may underflow
    against ``theta^g`` in ``C`` itself.
    """
    grid = Grid(n_cells)
    worst = math.inf
    monotone = True
    finite = True
    for g in BRACKET_GAMMAS:
        slopes = []
        for th in BRACKET_THETAS:
            p = solve_steady(th, g, grid)
            finite &= math.isfinite(p.log_slope_excess)
            worst = min(worst, math.log(th) - p.log_slope_excess)
            slopes.append(p.slope_right)
        monotone &= bool(np.all(np.diff(slopes) < 0))
    ok = worst > 0 and monotone and finite
    return SuiteResult("bracket", _verdict(ok), worst, f"{len(BRACKET_GAMMAS) * len(BRACKET_THETAS)} pairs, monotone={monotone}")


def layer_slope(gamma: float, thetas=(5.0, 10.0, 20.0, 40.0), n_cells: int = 1024) -> float:
    grid = Grid(n_cells)
    widths = [half_height_width(solve_steady(th, gamma, grid)) for th in thetas]
    return float(np.polyfit(np.log(thetas), np.log(widths), 1)[0])


def layer_suite() -> SuiteResult:
    worst = math.inf
    parts = []
    for g in (2.0, 2.5, 3.0):
        s = layer_slope(g)
        worst = min(worst, 0.25 - abs(s + (g - 1.0)))
        parts.append(f"g={g:g}:{s:.3f}")
    return SuiteResult("layer", _verdict(worst >= 0), worst, " ".join(parts))


# -- comparison principle ---------------------------------------------------

def _random_knots(rng: np.random.Generator, T: float, scale: float) -> np.ndarray:
    t = np.linspace(0.0, T, int(rng.integers(2, 6)))
    return np.column_stack([t, rng.uniform(-scale, scale, t.size)])


def _raise(knots: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    out = knots.copy()
    out[:, 1] += rng.uniform(0.0, 1.0, len(out)) * (rng.random(len(out)) < 0.7)
    return out


def random_ordered_pair(rng: np.random.Generator, grid: Grid, T: float):
    """Random (params, low inputs, high inputs) with every input of the low run below the high one.

    An amplitude scale of 1, 2 or 3 per pair puts some runs in the
    transport-dominated regime (cell Peclet number near one), where a
    non-monotone flux would show up.
    """
    gamma = float(rng.choice([1.75, 2.0, 2.5, 3.0]))
    params = ModelParams(gamma, str(rng.choice(["E", "F"])), horizon_T=T)
    a = float(rng.choice([1.0, 2.0, 3.0]))
    x = grid.x
    k = np.arange(1, 5)
    y_lo = rng.uniform(-1, 1) + rng.uniform(-1, 1) * x + np.sin(np.pi * np.outer(x, k)) @ rng.uniform(-1, 1, 4)
    if rng.random() < 0.5:
        bump = np.maximum(0.0, np.sin(np.pi * (rng.uniform(1, 4) * x + rng.uniform())))
    else:  # a few isolated spikes: the most sensitive probe of monotonicity
        bump = np.zeros_like(x)
        bump[rng.integers(1, grid.n_cells, int(rng.integers(1, 4)))] = 1.0
    y_lo *= a
    y_hi = y_lo + a * rng.uniform(0, 1) * bump
    lo = ControlSchedule(_random_knots(rng, T, 2.0 * a), _random_knots(rng, T, a), _random_knots(rng, T, a))
    hi = ControlSchedule(_raise(lo.u_knots, rng), _raise(lo.v_knots, rng), _raise(lo.w_knots, rng))
    return params, Field(y_lo, grid), lo, Field(y_hi, grid), hi


def a_priori_bound(y0s, schedules, T: float) -> float:
    """Maximum-principle bound ``max(|y0|, |v|, |w|) + T max|u|`` over several runs."""
    m = max(float(np.max(np.abs(y.values))) for y in y0s)
    m = max([m] + [float(np.max(np.abs(s.v_knots[:, 1]))) for s in schedules if s.v_knots.size]
            + [float(np.max(np.abs(s.w_knots[:, 1]))) for s in schedules if s.w_knots.size])
    u = max([0.0] + [float(np.max(np.abs(s.u_knots[:, 1]))) for s in schedules if s.u_knots.size])
    return m + T * u


def shared_step(y_lo, lo, y_hi, hi, params, grid, cfg, T: float) -> float:
    """A fixed step close to the monotone limit of both runs: 0.9 times their smallest adaptive step.

    Stepping near the limit matters: well below it the implicit diffusion
    hides a non-monotone flux. Falls back to the a priori bound if an
    adaptive run fails.
    """
    try:
        steps = [solve(y, s, params, grid, cfg, 0.0, T, stride=10**9).step_sizes for y, s in ((y_lo, lo), (y_hi, hi))]
        # the last step of an adaptive run is clipped to land on T
        return 0.9 * min(float(np.min(st[:-1])) if st.size > 1 else float(st[0]) for st in steps)
    except BurgersError:
        M = a_priori_bound([y_lo, y_hi], [lo, hi], T)
        return min(cfg.dt_max, cfg.cfl_safety * grid.h / (params.gamma * M ** (params.gamma - 1.0)))


def comparison_suite(n_pairs: int = 100, n_cells: int = 128, T: float = 0.5, seed: int = 0,
                     tol: float = 1e-10) -> SuiteResult:
    """Random ordered input pairs on a shared fixed time grid; counts order violations above ``tol``."""
    rng = np.random.default_rng(seed)
    grid = Grid(n_cells)
    cfg = SolverConfig()
    violations = 0
    worst = math.inf
    for _ in range(n_pairs):
        params, y_lo, lo, y_hi, hi = random_ordered_pair(rng, grid, T)
        try:
            dt = shared_step(y_lo, lo, y_hi, hi, params, grid, cfg, T)
            r_lo = solve(y_lo, lo, params, grid, cfg, 0.0, T, fixed_dt=dt)
            r_hi = solve(y_hi, hi, params, grid, cfg, 0.0, T, fixed_dt=dt)
            rep = dg.comparison_check(r_lo, r_hi, tol)
            margin = rep.margin
        except (ArithmeticError, BurgersError):  # a broken scheme may blow up
            margin = -math.inf
        worst = min(worst, margin)
        violations += not margin >= 0
    return SuiteResult("comparison", _verdict(violations == 0), worst,
                       f"{violations}/{n_pairs} pairs violate order by more than {tol:g}")


# -- adjoint gradient ---------------------------------------------------------

def gradient_errors(gamma: float, n_cells: int = 64, n_dirs: int = 10, seed: int = 0,
                    backend: str | None = None) -> list[float]:
    """Relative gap between adjoint and central-difference directional derivatives."""
    rng = np.random.default_rng(seed)
    grid = Grid(n_cells)
    params = ModelParams(gamma, horizon_T=1.0)
    y_in = Field(0.2 * np.sin(np.pi * grid.x) + 0.1 * np.sin(3 * np.pi * grid.x), grid)
    st = local_control.TerminalStage(y_in, params, 0.0, 0.05, dt=1e-3, backend=backend)
    v = local_control.ControlVector(0.1 * rng.standard_normal(st.n_steps + 1), 1e-3)
    g = st.gradient(v)
    errs = []
    for _ in range(n_dirs):
        d = rng.standard_normal(v.values.size)
        d /= np.linalg.norm(d)
        eps = 1e-5
        jp = st.objective(local_control.ControlVector(v.values + eps * d, v.alpha))
        jm = st.objective(local_control.ControlVector(v.values - eps * d, v.alpha))
        fd = (jp - jm) / (2 * eps)
        ad = float(g @ d)
        errs.append(abs(fd - ad) / max(abs(ad), abs(fd), 1e-300))
    return errs


def gradient_suite(n_cells: int = 64, seed: int = 0, tol: float = 1e-5) -> SuiteResult:
    worst = 0.0
    for g in (1.75, 2.5):
        worst = max(worst, max(gradient_errors(g, n_cells, seed=seed)))
    return SuiteResult("gradient", _verdict(worst <= tol), tol - worst, f"max relative error {worst:.2e}")


# -- convergence ----------------------------------------------------------------

def convergence_suite(base_cells: int = CONVERGENCE_MIN_CELLS) -> SuiteResult:
    """Heat order in ``2 +- 0.2`` and advective order ``>= 0.9`` on four levels from ``base_cells``."""
    if base_cells < CONVERGENCE_MIN_CELLS:
        return SuiteResult("convergence", NOT_APPLICABLE, math.nan,
                           f"coarsest grid {base_cells} < {CONVERGENCE_MIN_CELLS} cells: pre-asymptotic")
    levels = [base_cells * 2 ** k for k in range(4)]
    heat = dg.convergence_order(dg.HeatProblem(), levels).order
    adv = dg.convergence_order(dg.AdvectiveProblem(), levels).order
    margin = min(0.2 - abs(heat - 2.0), adv - 0.9)
    return SuiteResult("convergence", _verdict(margin >= 0), margin, f"heat {heat:.3f}, advective {adv:.3f}, cells {levels}")


# -- bounds ------------------------------------------------------------------------

DISSIPATION_GAMMAS = (1.75, 2.0, 2.5, 3.0)


def dissipation_run(gamma: float, theta: float = 32.0, eta: float = 0.05, n_cells: int = 1024,
                    t_final: float = 0.25, stride: int = 1, cfg: SolverConfig | None = None):
    params = ModelParams(gamma, horizon_T=t_final)
    grid = Grid(n_cells)
    y0, info = stage3_entry(theta, eta, params, grid)
    traj = solve(y0, ControlSchedule(), params, grid, cfg or SolverConfig(), 0.0, t_final, stride=stride)
    return traj, info


def moment_gap(theta: float, gamma: float, eta: float = 0.05, n_cells: int = 1024) -> tuple[float, float]:
    """``(|measured - closed form|, h (theta + 2 eta))`` for the passive-stage entry data."""
    grid = Grid(n_cells)
    y0, info = stage3_entry(theta, eta, ModelParams(gamma), grid)
    gap = abs(dg.moment_x_minus_1(y0) - info["moment_closed_form"])
    return gap, grid.h * (theta + 2 * eta)


def bounds_suite(n_cells: int = 1024) -> SuiteResult:
    """Carlen-Loss envelope (gamma = 2), heat energy identity, entry-moment identity and dissipation ordering."""
    parts = []
    margins = []
    times_to_half = []
    for g in DISSIPATION_GAMMAS:
        traj, _ = dissipation_run(g, n_cells=n_cells)
        times_to_half.append(dg.time_to_fraction(traj, 0.5))
        if g == 2.0:
            rep = dg.smoothing_bound_check(traj, g)
            margins.append(rep.margin)
            parts.append(f"CL margin {rep.margin:.3g}")
    order_margin = float(np.min(-np.diff(times_to_half)))
    margins.append(order_margin)
    parts.append("t_half " + ",".join(f"{t:.3g}" for t in times_to_half))

    grid = Grid(128)
    heat = solve(Field(np.sin(np.pi * grid.x), grid), ControlSchedule(), ModelParams(2.0, horizon_T=0.1), grid,
                 SolverConfig(theta_method=0.5, advection=False), 0.0, 0.1, fixed_dt=1e-3)
    en = dg.energy_identity_check(heat)
    margins.append(en.margin)
    parts.append(f"energy margin {en.margin:.3g}")

    for th in (16.0, 32.0):
        gap, slack = moment_gap(th, 2.5, n_cells=n_cells)
        margins.append(slack - gap)
    parts.append("moment ok" if min(margins[-2:]) >= 0 else "moment off")
    worst = min(margins)
    return SuiteResult("bounds", _verdict(worst >= 0), worst, "; ".join(parts))


SUITES: dict[str, Callable[..., SuiteResult]] = {
    "oracle": oracle_suite,
    "bracket": bracket_suite,
    "layer": layer_suite,
    "comparison": comparison_suite,
    "gradient": gradient_suite,
    "convergence": convergence_suite,
    "bounds": bounds_suite,
}


def run_suite(name: str, kwargs: dict) -> SuiteResult:
    t0 = time.perf_counter()
    res = SUITES[name](**kwargs)
    res.seconds = time.perf_counter() - t0
    return res

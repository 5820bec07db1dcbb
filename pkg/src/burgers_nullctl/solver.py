"""IMEX time stepping for the controlled equation.

Each step applies an explicit Engquist-Osher flux difference, then a
theta-method implicit solve for the diffusion with the Dirichlet data at the
new time. The space-uniform source ``u`` (and an optional manufactured forcing)
enters the right-hand side of the implicit solve, so spatially uniform
solutions with matching boundary data are reproduced exactly.

With ``theta_method=1`` and ``dt <= h / max|flux'|`` the step is a monotone
map of (state, u, v, w), which is the discrete comparison principle.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Mapping
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import CflViolation, NonFinite, StepBudgetExceeded
from .model import ControlSchedule, Field, Grid, ModelParams, Trajectory

Forcing = Callable[[float, np.ndarray], np.ndarray]
Diagnostic = Callable[[Field], float]


@dataclass(frozen=True)
class SolverConfig:
    dt_max: float = 1e-3
    cfl_safety: float = 0.9
    theta_method: float = 1.0
    tolerance_newton: float = 1e-10  # reserved: the diffusion solve is linear
    max_steps: int = 10_000_000
    advection: bool = True
    backend: str | None = None

    def __post_init__(self) -> None:
        if not self.dt_max > 0:
            raise ValueError("dt_max must be positive")
        if not 0.0 < self.cfl_safety <= 1.0:
            raise ValueError("cfl_safety must lie in (0, 1]")
        if not 0.5 <= self.theta_method <= 1.0:
            raise ValueError("theta_method must lie in [1/2, 1]")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")


def max_speed(amax: float, params: ModelParams, cfg: SolverConfig) -> float:
    if not cfg.advection or amax == 0.0:
        return 0.0
    return params.gamma * amax ** (params.gamma - 1.0)


def stability_bound(y: np.ndarray | float, params: ModelParams, grid: Grid, cfg: SolverConfig) -> float:
    """Largest monotone step ``h / max|flux'(y)|`` (``inf`` when the state is zero)."""
    amax = float(np.max(np.abs(y)))
    speed = max_speed(amax, params, cfg)
    return math.inf if speed == 0.0 else grid.h / speed


def _variant(params: ModelParams, cfg: SolverConfig) -> int:
    return params.variant_code if cfg.advection else 2


def _advance(kern, y, out, t, dt, s, params, grid, cfg, forcing) -> float:
    th = cfg.theta_method
    t_src = t + th * dt
    t_new = t + dt
    f = None
    if forcing is not None:
        f = np.ascontiguousarray(forcing(t_src, grid.x), dtype=np.float64)
    amax = kern.imex_step(y, out, dt, grid.h, params.gamma, _variant(params, cfg), th,
                          s.u(t_src), f, s.v(t_new), s.w(t_new))
    if not math.isfinite(amax):
        raise NonFinite(f"non-finite state after step to t={t_new:.6g}")
    return amax


def step(y: Field, s: ControlSchedule, params: ModelParams, grid: Grid, cfg: SolverConfig,
         dt: float, forcing: Forcing | None = None) -> Field:
    bound = stability_bound(y.values, params, grid, cfg)
    if dt > bound * (1 + 1e-12):
        raise CflViolation(dt, bound)
    kern = kernels.get(cfg.backend)
    out = np.empty(grid.n_nodes)
    _advance(kern, np.ascontiguousarray(y.values), out, y.time, dt, s, params, grid, cfg, forcing)
    return Field(out, grid, y.time + dt)


def solve(y0: Field, s: ControlSchedule, params: ModelParams, grid: Grid, cfg: SolverConfig,
          t_begin: float, t_end: float, *, stride: int = 1,
          diagnostics: Mapping[str, Diagnostic] | None = None,
          forcing: Forcing | None = None, fixed_dt: float | None = None) -> Trajectory:
    """Integrate from ``t_begin`` to ``t_end``.

    By default the step size is adaptive (``cfl_safety`` times the monotone
    bound, capped by ``dt_max``) and steps land exactly on control knots and
    stage marks. With ``fixed_dt`` every step has that size except a clipped
    final one, and no alignment is done; this gives runs with different
    controls an identical time grid. The initial state's own time is ignored.
    """
    if not t_begin < t_end:
        raise ValueError("t_begin must be smaller than t_end")
    if t_end > params.horizon_T * (1 + 1e-12):
        raise ValueError(f"t_end={t_end} exceeds the horizon {params.horizon_T}")
    if y0.grid != grid:
        raise ValueError("initial field lives on a different grid")
    if stride < 1:
        raise ValueError("stride must be >= 1")

    kern = kernels.get(cfg.backend)
    y = np.array(y0.values, dtype=np.float64)
    out = np.empty_like(y)
    diagnostics = dict(diagnostics or {})
    t = float(t_begin)
    first = Field(y, grid, t)
    snaps = [first]
    dtimes = [t]
    dvals = {k: [float(fn(first))] for k, fn in diagnostics.items()}
    dts: list[float] = []

    if fixed_dt is None:
        bps = s.breakpoints()
        bps = list(bps[(bps > t_begin) & (bps < t_end)]) + [t_end]
    else:
        bps = [t_end]
    bp_idx = 0
    amax = float(np.max(np.abs(y)))
    n = 0
    while t < t_end:
        if n >= cfg.max_steps:
            raise StepBudgetExceeded(f"more than {cfg.max_steps} steps needed to reach t={t_end}")
        speed = max_speed(amax, params, cfg)
        limit = math.inf if speed == 0.0 else grid.h / speed
        if fixed_dt is not None:
            dt = fixed_dt
            if dt > limit * (1 + 1e-12):
                raise CflViolation(dt, limit)
        else:
            dt = min(cfg.dt_max, cfg.cfl_safety * limit)
        while bps[bp_idx] <= t:
            bp_idx += 1
        target = bps[bp_idx]
        if t + dt >= target - 1e-3 * dt:
            dt = target - t
            t_next = target
        else:
            t_next = t + dt
        amax = _advance(kern, y, out, t, dt, s, params, grid, cfg, forcing)
        y, out = out, y
        t = t_next
        n += 1
        dts.append(dt)
        last = t >= t_end
        if diagnostics or n % stride == 0 or last:
            f = Field(y, grid, t)
            if n % stride == 0 or last:
                snaps.append(f)
            if diagnostics:
                dtimes.append(t)
                for k, fn in diagnostics.items():
                    dvals[k].append(float(fn(f)))

    return Trajectory(
        snaps,
        s,
        np.array(dtimes) if diagnostics else np.array([snaps[0].time]),
        {k: np.array(v) for k, v in dvals.items()},
        steps=n,
        step_sizes=np.array(dts),
    )

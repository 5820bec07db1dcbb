from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from burgers_nullctl import _pykernels, kernels
from burgers_nullctl.control_pipeline import stage3_entry
from burgers_nullctl.errors import CflViolation, NonFinite, StepBudgetExceeded
from burgers_nullctl.model import ControlSchedule, Field, Grid, ModelParams
from burgers_nullctl.solver import SolverConfig, solve, stability_bound, step
from burgers_nullctl.steady_state import solve_steady


@pytest.mark.skipif(len(kernels.available()) < 2, reason="compiled backend not built")
@settings(max_examples=40, deadline=None)
@given(st.integers(8, 80), st.sampled_from([1.5, 2.0, 2.5, 3.3]), st.sampled_from([0, 1, 2]),
       st.floats(0.5, 1.0), st.integers(0, 2**31))
def test_backends_agree(n, g, variant, theta, seed):
    rng = np.random.default_rng(seed)
    y = rng.uniform(-2, 2, n + 1)
    h = 1.0 / n
    dt = 0.5 * h / (g * 2.0 ** (g - 1))
    outs = []
    adj = []
    forcing = rng.standard_normal(n + 1)
    lam = rng.standard_normal(n + 1)
    for name in ("python", "cython"):
        k = kernels.get(name)
        out = np.empty(n + 1)
        amax = k.imex_step(y, out, dt, h, g, variant, theta, 0.3, forcing, 0.7, -0.2)
        assert amax == pytest.approx(np.max(np.abs(out)), rel=1e-15)
        outs.append(out)
        lo = np.empty(n + 1)
        gv = k.imex_adjoint(y, lam, lo, dt, h, g, variant, theta, 1e-8)
        adj.append((gv, lo))
    assert np.allclose(outs[0], outs[1], rtol=1e-12, atol=1e-13)
    assert adj[0][0] == pytest.approx(adj[1][0], rel=1e-12, abs=1e-13)
    assert np.allclose(adj[0][1], adj[1][1], rtol=1e-12, atol=1e-13)


def test_backend_env_override(monkeypatch):
    monkeypatch.setenv("BURGERS_NULLCTL_BACKEND", "python")
    assert kernels.get() is _pykernels
    with pytest.raises(ValueError):
        kernels.get("fortran")


def test_zero_is_fixed_point(backend):
    g = Grid(32)
    y = Field.zeros(g)
    cfg = SolverConfig(backend=backend)
    out = step(y, ControlSchedule(), ModelParams(2.0), g, cfg, 1e-3)
    assert np.all(out.values == 0.0) and out.time == pytest.approx(1e-3)


def test_steady_state_is_nearly_fixed(backend):
    theta, gam, n = 2.0, 2.0, 128
    grid = Grid(n)
    p = solve_steady(theta, gam, grid)
    params = ModelParams(gam)
    cfg = SolverConfig(backend=backend)
    s = ControlSchedule.constant(0.0, 1.0, v=theta)
    dt = cfg.cfl_safety * stability_bound(p.samples.values, params, grid, cfg)
    out = step(p.samples, s, params, grid, cfg, dt)
    assert np.max(np.abs(out.values - p.samples.values)) <= 10 * grid.h ** 2


def test_one_heat_step(backend):
    grid = Grid(64)
    cfg = SolverConfig(advection=False, backend=backend)
    y0 = Field(np.sin(math.pi * grid.x), grid)
    dt = 1e-3
    out = step(y0, ControlSchedule(), ModelParams(2.0), grid, cfg, dt)
    exact = math.exp(-math.pi ** 2 * dt) * np.sin(math.pi * grid.x)
    # backward Euler local error pi^4 dt^2 / 2, spatial error pi^4 h^2 dt / 12
    assert np.max(np.abs(out.values - exact)) <= math.pi ** 4 * (dt ** 2 + grid.h ** 2 * dt)
    assert np.all(np.abs(out.values) <= np.abs(y0.values) + 1e-15)


def test_cfl_violation_and_nonfinite():
    grid = Grid(16)
    y = Field(np.full(17, 2.0), grid)
    params = ModelParams(2.0)
    with pytest.raises(CflViolation):
        step(y, ControlSchedule(), params, grid, SolverConfig(), 1.0)
    with pytest.raises(NonFinite):
        step(y, ControlSchedule(), params, grid, SolverConfig(), 1e-3,
             forcing=lambda t, x: np.full_like(x, np.inf))


def test_step_budget():
    grid = Grid(16)
    cfg = SolverConfig(max_steps=5)
    with pytest.raises(StepBudgetExceeded):
        solve(Field.zeros(grid), ControlSchedule(), ModelParams(2.0), grid, cfg, 0.0, 1.0)


def test_bad_time_window():
    grid = Grid(16)
    with pytest.raises(ValueError):
        solve(Field.zeros(grid), ControlSchedule(), ModelParams(2.0, horizon_T=0.5), grid, SolverConfig(), 0.0, 1.0)
    with pytest.raises(ValueError):
        solve(Field.zeros(grid), ControlSchedule(), ModelParams(2.0), grid, SolverConfig(), 0.5, 0.5)


@pytest.mark.parametrize("variant", ["E", "F"])
@pytest.mark.parametrize("c", [-1.5, 0.0, 2.0])
def test_constants_are_exact(variant, c, backend):
    grid = Grid(32)
    s = ControlSchedule.constant(0.0, 0.2, v=c, w=c)
    tr = solve(Field(np.full(33, c), grid), s, ModelParams(2.5, variant), grid,
               SolverConfig(backend=backend), 0.0, 0.2)
    assert np.max(np.abs(tr.values - c)) <= 1e-13 * max(1.0, abs(c))


def test_dt_respects_cfl_and_dt_max(backend):
    grid = Grid(64)
    params = ModelParams(2.5)
    cfg = SolverConfig(dt_max=5e-4, backend=backend)
    y0 = Field(4.0 * np.sin(math.pi * grid.x), grid)
    tr = solve(y0, ControlSchedule(), params, grid, cfg, 0.0, 0.05)
    assert np.all(tr.step_sizes <= cfg.dt_max * (1 + 1e-12))
    # every step obeys the bound computed from the state it started from
    for snap, dt in zip(tr.snapshots[:-1], tr.step_sizes):
        assert dt <= cfg.cfl_safety * stability_bound(snap.values, params, grid, cfg) * (1 + 1e-12)
    assert tr.times[0] == 0.0 and tr.times[-1] == pytest.approx(0.05, abs=1e-15)


def test_diagnostics_and_stride():
    grid = Grid(32)
    y0 = Field(np.sin(math.pi * grid.x), grid)
    tr = solve(y0, ControlSchedule(), ModelParams(2.0), grid, SolverConfig(), 0.0, 0.1, stride=10,
               diagnostics={"sup": lambda f: f.sup_norm})
    assert tr.diagnostics["sup"].size == tr.steps + 1
    assert len(tr.snapshots) == tr.steps // 10 + 1 + (tr.steps % 10 != 0)


def test_steps_land_on_knots():
    grid = Grid(32)
    s = ControlSchedule([(0, 0.0), (0.0123, 1.0), (0.0123, 0.0)])
    tr = solve(Field.zeros(grid), s, ModelParams(2.0), grid, SolverConfig(dt_max=1e-3), 0.0, 0.05, stride=1)
    assert np.any(np.isclose(tr.times, 0.0123, rtol=0, atol=1e-15))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([1.75, 2.0, 3.0]), st.sampled_from(["E", "F"]))
def test_maximum_principle(seed, g, variant):
    grid = Grid(64)
    rng = np.random.default_rng(seed)
    vals = rng.uniform(-3, 3, grid.n_nodes)
    vals[0] = vals[-1] = 0.0
    tr = solve(Field(vals, grid), ControlSchedule(), ModelParams(g, variant, horizon_T=0.05), grid,
               SolverConfig(), 0.0, 0.05, stride=5)
    assert tr.values.min() >= vals.min() - 1e-10
    assert tr.values.max() <= vals.max() + 1e-10


def test_temporal_order_backward_euler():
    grid = Grid(256)
    cfg = SolverConfig(advection=False, theta_method=1.0)
    y0 = Field(np.sin(math.pi * grid.x), grid)
    dts = [0.01, 0.005, 0.0025, 0.00125]
    errs = []
    for dt in dts:
        tr = solve(y0, ControlSchedule(), ModelParams(2.0), grid, cfg, 0.0, 0.1, stride=10**9, fixed_dt=dt)
        exact = math.exp(-math.pi ** 2 * 0.1) * np.sin(math.pi * grid.x)
        errs.append(np.max(np.abs(tr.final.values - exact)))
    order = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert order >= 0.9


def test_residue_decay_is_monotone_after_start(backend):
    params = ModelParams(2.5, horizon_T=0.05)
    grid = Grid(512)
    y0, _ = stage3_entry(32.0, 0.05, params, grid)
    tr = solve(y0, ControlSchedule(), params, grid, SolverConfig(backend=backend), 0.0, 0.05)
    sup = np.array([f.sup_norm for f in tr.snapshots])
    keep = tr.times >= 0.01 * 0.05
    assert np.all(np.diff(sup[keep]) <= 1e-12)


def test_fixed_dt_grid_is_shared():
    grid = Grid(32)
    y0 = Field(np.sin(math.pi * grid.x), grid)
    a = solve(y0, ControlSchedule(), ModelParams(2.0), grid, SolverConfig(), 0.0, 0.0105, fixed_dt=1e-3)
    b = solve(Field.zeros(grid), ControlSchedule.constant(0, 1, v=0.3), ModelParams(2.0), grid, SolverConfig(),
              0.0, 0.0105, fixed_dt=1e-3)
    assert np.array_equal(a.times, b.times)
    assert a.times[-1] == pytest.approx(0.0105)

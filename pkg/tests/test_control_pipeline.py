from __future__ import annotations

import math
import warnings

import numpy as np
import pytest

from burgers_nullctl import diagnostics as dg
from burgers_nullctl.checks import dissipation_run
from burgers_nullctl.control_pipeline import (
    StagePlan,
    StrategyTargets,
    build_stage1,
    build_stage2,
    hypothesis_status,
    lemma_ramp,
    plan_strategy,
    ramp_time,
    run_strategy,
    stage3_entry,
)
from burgers_nullctl.errors import BadTiming, HypothesisViolation, HypothesisWarning
from burgers_nullctl.model import ControlSchedule, Field, Grid, ModelParams
from burgers_nullctl.solver import SolverConfig, solve
from burgers_nullctl.steady_state import discrete_steady_state, solve_steady, tanh_parameter


def test_stage1_examples():
    s = build_stage1(4.0, 1.0, 0.1, 1.0)
    assert s.u(0.05) == pytest.approx(60.0)
    assert s.u(0.2) == 0.0
    assert s.v(0.1) == pytest.approx(5.0)
    assert s.v(0.5) == pytest.approx(4.0)
    assert s.v(1.0) == pytest.approx(4.0)
    assert s.v(0.3) == pytest.approx(4.0 + 1.0 * (0.5 - 0.3) / (0.5 - 0.1))
    assert s.w(0.7) == 0.0


def test_stage1_zero_initial_norm():
    s = build_stage1(1.0, 0.0, 0.1, 1.0)
    assert s.v(0.05) == pytest.approx(0.5)
    for t in (0.1, 0.3, 0.5, 0.9):
        assert s.v(t) == pytest.approx(1.0)


def test_stage1_bad_timing():
    with pytest.raises(BadTiming):
        build_stage1(4.0, 1.0, 0.5, 1.0)
    with pytest.raises(BadTiming):
        build_stage1(4.0, 1.0, 0.0, 1.0)


def test_stage2_examples():
    s = build_stage2(4.0, 0.1)
    assert s.u(0.0) == s.u(0.1) == pytest.approx(-40.0)
    assert s.v(0.05) == pytest.approx(2.0)
    assert s.v(0.1) == 0.0
    z = build_stage2(0.0, 0.1)
    assert z.u(0.05) == 0.0 and z.v(0.05) == 0.0
    with pytest.raises(BadTiming):
        build_stage2(1.0, 0.0)


@pytest.mark.parametrize("theta,tp2", [(4.0, 0.1), (37.5, 1.3e-3), (1.0, 0.25)])
def test_stage2_source_integral(theta, tp2):
    s = build_stage2(theta, tp2, 2 * tp2)
    k = s.u_knots
    area = float(np.sum(0.5 * (k[1:, 1] + k[:-1, 1]) * np.diff(k[:, 0])))
    assert area == pytest.approx(-theta, rel=1e-14)
    assert s.u(1.5 * tp2) == 0.0


def test_ramp_time_rule():
    assert ramp_time(0.25, 8.0, 2.5) == pytest.approx(0.1 / 8.0 ** 1.5)
    assert ramp_time(0.25, 1.0, 2.0) == pytest.approx(0.025)


def _plan(**kw):
    params = ModelParams(2.5)
    defaults = dict(theta=8.0, eta=0.05, t_prime=0.01, t_prime2=0.01, stage_times=(0.25, 0.5, 0.75, 1.0),
                    schedule=ControlSchedule(), params=params, targets=StrategyTargets())
    defaults.update(kw)
    return StagePlan(**defaults)


def test_stage_plan_validation():
    _plan()
    with pytest.raises(ValueError):
        _plan(stage_times=(0.25, 0.2, 0.75, 1.0))
    with pytest.raises(ValueError):
        _plan(stage_times=(0.25, 0.5, 0.75, 1.5))
    with pytest.raises(ValueError):
        _plan(t_prime=0.3)
    with pytest.raises(ValueError):
        StrategyTargets(eta=0.0)
    with pytest.raises(ValueError):
        StrategyTargets(stage_fractions=(0.5, 0.25, 0.75, 1.0))


def test_hypothesis_flags():
    grid = Grid(64)
    y0 = Field(np.sin(np.pi * grid.x), grid)
    assert hypothesis_status(ModelParams(2.5)) is None
    assert hypothesis_status(ModelParams(2.5, "F")) is None
    assert hypothesis_status(ModelParams(1.75, "F")) is not None
    with pytest.warns(HypothesisWarning):
        plan = plan_strategy(y0, ModelParams(1.5), grid, StrategyTargets(theta=8.0))
    assert "hypothesis" in plan.notes
    with pytest.raises(HypothesisViolation):
        plan_strategy(y0, ModelParams(1.2), grid, StrategyTargets(theta=8.0), strict=True)


def test_zero_initial_state_is_trivial():
    grid = Grid(64)
    params = ModelParams(2.5)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        plan = plan_strategy(Field.zeros(grid), params, grid)
    assert plan.theta == 8.0 and plan.notes["trivial"]
    res = run_strategy(plan, Field.zeros(grid), grid)
    assert res.passed and len(res.reports) == 4
    assert res.final_l2 == 0.0


def test_plan_schedule_matches_formulas():
    grid = Grid(256)
    params = ModelParams(2.5)
    y0 = Field(5 * np.sin(3 * np.pi * grid.x), grid)
    plan = plan_strategy(y0, params, grid, StrategyTargets(theta=8.0))
    s = plan.schedule
    t1 = plan.stage_times[0]
    tp, tp2 = plan.t_prime, plan.t_prime2
    y0_inf = y0.sup_norm
    assert s.u(0.5 * tp) == pytest.approx((8.0 + 2 * y0_inf) / tp)
    assert s.v(tp) == pytest.approx(8.0 + y0_inf)
    assert s.v(t1) == pytest.approx(8.0)
    assert s.u(t1 + 0.5 * tp2) == pytest.approx(-8.0 / tp2)
    assert s.v(t1 + tp2) == pytest.approx(0.0, abs=1e-12)
    for t in (0.55, 0.7):
        assert s.u(t) == s.v(t) == s.w(t) == 0.0
    assert [m[1] for m in s.stage_marks] == ["stage1", "stage2", "stage3", "stage4"]
    assert 0 < tp2 <= ramp_time(plan.stage_times[1] - t1, 8.0, 2.5)


def test_lemma_ramp_window_holds_from_discrete_steady_state():
    grid = Grid(1024)
    params = ModelParams(2.5)
    tol = 5 * grid.h
    tp2, margin = lemma_ramp(8.0, 0.05, params, grid, SolverConfig(), 0.25, tol)
    assert margin > 0
    assert tp2 <= ramp_time(0.25, 8.0, 2.5)


def test_lemma_ramp_reports_coarse_grid_floor():
    """Below the resolution where the upwind steady state is within eta + tol of the continuum one,
    no ramp length helps and the negative margin is reported, not hidden."""
    grid = Grid(256)
    params = ModelParams(2.5)
    tol = 5 * grid.h
    gap = np.min(discrete_steady_state(8.0, params, grid).values - solve_steady(8.0, 2.5, grid).samples.values)
    _, margin = lemma_ramp(8.0, 0.05, params, grid, SolverConfig(), 0.25, tol, max_halvings=12)
    assert gap + 0.05 + tol < 0
    assert margin < 0


def test_passive_exit_from_entry_data_gamma3():
    eta, T_stage = 0.05, 0.25
    traj, _ = dissipation_run(3.0, theta=20.0, eta=eta, t_final=T_stage)
    assert traj.final.sup_norm <= 3 * eta / math.sqrt(4 * math.pi * T_stage)


def test_entry_moment_decreases_with_theta():
    grid = Grid(2048)
    for gamma in (1.75, 2.5):
        closed = []
        measured = []
        for th in (8.0, 16.0, 32.0, 64.0):
            y, info = stage3_entry(th, 0.05, ModelParams(gamma), grid)
            closed.append(info["moment_closed_form"])
            measured.append(dg.moment_x_minus_1(y))
        assert np.all(np.diff(closed) < 0), closed
        assert np.all(np.diff(measured) < 0), measured


def test_entry_width_uses_steady_profile():
    grid = Grid(512)
    th, eta = 16.0, 0.05
    p = solve_steady(th, 2.0, Grid(1024))
    _, info = stage3_entry(th, eta, ModelParams(2.0), grid, p)
    # for gamma = 2 the profile is th tanh(th (1-x)), so the eta-level width is closed form
    a = tanh_parameter(th)
    assert info["width"] == pytest.approx(math.atanh((th - eta) / a) / a, rel=1e-8)


@pytest.mark.slow
def test_passive_ratio_over_theta_doubling():
    """Measured sup|y(3T/4)| / eta for theta in {theta_0, 2 theta_0}; both within the stage-3 factor."""
    grid = Grid(1024)
    params = ModelParams(2.5)
    y0 = Field(5 * np.sin(3 * np.pi * grid.x), grid)
    ratios = []
    for th in (8.0, 16.0):
        plan = plan_strategy(y0, params, grid, StrategyTargets(theta=th))
        tr = solve(y0, plan.schedule, params, grid, SolverConfig(), 0.0, plan.stage_times[2], stride=10**9)
        ratios.append(tr.final.sup_norm / plan.eta)
    assert max(ratios) <= 3.0, ratios

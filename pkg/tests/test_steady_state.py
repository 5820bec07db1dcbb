from __future__ import annotations

import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from burgers_nullctl.errors import BlowUp
from burgers_nullctl.model import Grid, ModelParams
from burgers_nullctl.steady_state import (
    discrete_steady_state,
    half_height_width,
    layer_width_check,
    level_width,
    linear_profile,
    shoot,
    solve_steady,
    steady_residual,
    tanh_parameter,
    tanh_profile,
)


def test_shoot_constant_and_zero():
    g = Grid(64)
    for gam, th in ((2.0, 3.0), (1.5, 2.0), (3.0, 1.0)):
        y = shoot(th, -th ** gam, gam, g)
        assert np.max(np.abs(y.values - th)) <= 1e-9 * th
    assert np.max(np.abs(shoot(0.0, 0.0, 2.0, g).values)) == 0.0


def test_shoot_crosses_zero():
    y = shoot(1.0, -2.0, 2.0, Grid(64))
    assert y.values[-1] < 0
    assert np.all(np.diff(y.values) < 0)


def test_shoot_blowup():
    with pytest.raises(BlowUp):
        shoot(1.0, 5.0, 2.0, Grid(64))
    with pytest.raises(ValueError):
        shoot(-1.0, 0.0, 2.0, Grid(64))


@pytest.mark.parametrize("gam", [1.5, 2.0, 3.0])
@pytest.mark.parametrize("th", [1.0, 2.0, 5.0])
def test_bracket_sign_configuration(gam, th):
    g = Grid(32)
    assert shoot(th, -th ** gam, gam, g).values[-1] == pytest.approx(th)
    assert shoot(th, -th ** gam - th, gam, g).values[-1] < 0


def test_tanh_parameter():
    th = tanh_parameter(2.0)
    assert th * math.tanh(th) == pytest.approx(2.0, rel=1e-15)
    assert th == pytest.approx(2.0654, abs=1e-4)


def test_gamma2_example():
    p = solve_steady(2.0, 2.0, Grid(256))
    th = tanh_parameter(2.0)
    assert p.slope_right == pytest.approx(-th ** 2, abs=1e-8)
    assert p.slope_right == pytest.approx(-4.266, abs=1e-3)
    assert -6 < p.slope_right < -4 and p.in_slope_bracket()


def test_gamma1_example():
    p = solve_steady(1.0, 1.0, Grid(64))
    assert float(p.evaluate(0.5)[0]) == pytest.approx((math.e - math.exp(0.5)) / (math.e - 1), abs=1e-9)
    assert float(p.evaluate(0.5)[0]) == pytest.approx(0.6225, abs=1e-4)


@pytest.mark.parametrize("gam", [1.5, 2.0, 2.5, 3.0, 5.0])
def test_slope_decreasing_in_theta(gam):
    g = Grid(64)
    slopes = [solve_steady(th, gam, g).slope_right for th in (1.0, 2.0, 4.0, 8.0)]
    assert np.all(np.diff(slopes) < 0)


@pytest.mark.parametrize("theta,gam", [(2.0, 2.0), (5.0, 2.0), (3.0, 1.5), (10.0, 2.5), (20.0, 3.0)])
def test_profile_invariants(theta, gam):
    tol = 1e-9
    g = Grid(2048)
    p = solve_steady(theta, gam, g, tol)
    v = p.samples.values
    assert v[0] == theta
    assert abs(v[-1]) <= 10 * tol * theta
    assert np.all(v[:-1] >= -1e-10)
    assert np.all(np.diff(v) <= 1e-10)
    assert np.all(np.diff(v, 2) <= 1e-10)
    assert p.in_slope_bracket()
    # absolute 10*tol on the O(1) scale, relative to |C| once the slope is large
    assert steady_residual(p) <= 10 * tol * max(1.0, abs(p.slope_right))


def test_dense_solution_satisfies_ode():
    """Independent check: integrate y' = |y|^gamma + C backward from y(1) = 0.

    Backward integration is stable; forward shooting from x = 0 amplifies
    errors in C by exp(gamma theta^(gamma-1) x).
    """
    theta, gam = 5.0, 2.5
    p = solve_steady(theta, gam, Grid(256))
    sol = solve_ivp(lambda x, y: [abs(y[0]) ** gam + p.slope_right], (1.0, 0.0), [0.0], method="DOP853",
                    rtol=1e-12, atol=1e-12, dense_output=True)
    xs = np.linspace(0, 1, 257)
    assert abs(sol.sol(0.0)[0] - theta) <= 1e-6 * theta
    assert np.max(np.abs(sol.sol(xs)[0] - p.samples.values)) <= 1e-6 * theta


def test_oracle_closed_forms_timing():
    g = Grid(4096)
    for th in (2.0, 5.0):
        t0 = time.perf_counter()
        p = solve_steady(th, 2.0, g)
        assert time.perf_counter() - t0 < 1.0
        assert np.max(np.abs(p.samples.values - tanh_profile(th, g.x))) <= 1e-6
    for th in (1.0, 2.0, 5.0):
        p = solve_steady(th, 1.0, g)
        assert np.max(np.abs(p.samples.values - linear_profile(th, g.x))) <= 1e-8


def test_layer_width_check_examples():
    p = solve_steady(10.0, 3.0, Grid(4096))
    rep = layer_width_check(p, 0.5)
    assert rep.threshold == pytest.approx(1 - 0.5 / 0.875 * 1e-2, abs=1e-12)
    assert rep.threshold == pytest.approx(0.99429, abs=1e-5)
    assert rep.passed and rep.min_margin >= 0
    x = p.grid.x
    assert np.all(p.samples.values[x <= rep.threshold] >= 5.0)
    small = layer_width_check(p, 1e-9)
    assert small.threshold > 1 - 1e-9 and small.passed
    with pytest.raises(ValueError):
        layer_width_check(p, 1.0)


@settings(max_examples=20, deadline=None)
@given(st.floats(1.0, 30.0), st.sampled_from([1.75, 2.0, 2.5, 3.0]), st.floats(0.05, 0.95))
def test_layer_lower_bound_holds(theta, gam, a):
    p = solve_steady(theta, gam, Grid(512))
    assert layer_width_check(p, a).passed


@pytest.mark.parametrize("gam", [2.0, 2.5, 3.0])
def test_layer_scaling(gam):
    g = Grid(1024)
    thetas = np.array([5.0, 10.0, 20.0, 40.0])
    widths = [half_height_width(solve_steady(th, gam, g)) for th in thetas]
    slope = np.polyfit(np.log(thetas), np.log(widths), 1)[0]
    assert abs(slope + (gam - 1)) <= 0.25


def test_half_height_width_gamma2_closed_form():
    p = solve_steady(5.0, 2.0, Grid(64))
    th = tanh_parameter(5.0)
    # th tanh(th w) = 5/2
    assert half_height_width(p) == pytest.approx(math.atanh(2.5 / th) / th, rel=1e-9)


def test_level_width():
    p = solve_steady(5.0, 2.0, Grid(64))
    th = tanh_parameter(5.0)
    assert level_width(p, 1.0) == pytest.approx(math.atanh(4.0 / th) / th, rel=1e-9)
    assert level_width(p, 0.0) == 1.0
    assert level_width(p, 5.0) == 0.0


def test_large_theta_is_finite():
    p = solve_steady(256.0, 2.5, Grid(1024))
    assert p.in_slope_bracket()
    assert np.all(np.isfinite(p.samples.values))


def test_discrete_steady_state_is_scheme_fixed_point(backend):
    from burgers_nullctl.model import ControlSchedule
    from burgers_nullctl.solver import SolverConfig, stability_bound, step

    theta = 8.0
    params = ModelParams(2.5)
    grid = Grid(256)
    y = discrete_steady_state(theta, params, grid)
    cfg = SolverConfig(backend=backend)
    dt = 0.9 * stability_bound(y.values, params, grid, cfg)
    out = step(y, ControlSchedule.constant(0, 1, v=theta), params, grid, cfg, dt)
    assert np.max(np.abs(out.values - y.values)) <= 1e-9 * theta
    cont = solve_steady(theta, 2.5, grid).samples.values
    assert np.all(y.values <= cont + 1e-9)  # upwinding widens the layer


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        solve_steady(0.0, 2.0, Grid(16))
    with pytest.raises(ValueError):
        solve_steady(1.0, 2.0, Grid(16), tol=0.0)

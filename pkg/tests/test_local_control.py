from __future__ import annotations

import numpy as np
import pytest

from burgers_nullctl import diagnostics as dg
from burgers_nullctl.checks import gradient_errors
from burgers_nullctl.errors import TargetMissed
from burgers_nullctl.local_control import (
    ControlVector,
    SmallnessWarning,
    TerminalStage,
    gradient,
    objective,
    optimize,
    smallness_threshold,
)
from burgers_nullctl.model import Field, Grid, ModelParams
from burgers_nullctl.solver import SolverConfig, solve

P2 = ModelParams(2.0)


def _sine(n=128, amp=0.05):
    g = Grid(n)
    return Field(amp * np.sin(np.pi * g.x), g)


def test_control_vector_validation():
    with pytest.raises(ValueError):
        ControlVector(np.array([np.nan]), 1.0)
    with pytest.raises(ValueError):
        ControlVector(np.zeros(3), 0.0)
    st = TerminalStage(_sine(32), P2, 0.0, 0.01, dt=1e-3)
    with pytest.raises(ValueError):
        st.objective(ControlVector(np.zeros(3), 1.0))
    with pytest.raises(ValueError):
        TerminalStage(_sine(32), P2, 0.1, 0.1)


def test_zero_input_zero_control():
    z = Field.zeros(Grid(32))
    st = TerminalStage(z, P2, 0.0, 0.05, dt=1e-3)
    v = st.zeros(1e-3)
    assert len(v) == st.n_steps + 1
    assert objective(v, z, P2, 0.0, 0.05, dt=1e-3) == 0.0
    assert np.all(gradient(v, z, P2, 0.0, 0.05, dt=1e-3).values == 0.0)


def test_regularization_lower_bound():
    z = Field.zeros(Grid(32))
    T, c, alpha = 0.05, 0.3, 1e-2
    st = TerminalStage(z, P2, 0.0, T, dt=1e-3)
    J = st.objective(ControlVector(np.full(st.n_steps + 1, c), alpha))
    assert J >= 0.5 * alpha * c * c * T > 0


def test_alpha_term_gradient_is_exact():
    y = _sine(64, 0.2)
    st = TerminalStage(y, ModelParams(2.5), 0.0, 0.05, dt=1e-3)
    rng = np.random.default_rng(1)
    vals = 0.1 * rng.standard_normal(st.n_steps + 1)
    Y = st.forward(vals)
    ga = st.gradient(ControlVector(vals, 1e-3), Y)
    gb = st.gradient(ControlVector(vals, 3e-3), Y)
    assert np.allclose(gb - ga, 2e-3 * st.dt * vals, rtol=1e-12, atol=1e-18)


def test_forward_matches_adaptive_solver_on_shared_grid():
    y = _sine(64, 0.2)
    st = TerminalStage(y, P2, 0.0, 0.05, dt=1e-3)
    Y = st.forward(np.zeros(st.n_steps + 1))
    tr = solve(y, st.trajectory(st.zeros(1.0), Y).schedule, ModelParams(2.0, horizon_T=0.05), y.grid,
               SolverConfig(theta_method=1.0), 0.0, 0.05, stride=10**9, fixed_dt=st.dt)
    assert np.allclose(tr.final.values, Y[-1], rtol=0, atol=1e-14)


@pytest.mark.parametrize("gamma", [1.75, 2.5])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_gradient_matches_finite_differences(gamma, seed, backend):
    errs = gradient_errors(gamma, 64, 10, seed, backend=backend)
    assert max(errs) <= 1e-5, errs


def test_zero_input_needs_no_iterations():
    z = Field.zeros(Grid(64))
    res = optimize(z, P2, 0.0, 0.25, 1e-4)
    assert res.iterations == 0
    assert np.all(res.control.values == 0.0)
    assert res.terminal_norm == 0.0


def test_reaches_target_and_beats_passive_decay():
    y = _sine(128)
    res = optimize(y, P2, 0.0, 0.25, 1e-4)
    assert res.terminal_norm <= 1e-4
    assert res.uncontrolled_norm > 0
    assert res.terminal_norm < res.uncontrolled_norm
    # J(v*) below J(0) at the final regularization weight
    st = TerminalStage(y, P2, 0.0, 0.25)
    assert st.objective(res.control) < st.objective(st.zeros(res.control.alpha))
    assert dg.l2_norm(res.trajectory.final) == pytest.approx(res.terminal_norm, rel=1e-12)


def test_descent_is_monotone():
    y = _sine(64, 0.1)
    res = optimize(y, P2, 0.0, 0.1, 1e-9, raise_on_miss=False, max_iter=80)
    for hist in res.history:
        assert np.all(np.diff(hist) <= 0), hist


def test_smallness_warning_and_target_missed():
    big = _sine(64, 0.5)
    assert big.sup_norm > smallness_threshold(P2)
    with pytest.warns(SmallnessWarning):
        with pytest.raises(TargetMissed) as info:
            optimize(big, P2, 0.0, 0.05, 1e-14, max_iter=3)
    assert info.value.best_norm > 1e-14
    assert info.value.trajectory is not None

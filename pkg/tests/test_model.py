from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from burgers_nullctl.control_pipeline import build_stage1
from burgers_nullctl.model import (
    ControlSchedule,
    Field,
    FluxVariant,
    Grid,
    ModelParams,
    Trajectory,
    eval_control,
    flux,
    flux_prime,
)

E = ModelParams(2.0, "E")
F = ModelParams(2.0, "F")


def test_params_validation():
    with pytest.raises(ValueError):
        ModelParams(1.0)
    with pytest.raises(ValueError):
        ModelParams(2.0, horizon_T=0.0)
    with pytest.raises(ValueError):
        ModelParams(2.0, "G")
    assert ModelParams(2.0, "f").flux_variant is FluxVariant.F


def test_grid_endpoints_and_spacing():
    g = Grid(96)
    assert g.x[0] == 0.0 and g.x[-1] == 1.0
    assert np.allclose(np.diff(g.x), g.h, rtol=0, atol=1e-15)
    assert g.n_nodes == 97
    with pytest.raises(ValueError):
        Grid(7)


def test_field_checks_length_and_finiteness():
    g = Grid(8)
    with pytest.raises(ValueError):
        Field(np.zeros(5), g)
    with pytest.raises(ValueError):
        Field(np.full(9, np.nan), g)
    f = Field(np.arange(9.0), g, 0.5)
    with pytest.raises(ValueError):
        f.values[0] = 1.0
    assert f.sup_norm == 8.0


def test_flux_examples():
    assert flux(0.0, E) == 0.0
    assert flux(-2.0, F) == 4.0
    assert flux(1.5, ModelParams(2.5, "E")) == pytest.approx(1.5 ** 2.5, rel=1e-15)
    assert flux(1.5, ModelParams(2.5, "E")) == pytest.approx(2.7557, abs=1e-4)


def test_flux_prime_examples():
    for g in (1.2, 1.5, 2.0, 3.0):
        assert flux_prime(0.0, ModelParams(g, "E")) == 0.0
        assert flux_prime(0.0, ModelParams(g, "F")) == 0.0
    assert flux_prime(3.0, E) == 6.0
    assert flux_prime(-2.0, ModelParams(3.0, "F")) == -12.0


@settings(max_examples=100, deadline=None)
@given(st.floats(-5, 5).filter(lambda y: abs(y) >= 1e-3), st.sampled_from([1.25, 1.75, 2.0, 2.5, 3.0]),
       st.sampled_from(["E", "F"]))
def test_flux_prime_matches_central_difference(y, g, variant):
    p = ModelParams(g, variant)
    d = 1e-6 * max(1.0, abs(y))
    d = min(d, 0.5 * abs(y))
    fd = (flux(y + d, p) - flux(y - d, p)) / (2 * d)
    assert abs(fd - flux_prime(y, p)) <= 1e-6 * max(abs(flux_prime(y, p)), 1e-12)


@given(st.floats(-50, 50, allow_nan=False), st.sampled_from([1.5, 2.0, 2.5, 3.7]))
def test_flux_parity_is_exact(y, g):
    assert flux(-y, ModelParams(g, "F")) == flux(y, ModelParams(g, "F"))
    assert flux(-y, ModelParams(g, "E")) == -flux(y, ModelParams(g, "E"))


def test_flux_vectorized():
    y = np.array([-2.0, 0.0, 3.0])
    assert np.array_equal(flux(y, F), [4.0, 0.0, 9.0])
    assert np.array_equal(flux_prime(y, E), [4.0, 0.0, 6.0])


def test_eval_control_examples():
    s = ControlSchedule([(0, 0), (1, 2)])
    assert eval_control(s, 0.5) == (1.0, 0.0, 0.0)
    s = ControlSchedule([(0.2, 3.0), (1, 2)], [(0.5, -1.0)])
    assert eval_control(s, 0.0)[0] == 3.0
    assert eval_control(s, 2.0)[0] == 2.0
    assert eval_control(s, 0.1)[1] == -1.0


def test_stage1_control_value():
    s = build_stage1(4.0, 1.0, 0.1, 1.0)
    assert eval_control(s, 0.05)[0] == pytest.approx(60.0, rel=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.floats(-10, 10)), min_size=2, max_size=8))
def test_eval_control_exact_at_knots_and_affine(knots):
    knots = sorted(knots, key=lambda k: k[0])
    s = ControlSchedule(knots)
    arr = s.u_knots
    for (a, fa), (b, fb) in zip(arr[:-1], arr[1:]):
        if b - a > 1e-9:
            assert s.u(b) == pytest.approx(fb, abs=1e-12)
            m = 0.5 * (a + b)
            assert s.u(m) == pytest.approx(0.5 * (fa + fb), abs=1e-9)


def test_jump_is_left_continuous():
    s = ControlSchedule([(0, 1.0), (0.5, 1.0), (0.5, 0.0), (1, 0.0)])
    assert s.u(0.5) == 1.0
    assert s.u(0.5 + 1e-12) == 0.0


def test_schedule_validation_and_shift():
    s = ControlSchedule([(0, 0), (2, 1)])
    with pytest.raises(ValueError):
        s.validate(1.0)
    with pytest.raises(ValueError):
        ControlSchedule([(1, 0), (0, 1)])
    sh = s.shifted(0.5)
    assert sh.u(1.5) == pytest.approx(s.u(1.0))


def test_schedule_concatenate():
    a = ControlSchedule.constant(0.0, 0.5, u=1.0, label="a")
    b = ControlSchedule.constant(0.5, 1.0, u=2.0, label="b")
    c = ControlSchedule.concatenate([a, b])
    assert c.u(0.25) == 1.0 and c.u(0.75) == 2.0
    assert [m[1] for m in c.stage_marks] == ["a", "b"]


def test_trajectory_concatenate_drops_duplicate_junction():
    g = Grid(8)
    f = lambda t: Field(np.full(9, t), g, t)  # noqa: E731
    a = Trajectory([f(0.0), f(0.5)], ControlSchedule())
    b = Trajectory([f(0.5), f(1.0)], ControlSchedule())
    c = Trajectory.concatenate([a, b])
    assert np.array_equal(c.times, [0.0, 0.5, 1.0])
    assert c.at_or_before(0.7).time == 0.5
    with pytest.raises(ValueError):
        Trajectory([f(0.5), f(0.5)], ControlSchedule())


def test_params_are_hashable_values():
    assert ModelParams(2.0) == ModelParams(2.0)
    assert len({ModelParams(2.0), ModelParams(2.0)}) == 1
    assert math.isclose(Grid(10).h, 0.1)

"""Shared domain types: model parameters, grid, state snapshots, control signals.

The equation is

    y_t + (flux(y))_x - y_xx = u(t)   on (0, T) x (0, 1),
    y(t, 0) = v(t),  y(t, 1) = w(t),

with viscosity fixed to one. Variant ``E`` uses the odd, monotone flux
``sign(y)|y|^gamma`` (transport speed ``gamma |y|^(gamma-1)``), variant ``F``
the even, convex flux ``|y|^gamma``.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

Array = np.ndarray


class FluxVariant(str, enum.Enum):
    E = "E"
    F = "F"

    @classmethod
    def parse(cls, value: FluxVariant | str) -> FluxVariant:
        if isinstance(value, cls):
            return value
        return cls(str(value).upper())


@dataclass(frozen=True)
class ModelParams:
    gamma: float
    flux_variant: FluxVariant = FluxVariant.E
    horizon_T: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "flux_variant", FluxVariant.parse(self.flux_variant))
        if not (self.gamma > 1.0 and math.isfinite(self.gamma)):
            raise ValueError(f"gamma must be > 1, got {self.gamma}")
        if not (self.horizon_T > 0.0 and math.isfinite(self.horizon_T)):
            raise ValueError(f"horizon_T must be > 0, got {self.horizon_T}")

    @property
    def variant_code(self) -> int:
        return 0 if self.flux_variant is FluxVariant.E else 1


@dataclass(frozen=True)
class Grid:
    """Uniform mesh of ``[0, 1]`` with ``n_cells + 1`` nodes."""

    n_cells: int

    def __post_init__(self) -> None:
        if int(self.n_cells) != self.n_cells or self.n_cells < 8:
            raise ValueError(f"n_cells must be an integer >= 8, got {self.n_cells}")
        object.__setattr__(self, "n_cells", int(self.n_cells))

    @property
    def h(self) -> float:
        return 1.0 / self.n_cells

    @property
    def x(self) -> Array:
        return np.linspace(0.0, 1.0, self.n_cells + 1)

    @property
    def n_nodes(self) -> int:
        return self.n_cells + 1


@dataclass(frozen=True, eq=False)
class Field:
    """Nodal values of the state on a grid at a given time."""

    values: Array
    grid: Grid
    time: float = 0.0

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64)
        if values.shape != (self.grid.n_nodes,):
            raise ValueError(
                f"field has shape {values.shape}, grid expects ({self.grid.n_nodes},)"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, func: Any, grid: Grid, time: float = 0.0) -> Field:
        return cls(np.asarray(func(grid.x), dtype=np.float64) * np.ones(grid.n_nodes), grid, time)

    @classmethod
    def zeros(cls, grid: Grid, time: float = 0.0) -> Field:
        return cls(np.zeros(grid.n_nodes), grid, time)

    def with_values(self, values: Array, time: float | None = None) -> Field:
        return Field(values, self.grid, self.time if time is None else time)

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))


def flux(y: Any, params: ModelParams) -> Any:
    """Conservative flux: ``sign(y)|y|^gamma`` (E) or ``|y|^gamma`` (F)."""
    y = np.asarray(y, dtype=np.float64)
    a = np.abs(y) ** params.gamma
    out = np.sign(y) * a if params.flux_variant is FluxVariant.E else a
    return out[()] if out.ndim == 0 else out


def flux_prime(y: Any, params: ModelParams) -> Any:
    """Characteristic speed, the derivative of :func:`flux`."""
    y = np.asarray(y, dtype=np.float64)
    a = params.gamma * np.abs(y) ** (params.gamma - 1.0)
    out = a if params.flux_variant is FluxVariant.E else np.sign(y) * a
    return out[()] if out.ndim == 0 else out


def _as_knots(knots: Iterable[tuple[float, float]] | Array | None) -> Array:
    if knots is None:
        return np.zeros((0, 2))
    arr = np.array(list(knots) if not isinstance(knots, np.ndarray) else knots, dtype=np.float64)
    if arr.size == 0:
        return np.zeros((0, 2))
    arr = arr.reshape(-1, 2)
    if not np.all(np.isfinite(arr)):
        raise ValueError("knots must be finite")
    if np.any(np.diff(arr[:, 0]) < 0):
        raise ValueError("knot times must be nondecreasing")
    arr.flags.writeable = False
    return arr


def _interp_left(knots: Array, t: float) -> float:
    """Piecewise-linear interpolation, left-continuous at repeated knot times."""
    n = knots.shape[0]
    if n == 0:
        return 0.0
    times = knots[:, 0]
    idx = int(np.searchsorted(times, t, side="left"))
    if idx < n and times[idx] == t:
        return float(knots[idx, 1])
    if idx == 0:
        return float(knots[0, 1])
    if idx == n:
        return float(knots[-1, 1])
    t0, y0 = knots[idx - 1]
    t1, y1 = knots[idx]
    return float(y0 + (y1 - y0) * (t - t0) / (t1 - t0))


@dataclass(frozen=True, eq=False)
class ControlSchedule:
    """Piecewise-linear signals ``u``, ``v``, ``w`` given by ``(time, value)`` knots.

    Repeated knot times encode jumps; the signal takes the value of the first
    knot at the jump time (left continuity). Outside the knot range each signal
    is extended by its nearest knot value; an empty signal is identically zero.
    """

    u_knots: Array = field(default_factory=lambda: np.zeros((0, 2)))
    v_knots: Array = field(default_factory=lambda: np.zeros((0, 2)))
    w_knots: Array = field(default_factory=lambda: np.zeros((0, 2)))
    stage_marks: tuple[tuple[float, str], ...] = ()

    def __post_init__(self) -> None:
        for name in ("u_knots", "v_knots", "w_knots"):
            object.__setattr__(self, name, _as_knots(getattr(self, name)))
        object.__setattr__(
            self, "stage_marks", tuple((float(t), str(s)) for t, s in self.stage_marks)
        )

    def u(self, t: float) -> float:
        return _interp_left(self.u_knots, t)

    def v(self, t: float) -> float:
        return _interp_left(self.v_knots, t)

    def w(self, t: float) -> float:
        return _interp_left(self.w_knots, t)

    def breakpoints(self) -> Array:
        """Sorted distinct knot and stage-mark times (where a time stepper should land)."""
        times = [k[:, 0] for k in (self.u_knots, self.v_knots, self.w_knots)]
        times.append(np.array([t for t, _ in self.stage_marks], dtype=np.float64))
        return np.unique(np.concatenate(times))

    def validate(self, horizon_T: float) -> None:
        for name in ("u_knots", "v_knots", "w_knots"):
            k = getattr(self, name)
            if k.size and (k[0, 0] < 0.0 or k[-1, 0] > horizon_T * (1 + 1e-12)):
                raise ValueError(f"{name} times must lie in [0, {horizon_T}]")

    def shifted(self, offset: float) -> ControlSchedule:
        def shift(k: Array) -> Array:
            out = np.array(k)
            out[:, 0] += offset
            return out

        return ControlSchedule(
            shift(self.u_knots),
            shift(self.v_knots),
            shift(self.w_knots),
            tuple((t + offset, s) for t, s in self.stage_marks),
        )

    @staticmethod
    def concatenate(parts: Sequence[ControlSchedule]) -> ControlSchedule:
        """Join schedules given on consecutive time windows (already shifted)."""

        def cat(name: str) -> Array:
            arrays = [getattr(p, name) for p in parts if getattr(p, name).size]
            return np.concatenate(arrays) if arrays else np.zeros((0, 2))

        marks: list[tuple[float, str]] = []
        for p in parts:
            marks.extend(p.stage_marks)
        return ControlSchedule(cat("u_knots"), cat("v_knots"), cat("w_knots"), tuple(marks))

    @classmethod
    def constant(cls, t0: float, t1: float, u: float = 0.0, v: float = 0.0, w: float = 0.0,
                 label: str | None = None) -> ControlSchedule:
        marks = ((t0, label),) if label else ()
        return cls([(t0, u), (t1, u)], [(t0, v), (t1, v)], [(t0, w), (t1, w)], marks)


def eval_control(s: ControlSchedule, t: float) -> tuple[float, float, float]:
    return s.u(t), s.v(t), s.w(t)


@dataclass(eq=False)
class Trajectory:
    snapshots: list[Field]
    schedule: ControlSchedule
    diagnostic_times: Array = field(default_factory=lambda: np.zeros(0))
    diagnostics: dict[str, Array] = field(default_factory=dict)
    steps: int = 0
    step_sizes: Array = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self) -> None:
        if not self.snapshots:
            raise ValueError("a trajectory needs at least one snapshot")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("snapshot times must be strictly increasing")

    @property
    def times(self) -> Array:
        return np.array([f.time for f in self.snapshots])

    @property
    def values(self) -> Array:
        return np.stack([f.values for f in self.snapshots])

    @property
    def grid(self) -> Grid:
        return self.snapshots[0].grid

    @property
    def initial(self) -> Field:
        return self.snapshots[0]

    @property
    def final(self) -> Field:
        return self.snapshots[-1]

    def at_or_before(self, t: float) -> Field:
        idx = int(np.searchsorted(self.times, t, side="right")) - 1
        return self.snapshots[max(idx, 0)]

    @staticmethod
    def concatenate(parts: Sequence[Trajectory], schedule: ControlSchedule | None = None) -> Trajectory:
        """Join trajectories of consecutive windows, dropping duplicated junction snapshots."""
        snaps: list[Field] = []
        dtimes: list[Array] = []
        names = set.intersection(*(set(p.diagnostics) for p in parts)) if parts else set()
        diag: dict[str, list[Array]] = {k: [] for k in names}
        for i, p in enumerate(parts):
            s = p.snapshots if i == 0 else p.snapshots[1:]
            snaps.extend(s)
            start = 0 if i == 0 else 1
            dtimes.append(p.diagnostic_times[start:])
            for k in names:
                diag[k].append(p.diagnostics[k][start:])
        return Trajectory(
            snaps,
            schedule or ControlSchedule.concatenate([p.schedule for p in parts]),
            np.concatenate(dtimes) if dtimes else np.zeros(0),
            {k: np.concatenate(v) for k, v in diag.items()},
            steps=sum(p.steps for p in parts),
            step_sizes=np.concatenate([p.step_sizes for p in parts]) if parts else np.zeros(0),
        )

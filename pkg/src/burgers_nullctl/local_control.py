"""Terminal-stage steering by the left boundary value, via discrete-adjoint optimization.

The stage runs with ``u = w = 0`` on a fixed time grid ``t_k = t0 + k dt``,
``k = 0..N``, and the control is the vector of boundary values ``v_k``. The
objective is

    J(v) = 1/2 |y_N|^2 + alpha/2 * sum_k v_k^2 dt

with the trapezoid norm. Its gradient is the exact transpose of the
linearized IMEX steps, so it agrees with finite differences of the computed
``J`` up to the (tiny) smoothing ``eps`` of the transport speed at ``y = 0``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import CflViolation, NonFinite, TargetMissed
from .model import ControlSchedule, Field, Grid, ModelParams, Trajectory

SMOOTHING_EPS = 1e-8


class SmallnessWarning(UserWarning):
    """The stage-4 entry state is larger than the local-control theory assumes."""


@dataclass(frozen=True, eq=False)
class ControlVector:
    values: np.ndarray
    alpha: float

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 1 or not np.all(np.isfinite(v)):
            raise ValueError("control values must be a finite 1-D array")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size


class TerminalStage:
    """Forward model and adjoint for boundary steering on ``[t_begin, t_end]``.

    ``dt`` is fixed up front so that every control shares the time grid; by
    default it is the monotone step for states bounded by ``amplitude_bound``.
    A trial control that drives the state past that bound raises
    :class:`CflViolation`.
    """

    def __init__(self, y_in: Field, params: ModelParams, t_begin: float, t_end: float, *,
                 dt: float | None = None, dt_max: float = 1e-3, amplitude_bound: float = 1.0,
                 cfl_safety: float = 0.9, theta_method: float = 1.0, eps: float = SMOOTHING_EPS,
                 backend: str | None = None) -> None:
        if not t_begin < t_end:
            raise ValueError("t_begin must be smaller than t_end")
        self.y_in = y_in
        self.grid = y_in.grid
        self.params = params
        self.t_begin = float(t_begin)
        self.t_end = float(t_end)
        self.theta_method = theta_method
        self.eps = eps
        self.kern = kernels.get(backend)
        g = params.gamma
        m = max(amplitude_bound, y_in.sup_norm)
        self._limit = self.grid.h / (g * m ** (g - 1.0))
        if dt is None:
            dt = min(dt_max, cfl_safety * self._limit)
        length = self.t_end - self.t_begin
        self.n_steps = max(1, math.ceil(length / dt - 1e-9))
        self.dt = length / self.n_steps
        self.weights = np.full(self.grid.n_nodes, self.grid.h)
        self.weights[0] = self.weights[-1] = 0.5 * self.grid.h

    @property
    def times(self) -> np.ndarray:
        return self.t_begin + self.dt * np.arange(self.n_steps + 1)

    def zeros(self, alpha: float) -> ControlVector:
        return ControlVector(np.zeros(self.n_steps + 1), alpha)

    def _check(self, v: ControlVector) -> None:
        if len(v) != self.n_steps + 1:
            raise ValueError(f"control has {len(v)} values, stage needs {self.n_steps + 1}")

    def forward(self, v: ControlVector | np.ndarray) -> np.ndarray:
        """All states ``y_0..y_N`` as an ``(N+1, n+1)`` array."""
        vals = v.values if isinstance(v, ControlVector) else np.asarray(v, dtype=np.float64)
        g = self.params.gamma
        h = self.grid.h
        N = self.n_steps
        Y = np.empty((N + 1, self.grid.n_nodes))
        Y[0] = self.y_in.values
        Y[0, 0] = vals[0]
        variant = self.params.variant_code
        for k in range(N):
            amax = float(np.max(np.abs(Y[k])))
            if amax > 0 and self.dt > h / (g * amax ** (g - 1.0)) * (1 + 1e-12):
                raise CflViolation(self.dt, h / (g * amax ** (g - 1.0)))
            res = self.kern.imex_step(Y[k], Y[k + 1], self.dt, h, g, variant, self.theta_method,
                                      0.0, None, float(vals[k + 1]), 0.0)
            if not math.isfinite(res):
                raise NonFinite(f"state became non-finite at step {k + 1}")
        return Y

    def terminal_norm(self, Y: np.ndarray) -> float:
        return math.sqrt(float(self.weights @ Y[-1] ** 2))

    def objective(self, v: ControlVector, Y: np.ndarray | None = None) -> float:
        self._check(v)
        if Y is None:
            Y = self.forward(v)
        reg = 0.5 * v.alpha * self.dt * float(v.values @ v.values)
        return 0.5 * float(self.weights @ Y[-1] ** 2) + reg

    def gradient(self, v: ControlVector, Y: np.ndarray | None = None) -> np.ndarray:
        self._check(v)
        if Y is None:
            Y = self.forward(v)
        g = self.params.gamma
        h = self.grid.h
        N = self.n_steps
        variant = self.params.variant_code
        grad = v.alpha * self.dt * np.array(v.values)
        lam = self.weights * Y[-1]
        lam_old = np.empty_like(lam)
        for k in range(N - 1, -1, -1):
            grad[k + 1] += self.kern.imex_adjoint(Y[k], lam, lam_old, self.dt, h, g, variant,
                                                  self.theta_method, self.eps)
            lam, lam_old = lam_old, lam
        grad[0] += lam[0]
        if not np.all(np.isfinite(grad)):
            raise NonFinite("adjoint sweep produced non-finite values")
        return grad

    def trajectory(self, v: ControlVector, Y: np.ndarray | None = None) -> Trajectory:
        if Y is None:
            Y = self.forward(v)
        t = self.times
        sched = ControlSchedule(
            np.column_stack([t[[0, -1]], [0.0, 0.0]]),
            np.column_stack([t, v.values]),
            np.column_stack([t[[0, -1]], [0.0, 0.0]]),
            ((self.t_begin, "stage4"),),
        )
        snaps = [Field(Y[k], self.grid, float(t[k])) for k in range(Y.shape[0])]
        return Trajectory(snaps, sched, np.array([t[0]]), {}, steps=self.n_steps,
                          step_sizes=np.full(self.n_steps, self.dt))


def objective(v: ControlVector, y_in: Field, params: ModelParams, t_begin: float, t_end: float,
              **stage_kw) -> float:
    return TerminalStage(y_in, params, t_begin, t_end, **stage_kw).objective(v)


def gradient(v: ControlVector, y_in: Field, params: ModelParams, t_begin: float, t_end: float,
             **stage_kw) -> ControlVector:
    st = TerminalStage(y_in, params, t_begin, t_end, **stage_kw)
    return ControlVector(st.gradient(v), v.alpha)


@dataclass
class OptimizeResult:
    control: ControlVector
    trajectory: Trajectory
    terminal_norm: float
    uncontrolled_norm: float
    iterations: int
    alphas: list[float] = field(default_factory=list)
    history: list[list[float]] = field(default_factory=list)
    """Accepted objective values, one list per continuation level."""

    @property
    def control_sup(self) -> float:
        return float(np.max(np.abs(self.control.values))) if len(self.control) else 0.0


def _lbfgs_direction(g: np.ndarray, S: list[np.ndarray], Yd: list[np.ndarray]) -> np.ndarray:
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(S), reversed(Yd)):
        rho = 1.0 / float(y @ s)
        a = rho * float(s @ q)
        alphas.append((rho, a))
        q -= a * y
    if S:
        q *= float(S[-1] @ Yd[-1]) / float(Yd[-1] @ Yd[-1])
    else:
        q /= max(float(np.linalg.norm(g)), 1e-300)
    for (s, y), (rho, a) in zip(zip(S, Yd), reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return -q


def optimize(y_in: Field, params: ModelParams, t_begin: float, t_end: float, target_tol: float, *,
             alpha0: float = 1e-4, alpha_decay: float = 0.1, alpha_min: float = 1e-14,
             iters_per_alpha: int = 60, max_iter: int = 600, memory: int = 10,
             raise_on_miss: bool = True, **stage_kw) -> OptimizeResult:
    """Minimize J by L-BFGS with Armijo backtracking and geometric continuation in ``alpha``.

    Stops as soon as the terminal L2 norm is at most ``target_tol``. Raises
    :class:`TargetMissed` (carrying the best control and trajectory) when the
    budget runs out first, unless ``raise_on_miss`` is false.
    """
    if not target_tol > 0:
        raise ValueError("target_tol must be positive")
    g_exp = params.gamma
    if y_in.sup_norm > 1.0 / (2.0 * g_exp):
        warnings.warn(
            f"entry state sup-norm {y_in.sup_norm:.3g} exceeds 1/(2 gamma) = {1 / (2 * g_exp):.3g}, "
            "the smallness assumed by the local null-control result; optimizing anyway",
            SmallnessWarning, stacklevel=2)
    stage = TerminalStage(y_in, params, t_begin, t_end, **stage_kw)
    x = np.zeros(stage.n_steps + 1)
    Y = stage.forward(x)
    base_norm = stage.terminal_norm(Y)
    best = (base_norm, x.copy(), Y, alpha0)
    result_alphas: list[float] = []
    history: list[list[float]] = []
    it = 0
    level = 0
    alpha = alpha0

    while best[0] > target_tol and it < max_iter and alpha >= alpha_min:
        v = ControlVector(x, alpha)
        Y = stage.forward(x)
        J = stage.objective(v, Y)
        g = stage.gradient(v, Y)
        S: list[np.ndarray] = []
        Yd: list[np.ndarray] = []
        hist = [J]
        history.append(hist)
        result_alphas.append(alpha)
        for _ in range(iters_per_alpha):
            if it >= max_iter:
                break
            gnorm = float(np.linalg.norm(g))
            if gnorm == 0.0:
                break
            d = _lbfgs_direction(g, S, Yd)
            slope = float(g @ d)
            if slope >= 0:  # lost descent: reset the memory
                S.clear()
                Yd.clear()
                d = -g / gnorm
                slope = float(g @ d)
            step = 1.0
            accepted = False
            for _ls in range(40):
                xt = x + step * d
                try:
                    Yt = stage.forward(xt)
                except (CflViolation, NonFinite):
                    step *= 0.5
                    continue
                vt = ControlVector(xt, alpha)
                Jt = stage.objective(vt, Yt)
                if Jt <= J + 1e-4 * step * slope:
                    accepted = True
                    break
                step *= 0.5
            if not accepted:
                break
            gt = stage.gradient(vt, Yt)
            s_vec, y_vec = xt - x, gt - g
            if float(s_vec @ y_vec) > 1e-12 * float(np.linalg.norm(s_vec)) * float(np.linalg.norm(y_vec)):
                S.append(s_vec)
                Yd.append(y_vec)
                if len(S) > memory:
                    S.pop(0)
                    Yd.pop(0)
            x, J, g, Y = xt, Jt, gt, Yt
            hist.append(J)
            it += 1
            norm = stage.terminal_norm(Y)
            if norm < best[0]:
                best = (norm, x.copy(), Y, alpha)
            if norm <= target_tol:
                break
            if abs(hist[-2] - J) <= 1e-15 * max(abs(J), 1e-300):
                break
        level += 1
        alpha = alpha0 * alpha_decay ** level

    norm, xb, Yb, alpha_best = best
    control = ControlVector(xb, alpha_best)
    traj = stage.trajectory(control, Yb)
    out = OptimizeResult(control, traj, norm, base_norm, it, result_alphas, history)
    if norm > target_tol and raise_on_miss:
        raise TargetMissed(norm, control, traj)
    return out


def smallness_threshold(params: ModelParams) -> float:
    return 1.0 / (2.0 * params.gamma)

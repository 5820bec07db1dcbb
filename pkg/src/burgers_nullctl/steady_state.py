"""Steady profiles ``theta_xx = (theta^gamma)_x`` with ``theta(0) = theta``, ``theta(1) = 0``.

Integrating once gives the shooting problem ``y' = |y|^gamma + C``,
``y(0) = theta``, and the steady state is the unique ``C`` in
``(-theta^gamma - theta, -theta^gamma)`` for which ``y(1) = 0``.

The root ``C*`` lies exponentially close to ``-theta^gamma`` (roughly a
distance ``exp(-gamma theta^(gamma-1))``), so for large ``theta`` it cannot be
resolved in double precision by shooting on ``C`` directly. :func:`solve_steady`
therefore bisects on ``L = log(-theta^gamma - C)`` over the same bracket and
integrates the shooting equation for the depth ``s = theta - y``::

    s' = delta + g(s),   g(s) = theta^gamma - |theta - s|^gamma,   delta = exp(L).

The integrated quantity is the deviation from the exact solution of the
linearization ``s = (delta / a) expm1(a x)``, ``a = gamma theta^(gamma-1)``,
which keeps the state O(1) over the whole interval.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .errors import BlowUp, BracketFailure
from .model import Field, Grid, ModelParams

_START_DEPTH = 1e-9  # relative depth where the linearized solution hands over to the ODE


@dataclass(frozen=True, eq=False)
class SteadyStateProfile:
    theta: float
    gamma: float
    slope_right: float
    samples: Field
    log_slope_excess: float = math.nan
    """``log(-theta^gamma - slope_right)``, exact even when the excess underflows."""
    dense: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)

    @property
    def grid(self) -> Grid:
        return self.samples.grid

    def evaluate(self, x) -> np.ndarray:
        if self.dense is None:
            return np.interp(x, self.grid.x, self.samples.values)
        return self.dense(np.asarray(x, dtype=np.float64))

    def in_slope_bracket(self) -> bool:
        """Strict ``-theta^gamma - theta < slope_right < -theta^gamma``, judged on the excess."""
        return bool(np.isfinite(self.log_slope_excess)
                    and self.log_slope_excess < math.log(self.theta))


def shoot(theta: float, C: float, gamma: float, grid: Grid, *, rtol: float = 1e-10,
          atol: float = 1e-12) -> Field:
    """Solve ``y' = |y|^gamma + C``, ``y(0) = theta`` on ``[0, 1]`` with RK45."""
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    if not math.isfinite(C):
        raise ValueError("C must be finite")
    bound = 10.0 * (theta + abs(C) ** (1.0 / gamma) + 1.0)

    def rhs(x, y):
        return [abs(y[0]) ** gamma + C]

    def escape(x, y):
        return bound - abs(y[0])

    escape.terminal = True
    sol = solve_ivp(rhs, (0.0, 1.0), [theta], method="RK45", t_eval=grid.x,
                    rtol=rtol, atol=atol, events=escape)
    if sol.status == 1 or sol.y.shape[1] != grid.n_nodes:
        raise BlowUp(f"|y| exceeded {bound:.3g} before x=1 (theta={theta}, C={C})")
    return Field(sol.y[0], grid)


class _DepthProblem:
    """Shooting equation in deviation-from-linear form for fixed ``theta``, ``gamma``.

    With depth ``s = theta - y``, ``q = s + delta/a`` and ``z = log(q a / delta)``,
    the linearized equation has ``z = a x`` exactly; the state integrated is the
    deviation ``eta = z - a x``, which starts at zero and stays O(1)::

        eta' = -expm1(-z) * (g(s)/s - a).
    """

    def __init__(self, theta: float, gamma: float, rtol: float, atol: float) -> None:
        self.theta = theta
        self.gamma = gamma
        self.theta_g = theta ** gamma
        self.a = gamma * theta ** (gamma - 1.0)
        self.rtol = rtol
        self.atol = atol

    def ratio(self, s: float) -> float:
        th, g = self.theta, self.gamma
        if s == 0.0:
            return self.a
        if s < 0.5 * th:
            return -self.theta_g * math.expm1(g * math.log1p(-s / th)) / s
        return (self.theta_g - abs(th - s) ** g) / s

    def start(self, L: float) -> tuple[float, float]:
        """Where the linearized depth reaches ``_START_DEPTH * theta``, with ``eta`` there.

        ``eta`` is the exact second-order correction, so the handover error is
        O(_START_DEPTH^2). Returns ``x0 >= 1`` when the depth stays below that level.
        """
        a = self.a
        u = math.log(_START_DEPTH * self.theta * a) - L
        x0 = (u + math.log1p(math.exp(-u))) / a if u > 0 else math.log1p(math.exp(u)) / a
        if x0 >= 1.0:
            return x0, 0.0
        b = 0.5 * self.gamma * (self.gamma - 1.0) * self.theta ** (self.gamma - 2.0)
        d = math.exp(L)
        s0 = _START_DEPTH * self.theta
        eta0 = -b * (s0 / a - 2.0 * d * x0 / a - d * math.expm1(-a * x0) / a ** 2)
        return x0, eta0

    def log_depth_linear(self, L: float, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        with np.errstate(divide="ignore"):
            ax = self.a * x
            return L - math.log(self.a) + ax + np.log(-np.expm1(-ax))

    def log_depth(self, L: float, x, eta):
        z = self.a * np.asarray(x, dtype=np.float64) + eta
        with np.errstate(divide="ignore"):
            return L - math.log(self.a) + z + np.log(-np.expm1(-z))

    def integrate(self, L: float, dense: bool = False):
        """Integrate from the handover point; ``None`` if the depth stays in the linear range."""
        a = self.a
        c = L - math.log(a)
        x0, eta0 = self.start(L)
        if x0 >= 1.0:
            return None

        def rhs(x, e):
            # clamps only matter for overshooting trial states far from the root
            z = max(a * x + e[0], -700.0)
            s = math.exp(min(c + z, 100.0)) * -math.expm1(-z)
            return [-math.expm1(-z) * (self.ratio(s) - a)]

        log_stop = math.log(2.0 * self.theta)

        def overshoot(x, e):
            z = max(a * x + e[0], 1e-300)
            return c + z + math.log(-math.expm1(-z)) - log_stop

        # past depth 2 theta the sign of the mismatch is settled and the
        # equation turns stiff, so stop there
        overshoot.terminal = True
        overshoot.direction = 1.0
        sol = solve_ivp(rhs, (x0, 1.0), [eta0], method="DOP853", rtol=self.rtol,
                        atol=self.atol, dense_output=dense, events=overshoot,
                        first_step=min(0.1 / a, 1.0 - x0))
        if not sol.success:  # pragma: no cover - integrator failure
            raise BracketFailure(f"depth integration failed: {sol.message}")
        return sol

    def mismatch(self, L: float) -> float:
        """``log(depth at x=1 / theta)``; zero at the steady state, increasing in ``L``."""
        sol = self.integrate(L)
        if sol is None:
            return float(self.log_depth_linear(L, 1.0)) - math.log(self.theta)
        if sol.status == 1:
            return math.log(2.0)
        return float(self.log_depth(L, 1.0, sol.y[0, -1])) - math.log(self.theta)


def solve_steady(theta: float, gamma: float, grid: Grid, tol: float = 1e-9, *,
                 rtol: float = 1e-12, atol: float = 1e-13, max_iter: int = 400) -> SteadyStateProfile:
    """Unique steady profile by bisection over the slope bracket ``(-theta^gamma - theta, -theta^gamma)``."""
    if not theta > 0:
        raise ValueError("theta must be positive")
    if not tol > 0:
        raise ValueError("tol must be positive")
    if gamma < 1:
        raise ValueError("gamma must be >= 1")
    prob = _DepthProblem(float(theta), float(gamma), rtol, atol)
    log_theta = math.log(theta)

    hi = log_theta
    m_hi = prob.mismatch(hi)
    if not m_hi > 0:
        raise BracketFailure(f"C=-theta^gamma-theta does not undershoot zero (mismatch {m_hi:.3e})")
    lo, span = hi - 1.0, 1.0
    while prob.mismatch(lo) >= 0:
        span *= 2.0
        lo = hi - span
        if span > 1e12:
            raise BracketFailure("no lower end for the slope bracket")

    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        m = prob.mismatch(mid)
        if m > 0:
            hi = mid
        else:
            lo = mid
        end_value = theta * abs(math.expm1(m))
        if end_value <= tol and hi - lo <= tol:
            break
    L = 0.5 * (lo + hi)

    x = grid.x
    sol = prob.integrate(L, dense=True)

    x0 = prob.start(L)[0]

    def dense(xq: np.ndarray) -> np.ndarray:
        xq = np.atleast_1d(np.asarray(xq, dtype=np.float64))
        out = prob.log_depth_linear(L, xq)
        right = xq > x0
        if sol is not None and np.any(right):
            out[right] = prob.log_depth(L, xq[right], sol.sol(xq[right])[0])
        return theta - np.exp(out)

    values = dense(x)
    values[0] = theta

    C = -prob.theta_g - math.exp(L)
    return SteadyStateProfile(float(theta), float(gamma), C, Field(values, grid), L, dense)


def steady_residual(p: SteadyStateProfile) -> float:
    """Max of ``|theta_x - |theta|^gamma - C|`` over interior nodes.

    ``theta_x`` is a fourth-order difference of the dense solution with step
    ``h/64``, fine enough that truncation stays below the solve tolerance even
    where ``|y|^gamma`` is not smooth at ``y = 0``. Without a dense solution the
    nodal samples are differenced instead.
    """
    h = p.grid.h
    if p.dense is None:
        y = p.samples.values
        d = (-y[4:] + 8.0 * y[3:-1] - 8.0 * y[1:-3] + y[:-4]) / (12.0 * h)
        return float(np.max(np.abs(d - np.abs(y[2:-2]) ** p.gamma - p.slope_right)))
    x = p.grid.x[1:-1]
    e = h / 64.0
    f = p.evaluate
    d = (-f(x + 2 * e) + 8.0 * f(x + e) - 8.0 * f(x - e) + f(x - 2 * e)) / (12.0 * e)
    return float(np.max(np.abs(d - np.abs(f(x)) ** p.gamma - p.slope_right)))


def tanh_parameter(theta: float) -> float:
    """Root ``th`` of ``th tanh(th) = theta``."""
    return brentq(lambda s: s * math.tanh(s) - theta, 1e-12, theta + 2.0, xtol=1e-15, rtol=1e-15)


def tanh_profile(theta: float, x) -> np.ndarray:
    """Closed form for ``gamma = 2``: ``th tanh(th (1 - x))`` with ``th tanh(th) = theta``."""
    th = tanh_parameter(theta)
    return th * np.tanh(th * (1.0 - np.asarray(x)))


def linear_profile(theta: float, x) -> np.ndarray:
    """Closed form for ``gamma = 1``."""
    x = np.asarray(x)
    return theta * (math.e - np.exp(x)) / (math.e - 1.0)


@dataclass(frozen=True)
class LayerReport:
    passed: bool
    threshold: float
    min_margin: float
    width: float


def layer_width_check(p: SteadyStateProfile, a: float) -> LayerReport:
    """Check ``theta(x) >= a theta`` up to ``1 - a/(1 - a^gamma) theta^(1-gamma)``.

    Also measures the half-height width ``1 - inf{x : theta(x) <= theta/2}``.
    """
    if not 0.0 < a < 1.0:
        raise ValueError("a must lie in (0, 1)")
    th, g = p.theta, p.gamma
    threshold = 1.0 - a / (1.0 - a ** g) * th ** (1.0 - g)
    x = p.grid.x
    mask = x <= threshold
    if np.any(mask):
        margin = float(np.min(p.samples.values[mask] - a * th))
    else:
        margin = math.inf
    passed = margin >= -1e-12 * max(1.0, th)
    return LayerReport(passed, threshold, margin, half_height_width(p))


def half_height_width(p: SteadyStateProfile) -> float:
    th = p.theta
    f = lambda xq: float(p.evaluate(np.array([xq]))[0]) - 0.5 * th  # noqa: E731
    x_half = brentq(f, 0.0, 1.0, xtol=1e-15, rtol=1e-14)
    return 1.0 - x_half


def level_width(p: SteadyStateProfile, depth: float) -> float:
    """``1 - inf{x : theta(x) <= theta - depth}``: width of the region more than ``depth`` below the top."""
    f = lambda xq: float(p.evaluate(np.array([xq]))[0]) - (p.theta - depth)  # noqa: E731
    if f(1.0) >= 0:
        return 0.0
    return 1.0 - brentq(f, 0.0, 1.0, xtol=1e-15, rtol=1e-14)


def discrete_steady_state(theta: float, params: ModelParams, grid: Grid, tol: float = 1e-13) -> Field:
    """Steady state of the IMEX scheme itself for boundary data ``(theta, 0)``.

    For nonnegative states both flux variants reduce to the upwind difference
    ``f(y_i) - f(y_{i-1})``, and summing the steady equations gives the
    recursion ``y_i + h y_i^gamma = y_{i+1} + h K`` from ``y_N = 0``. ``K`` is
    found by bisection on ``[theta^gamma, theta^gamma + theta]``.
    """
    g = params.gamma
    h = grid.h
    n = grid.n_cells

    def sweep(K: float) -> np.ndarray:
        y = np.zeros(n + 1)
        prev = 0.0
        for i in range(n - 1, -1, -1):
            b = prev + h * K
            z = b
            for _ in range(100):
                fz = z + h * z ** g - b
                z_new = z - fz / (1.0 + h * g * z ** (g - 1.0))
                if abs(z_new - z) <= 1e-16 * max(1.0, b):
                    z = z_new
                    break
                z = z_new
            y[i] = z
            prev = z
        return y

    lo, hi = theta ** g, theta ** g + theta
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if sweep(mid)[0] > theta:
            hi = mid
        else:
            lo = mid
        if hi - lo <= tol * hi:
            break
    y = sweep(lo)
    y[0] = theta
    return Field(y, grid)

"""Staged steering to zero: raise the state above the steady profile, pull it
down to a neighbourhood of zero, let the boundary residue dissipate, then
hand the small remainder to :mod:`local_control`.

Default stage boundaries are the quarters of the horizon:

* ``[0, T/4]``    stage 1, source pulse of length ``T'`` and boundary ramp to ``theta``;
* ``[T/4, T/2]``  stage 2, source ``-theta/T'_2`` and boundary ramp down on
  ``[T/4, T/4 + T'_2]``, zero controls afterwards;
* ``[T/2, 3T/4]`` passive stage, zero controls;
* ``[3T/4, T]``   terminal stage, boundary control from the optimizer.

Every exit check compares against its bound with an explicit tolerance and
records the margin.
"""

from __future__ import annotations

import math
import warnings
from collections.abc import Sequence
from dataclasses import dataclass, field, replace

import numpy as np

from . import diagnostics as dg
from . import local_control
from .errors import BadTiming, HypothesisViolation, HypothesisWarning, StageFailed, TargetMissed
from .model import ControlSchedule, Field, FluxVariant, Grid, ModelParams, Trajectory
from .solver import SolverConfig, solve
from .steady_state import SteadyStateProfile, discrete_steady_state, level_width, solve_steady

THETA_MIN = 8.0


def build_stage1(theta: float, y0_inf: float, t_prime: float, t_end: float) -> ControlSchedule:
    """Stage-1 controls on ``[0, t_end]`` (local time).

    ``u = (theta + 2|y0|)/T'`` up to ``T'``, then 0. ``v`` ramps linearly to
    ``theta + |y0|`` at ``T'``, descends linearly to ``theta`` at ``t_end/2`` and
    stays there. ``w = 0``.
    """
    if not 0.0 < t_prime < 0.5 * t_end:
        raise BadTiming(f"need 0 < T' < t_end/2, got T'={t_prime}, t_end={t_end}")
    if theta < 0 or y0_inf < 0:
        raise ValueError("theta and |y0| must be nonnegative")
    U = (theta + 2.0 * y0_inf) / t_prime
    half = 0.5 * t_end
    return ControlSchedule(
        [(0.0, U), (t_prime, U), (t_prime, 0.0), (t_end, 0.0)],
        [(0.0, 0.0), (t_prime, theta + y0_inf), (half, theta), (t_end, theta)],
        [(0.0, 0.0), (t_end, 0.0)],
        ((0.0, "stage1"),),
    )


def build_stage2(theta: float, t_prime2: float, t_end: float | None = None) -> ControlSchedule:
    """``u = -theta/T'_2`` and ``v`` falling linearly from ``theta`` to 0 on ``[0, T'_2]``.

    With ``t_end > T'_2`` the schedule continues with zero controls up to ``t_end``.
    """
    if not t_prime2 > 0:
        raise BadTiming("T'_2 must be positive")
    U = -theta / t_prime2
    u = [(0.0, U), (t_prime2, U)]
    v = [(0.0, theta), (t_prime2, 0.0)]
    w = [(0.0, 0.0), (t_prime2, 0.0)]
    if t_end is not None:
        if t_end < t_prime2:
            raise BadTiming("t_end must not precede T'_2")
        if t_end > t_prime2:
            u += [(t_prime2, 0.0), (t_end, 0.0)]
            v.append((t_end, 0.0))
            w.append((t_end, 0.0))
    return ControlSchedule(u, v, w, ((0.0, "stage2"),))


def ramp_time(stage_length: float, theta: float, gamma: float) -> float:
    """``min(stage_length / 10, 0.1 / theta^(gamma-1))``: shorter than the transport time at level theta."""
    return min(stage_length / 10.0, 0.1 / theta ** (gamma - 1.0))


@dataclass(frozen=True)
class StrategyTargets:
    eta: float = 0.05
    theta: float | None = None
    """``None`` selects theta by the doubling sweep in :func:`plan_strategy`."""
    theta_min: float = THETA_MIN
    theta_max: float = 256.0
    stage_fractions: tuple[float, float, float, float] = (0.25, 0.5, 0.75, 1.0)
    exit_tol: float | None = None
    """Discrete tolerance for the sandwich checks; default ``max(1e-6, 5h)``."""
    stage3_factor: float = 3.0
    auto_factor: float = 2.0
    terminal_target: float = 1e-4

    def __post_init__(self) -> None:
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.theta is not None and not self.theta > 0:
            raise ValueError("theta must be positive")
        f = self.stage_fractions
        if len(f) != 4 or not all(0 < a < b for a, b in zip(f, f[1:])) or f[0] <= 0 or f[-1] != 1.0:
            raise ValueError("stage_fractions must increase within (0, 1] and end at 1")

    def tolerance(self, grid: Grid) -> float:
        return self.exit_tol if self.exit_tol is not None else max(1e-6, 5.0 * grid.h)


@dataclass(frozen=True, eq=False)
class StagePlan:
    theta: float
    eta: float
    t_prime: float
    t_prime2: float
    stage_times: tuple[float, float, float, float]
    schedule: ControlSchedule
    params: ModelParams
    targets: StrategyTargets
    notes: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        t = self.stage_times
        if not all(a < b for a, b in zip(t, t[1:])) or t[0] <= 0 or t[-1] > self.params.horizon_T * (1 + 1e-12):
            raise ValueError("stage times must increase within (0, T]")
        if self.theta > 0 and not 0 < self.t_prime < t[0]:
            raise ValueError("T' must lie in (0, first stage time)")

    @property
    def lemma_time(self) -> float:
        """End of the stage-2 ramp, where the neighbourhood-of-zero window is checked."""
        return self.stage_times[0] + self.t_prime2


def hypothesis_status(params: ModelParams) -> str | None:
    """Message if the parameters are outside the theorem's range, else ``None``."""
    g = params.gamma
    if g <= 1.5:
        return f"gamma={g} <= 3/2: outside theorem hypotheses (needs gamma > 3/2)"
    if params.flux_variant is FluxVariant.F and g < 2.0:
        return f"variant F with gamma={g} < 2: simulated, but not covered by the theorem"
    return None


def _build_schedule(theta: float, y0_inf: float, params: ModelParams, times: Sequence[float],
                    tp2: float | None = None) -> tuple[ControlSchedule, float, float]:
    t1, t2, t3, t4 = times
    if theta == 0.0:
        return ControlSchedule.constant(0.0, t4, label="stage1"), 0.0, 0.0
    tp = ramp_time(t1, theta, params.gamma)
    if tp2 is None:
        tp2 = ramp_time(t2 - t1, theta, params.gamma)
    s1 = build_stage1(theta, y0_inf, tp, t1)
    s2 = build_stage2(theta, tp2, t2 - t1).shifted(t1)
    s3 = ControlSchedule.constant(t2, t3, label="stage3")
    s4 = ControlSchedule.constant(t3, t4, label="stage4")
    return ControlSchedule.concatenate([s1, s2, s3, s4]), tp, tp2


def lemma_ramp(theta: float, eta: float, params: ModelParams, grid: Grid, cfg: SolverConfig,
               stage_length: float, tol: float, *, max_halvings: int = 40) -> tuple[float, float]:
    """Ramp length for stage 2, halved from :func:`ramp_time` until the window holds.

    The test run starts from the discrete steady state, the smallest state
    stage 1 certifies; by the discrete comparison principle every admissible
    entry state then ends above it. The upper side ``y < eta`` holds for any
    ramp length. Returns ``(T'_2, margin)`` where margin is that run's worst
    distance above ``steady - theta - eta - tol``.
    """
    steady = solve_steady(theta, params.gamma, grid).samples.values
    base = discrete_steady_state(theta, params, grid)
    lower = steady - theta - eta - tol
    tp2 = ramp_time(stage_length, theta, params.gamma)
    horizon = replace(params, horizon_T=max(params.horizon_T, tp2))
    margin = -math.inf
    for _ in range(max_halvings + 1):
        s = build_stage2(theta, tp2)
        y = solve(base, s, horizon, grid, cfg, 0.0, tp2, stride=10**9).final.values
        margin = float(np.min(y - lower))
        if margin > 0:
            break
        tp2 *= 0.5
    return tp2, margin


def plan_strategy(y0: Field, params: ModelParams, grid: Grid, targets: StrategyTargets | None = None,
                  *, cfg: SolverConfig | None = None, strict: bool = False) -> StagePlan:
    """Choose theta, the ramp times and the stage boundaries.

    With ``targets.theta = None`` theta is the smallest of ``theta_min * 2^k``
    (up to ``theta_max``) whose passive-stage exit has ``sup|y| <= auto_factor * eta``;
    each candidate costs a run of the first three stages. Parameters outside
    the theorem's range emit :class:`HypothesisWarning` (or raise
    :class:`HypothesisViolation` with ``strict``).
    """
    targets = targets or StrategyTargets()
    cfg = cfg or SolverConfig()
    T = params.horizon_T
    times = tuple(float(f * T) for f in targets.stage_fractions)
    notes: dict = {}
    status = hypothesis_status(params)
    if status:
        if strict:
            raise HypothesisViolation(status)
        warnings.warn(status, HypothesisWarning, stacklevel=2)
        notes["hypothesis"] = status
    y0_inf = y0.sup_norm

    if y0_inf == 0.0:
        theta = targets.theta if targets.theta is not None else targets.theta_min
        notes["theta_rule"] = "zero initial state: already at target, controls off"
        sched = ControlSchedule.concatenate([
            ControlSchedule.constant(0.0, times[0], label="stage1"),
            ControlSchedule.constant(times[0], times[1], label="stage2"),
            ControlSchedule.constant(times[1], times[2], label="stage3"),
            ControlSchedule.constant(times[2], times[3], label="stage4"),
        ])
        tp = ramp_time(times[0], theta, params.gamma)
        notes["trivial"] = True
        return StagePlan(theta, targets.eta, tp, ramp_time(times[1] - times[0], theta, params.gamma),
                         times, sched, params, targets, notes)

    if targets.theta is not None:
        theta = float(targets.theta)
        notes["theta_rule"] = "fixed by configuration"
    else:
        theta = targets.theta_min
        sweep = []
        while True:
            tp2, _ = lemma_ramp(theta, targets.eta, params, grid, cfg, times[1] - times[0],
                                targets.tolerance(grid))
            sched, tp, tp2 = _build_schedule(theta, y0_inf, params, times, tp2)
            plan = StagePlan(theta, targets.eta, tp, tp2, times, sched, params, targets, dict(notes))
            try:
                traj = solve(y0, sched, params, grid, cfg, 0.0, times[2], stride=10**9)
                sup = traj.final.sup_norm
            except Exception as exc:  # noqa: BLE001 - a failed candidate is just skipped
                sup = math.inf
                notes.setdefault("sweep_errors", []).append(f"theta={theta}: {exc}")
            sweep.append((theta, sup))
            if sup <= targets.auto_factor * targets.eta or 2 * theta > targets.theta_max:
                break
            theta *= 2.0
        notes["theta_rule"] = f"doubling sweep from {targets.theta_min}: first with stage-3 exit <= {targets.auto_factor} eta"
        notes["theta_sweep"] = sweep
    tp2, ramp_margin = lemma_ramp(theta, targets.eta, params, grid, cfg, times[1] - times[0],
                                  targets.tolerance(grid))
    notes["t_prime2_rule"] = "halved from min(stage/10, 0.1/theta^(gamma-1)) until the window holds from the discrete steady state"
    notes["t_prime2_margin"] = ramp_margin
    sched, tp, tp2 = _build_schedule(theta, y0_inf, params, times, tp2)
    if grid.n_cells < 8.0 * theta ** (params.gamma - 1.0):
        notes["resolution"] = (f"n_cells={grid.n_cells} < 8 theta^(gamma-1) = "
                               f"{8 * theta ** (params.gamma - 1):.0f}: boundary layer under-resolved")
    return StagePlan(theta, targets.eta, tp, tp2, times, sched, params, targets, notes)


@dataclass
class StageReport:
    stage: int
    name: str
    passed: bool
    margin: float
    tolerance: float
    measured: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extras = ", ".join(f"{k}={_fmt(v)}" for k, v in self.measured.items())
        return f"stage {self.stage} ({self.name}): {status} margin={self.margin:.4g} tol={self.tolerance:.3g}; {extras}"


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


@dataclass
class StrategyResult:
    plan: StagePlan
    trajectory: Trajectory
    reports: list[StageReport]
    profile: SteadyStateProfile | None = None
    terminal: local_control.OptimizeResult | None = None

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports)

    @property
    def final_l2(self) -> float:
        return dg.l2_norm(self.trajectory.final)


def _stage1_supersolution(plan: StagePlan, y0_inf: float, grid: Grid, cfg: SolverConfig) -> Trajectory:
    """Barrier from above: both boundaries at ``v_bar`` and initial value ``|y0|``.

    ``v_bar = |y0| + u t`` on ``[0, T']`` so the barrier stays spatially
    constant there, then it follows ``v`` on both sides.
    """
    t1 = plan.stage_times[0]
    tp = plan.t_prime
    th = plan.theta
    U = (th + 2.0 * y0_inf) / tp
    vbar = [(0.0, y0_inf), (tp, y0_inf + U * tp), (tp, th + y0_inf), (0.5 * t1, th), (t1, th)]
    s = ControlSchedule([(0.0, U), (tp, U), (tp, 0.0), (t1, 0.0)], vbar, vbar)
    ybar0 = Field(np.full(grid.n_nodes, y0_inf), grid)

    def lyap(f: Field) -> float:
        return dg.log_weighted_l2_A(f.with_values(f.values - th), th, plan.params.gamma)

    return solve(ybar0, s, plan.params, grid, cfg, 0.0, t1, stride=10**9, diagnostics={"log_lyapunov": lyap})


def _roundoff_floor(theta: float, gamma: float) -> float:
    """Log of the weighted norm of a uniform ``1e-12 * theta`` perturbation: below it values are noise."""
    s = dg.weight_exponent(theta, gamma)
    return 2.0 * math.log(1e-12 * theta) + s + math.log(-math.expm1(-s) / s)


def _nonincreasing_log(vals: np.ndarray, floor: float) -> bool:
    v = np.maximum(vals, floor)
    return bool(np.all(np.diff(v) <= 1e-9 * np.maximum(1.0, np.abs(v[1:]))))


def run_strategy(plan: StagePlan, y0: Field, grid: Grid, cfg: SolverConfig | None = None, *,
                 stride: int = 50, raise_on_fail: bool = False, terminal: bool = True,
                 optimizer_kw: dict | None = None) -> StrategyResult:
    """Run all stages, check each exit condition, and collect the reports.

    Raises :class:`StageFailed` at the first failing stage when
    ``raise_on_fail``; otherwise every stage runs and the reports carry the verdicts.
    """
    cfg = cfg or SolverConfig()
    params = plan.params
    t1, t2, t3, t4 = plan.stage_times
    tol = plan.targets.tolerance(grid)
    eta = plan.eta
    th = plan.theta
    reports: list[StageReport] = []

    def record(rep: StageReport) -> None:
        reports.append(rep)
        if raise_on_fail and not rep.passed:
            raise StageFailed(rep.stage, rep.line())

    if plan.notes.get("trivial"):
        traj = solve(y0, plan.schedule, params, grid, cfg, 0.0, t4, stride=stride)
        for k, name in enumerate(("raise", "lower", "passive", "terminal"), start=1):
            record(StageReport(k, name, True, math.inf, tol, {"vacuous": True}))
        return StrategyResult(plan, traj, reports)

    y0_inf = y0.sup_norm
    profile = solve_steady(th, params.gamma, grid)
    theta_vals = profile.samples.values
    theta_h = discrete_steady_state(th, params, grid).values

    # stage 1
    tr1 = solve(y0, plan.schedule, params, grid, cfg, 0.0, t1, stride=stride)
    y1 = tr1.final.values
    lower = float(np.min(y1 - theta_h))
    upper = float(np.min(th + eta - y1))
    sup_tr = _stage1_supersolution(plan, y0_inf, grid, cfg)
    lt = sup_tr.diagnostic_times
    lv = sup_tr.diagnostics["log_lyapunov"]
    window = lt >= 0.5 * t1 * 1.1
    lyap_ok = _nonincreasing_log(lv[window], _roundoff_floor(th, params.gamma))
    barrier_gap = float(np.min(sup_tr.final.values - y1))
    margin1 = min(lower + tol, upper + tol)
    record(StageReport(1, "raise above steady profile", margin1 >= 0 and lyap_ok, margin1, tol, {
        "min(y - steady_discrete)": lower,
        "min(y - steady)": float(np.min(y1 - theta_vals)),
        "min(theta + eta - y)": upper,
        "barrier_lyapunov_nonincreasing": lyap_ok,
        "min(barrier - y)": barrier_gap,
    }))

    # stage 2: ramp down, neighbourhood-of-zero window at the end of the ramp
    tl = plan.lemma_time
    tr2a = solve(tr1.final, plan.schedule, params, grid, cfg, t1, tl, stride=stride)
    y2 = tr2a.final.values
    low_gap = float(np.min(y2 - (theta_vals - th - eta)))
    high_gap = float(np.min(eta - y2))
    margin2 = min(low_gap, high_gap) + tol
    tr2b = solve(tr2a.final, plan.schedule, params, grid, cfg, tl, t2, stride=stride) if tl < t2 else None
    record(StageReport(2, "neighbourhood of zero", margin2 >= 0, margin2, tol, {
        "min(y - (steady - theta - eta))": low_gap,
        "min(eta - y)": high_gap,
        "min(y - (steady_discrete - theta - eta))": float(np.min(y2 - (theta_h - th - eta))),
        "check_time": tl,
    }))

    # stage 3: passive
    y_entry = (tr2b or tr2a).final
    tr3 = solve(y_entry, plan.schedule, params, grid, cfg, t2, t3, stride=stride)
    sup3 = tr3.final.sup_norm
    width = level_width(profile, eta)
    alpha = dg.residue_alpha(params.gamma)
    margin3 = plan.targets.stage3_factor * eta - sup3
    record(StageReport(3, "passive dissipation", margin3 >= 0, margin3, 0.0, {
        "sup|y|": sup3,
        "sup|y| / eta": sup3 / eta,
        "residue_width": width,
        "c_tilde_measured": width * th ** alpha,
        "residue_moment": dg.residue_moment(th, eta, width),
        "entry_moment": dg.moment_x_minus_1(tr2a.final),
    }))

    parts = [tr1, tr2a] + ([tr2b] if tr2b is not None else []) + [tr3]
    opt = None
    if terminal:
        kw = dict(optimizer_kw or {})
        target = plan.targets.terminal_target
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", local_control.SmallnessWarning)
            try:
                opt = local_control.optimize(tr3.final, params, t3, t4, target, **kw)
                tr4 = opt.trajectory
                norm4 = opt.terminal_norm
            except TargetMissed as exc:
                tr4 = exc.trajectory
                norm4 = exc.best_norm
        stride_idx = list(range(0, len(tr4.snapshots), stride)) + [len(tr4.snapshots) - 1]
        tr4 = replace(tr4, snapshots=[tr4.snapshots[i] for i in sorted(set(stride_idx))])
        parts.append(tr4)
        record(StageReport(4, "terminal steering", norm4 <= target, target - norm4, target, {
            "|y(T)|_L2": norm4,
            "uncontrolled |y(T)|_L2": opt.uncontrolled_norm if opt else math.nan,
            "iterations": opt.iterations if opt else -1,
            "sup|v|": opt.control_sup if opt else math.nan,
            "smallness_warning": bool(caught),
        }))
        schedule = ControlSchedule.concatenate([_until(plan.schedule, t3), tr4.schedule])
    else:
        schedule = plan.schedule
    traj = Trajectory.concatenate(parts, schedule)
    return StrategyResult(plan, traj, reports, profile, opt)


def _until(s: ControlSchedule, t_cut: float) -> ControlSchedule:
    def cut(k: np.ndarray) -> np.ndarray:
        return k[k[:, 0] <= t_cut] if k.size else k

    return ControlSchedule(cut(s.u_knots), cut(s.v_knots), cut(s.w_knots),
                           tuple(m for m in s.stage_marks if m[0] < t_cut))


def stage3_entry(theta: float, eta: float, params: ModelParams, grid: Grid,
                 profile: SteadyStateProfile | None = None) -> tuple[Field, dict]:
    """Residue data for the passive stage and its bookkeeping.

    The width is measured on the steady profile as the region more than
    ``eta`` below the top, and ``C~ = width * theta^alpha``.
    """
    profile = profile or solve_steady(theta, params.gamma, Grid(max(64, grid.n_cells // 16)))
    width = level_width(profile, eta)
    alpha = dg.residue_alpha(params.gamma)
    c_tilde = width * theta ** alpha
    y = dg.residue_data(grid, theta, eta, width)
    info = {
        "width": width,
        "alpha": alpha,
        "c_tilde": c_tilde,
        "moment_closed_form": 0.5 * c_tilde ** 2 * theta ** (1 - 2 * alpha) + eta,
    }
    return y, info

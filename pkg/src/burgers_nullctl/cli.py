"""Command-line front end.

Subcommands: ``steady-states``, ``dissipation``, ``strategy``, ``local-control``
and ``checks``. Settings come from built-in defaults, then an optional TOML
file (``--config``), then flags. Every figure is written next to a CSV with
exactly the plotted data; CSV files are UTF-8 with a header row and LF line
endings, and numbers are written with ``repr`` so identical runs give
identical bytes.
"""

from __future__ import annotations

import argparse
import copy
import csv
import math
import multiprocessing as mp
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from . import checks as ck
from . import control_pipeline as cp
from . import diagnostics as dg
from . import local_control, svg
from .errors import BurgersError, HypothesisWarning
from .model import ControlSchedule, Field, Grid, ModelParams, Trajectory
from .solver import SolverConfig
from .steady_state import solve_steady, tanh_profile

EXPERIMENTS = ("steady-states", "dissipation", "strategy", "local-control", "checks")

# per-experiment defaults; the [model], [grid] and [solver] tables are shared
DEFAULTS: dict[str, dict[str, Any]] = {
    "steady-states": {"model": {"gamma": 2.0}, "grid": {"n_cells": 1024},
                      "options": {"gammas": [1.5, 2.0, 3.0, 5.0], "thetas": [2.0, 5.0]}},
    "dissipation": {"model": {"gamma": 2.0, "horizon_T": 0.25}, "grid": {"n_cells": 1024},
                    "options": {"gammas": [1.75, 2.0, 2.5, 3.0], "theta": 32.0, "eta": 0.05,
                                "residue": "steady", "samples": 400}},
    "strategy": {"model": {"gamma": 2.5, "horizon_T": 1.0}, "grid": {"n_cells": 1024},
                 "options": {"initial": {"kind": "sine", "amplitude": 5.0, "mode": 3},
                             "eta": 0.05, "theta": None, "terminal_target": 1e-4,
                             "time_samples": 160, "space_samples": 65}},
    "local-control": {"model": {"gamma": 2.5, "horizon_T": 0.1}, "grid": {"n_cells": 128},
                      "options": {"initial": {"kind": "sine", "amplitude": 0.05, "mode": 1},
                                  "target": 1e-4, "time_samples": 100, "space_samples": 65}},
    "checks": {"model": {"gamma": 2.0}, "grid": {"n_cells": 128},
               "options": {"suites": list(ck.SUITES), "pairs": 100}},
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    experiment: str
    model: ModelParams
    n_cells: int
    solver: SolverConfig
    output_dir: Path
    seed: int = 0
    options: dict = field(default_factory=dict)

    @property
    def grid(self) -> Grid:
        return Grid(self.n_cells)


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _positive_list(opts: dict, key: str) -> None:
    vals = opts.get(key)
    if vals is None:
        return
    if not isinstance(vals, list) or not vals:
        raise ConfigError(f"{key} must be a non-empty list")
    for v in vals:
        if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
            raise ConfigError(f"{key}: every entry must be a positive number, got {v!r}")


def _validate_initial(init: dict) -> None:
    kind = init.get("kind", "sine")
    if kind not in ("sine", "zero", "constant"):
        raise ConfigError(f"initial.kind must be sine, zero or constant, got {kind!r}")
    amp = init.get("amplitude", 0.0)
    if not (isinstance(amp, (int, float)) and math.isfinite(amp)):
        raise ConfigError("initial.amplitude must be a finite number")
    if kind == "sine" and not (isinstance(init.get("mode", 1), int) and init.get("mode", 1) >= 1):
        raise ConfigError("initial.mode must be a positive integer")


def build_config(experiment: str, file_cfg: dict | None = None, flags: dict | None = None) -> RunConfig:
    """Layer defaults, file and flags, then validate everything before any compute."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}; choose from {', '.join(EXPERIMENTS)}")
    raw = _merge(DEFAULTS[experiment], file_cfg or {})
    flags = {k: v for k, v in (flags or {}).items() if v is not None}
    model = raw.setdefault("model", {})
    opts = raw.setdefault("options", {})
    if "flux" in flags:
        model["flux_variant"] = flags["flux"]
    if "t_final" in flags:
        model["horizon_T"] = flags["t_final"]
    if "cells" in flags:
        raw.setdefault("grid", {})["n_cells"] = flags["cells"]
    if "gamma" in flags:
        model["gamma"] = flags["gamma"]
        if "gammas" in opts:
            opts["gammas"] = [flags["gamma"]]
    if "theta" in flags:
        if "thetas" in opts:
            opts["thetas"] = [flags["theta"]]
        else:
            opts["theta"] = flags["theta"]
    if "out" in flags:
        raw["output_dir"] = flags["out"]
    if "seed" in flags:
        raw["seed"] = flags["seed"]

    unknown = set(raw) - {"experiment", "model", "grid", "solver", "options", "output_dir", "seed"}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        params = ModelParams(**model)
        n_cells = int(raw.get("grid", {}).get("n_cells", 128))
        Grid(n_cells)
        solver_keys = {f.name for f in fields(SolverConfig)}
        bad = set(raw.get("solver", {})) - solver_keys
        if bad:
            raise ConfigError(f"unknown solver keys: {sorted(bad)}")
        solver = SolverConfig(**raw.get("solver", {}))
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    _positive_list(opts, "gammas")
    _positive_list(opts, "thetas")
    for key in ("eta", "target", "terminal_target"):
        if key in opts and opts[key] is not None and not opts[key] > 0:
            raise ConfigError(f"{key} must be positive")
    if experiment == "dissipation":
        if opts.get("residue") not in ("steady", "zero"):
            raise ConfigError("residue must be 'steady' or 'zero'")
        if opts["residue"] == "steady" and not opts.get("theta", 0) > 0:
            raise ConfigError("theta must be positive for steady residue data")
        if any(g <= 1.0 for g in opts["gammas"]):
            raise ConfigError("gammas must exceed 1")
    if experiment == "strategy" and opts.get("theta") is not None and not opts["theta"] > 0:
        raise ConfigError("theta must be positive")
    if "initial" in opts:
        _validate_initial(opts["initial"])
    if experiment == "checks":
        bad = set(opts.get("suites", [])) - set(ck.SUITES)
        if bad:
            raise ConfigError(f"unknown suites: {sorted(bad)}")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a nonnegative integer")
    return RunConfig(experiment, params, n_cells, solver, Path(raw.get("output_dir", "out")), seed, opts)


# -- output helpers -------------------------------------------------------------

def _num(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_num(v) for v in r])


def worker_count(n_tasks: int) -> int:
    cap = os.environ.get("BURGERS_NULLCTL_THREADS")
    limit = os.cpu_count() or 1
    if cap:
        try:
            limit = max(1, int(cap))
        except ValueError:
            raise ConfigError(f"BURGERS_NULLCTL_THREADS must be an integer, got {cap!r}") from None
    return max(1, min(limit, n_tasks))


def pool_map(fn, tasks: list) -> list:
    """Run ``fn(*task)`` for each task, in a process pool when more than one worker is allowed.

    Results come back in task order so that the single collector writes
    deterministic files.
    """
    n = worker_count(len(tasks))
    if n == 1:
        return [fn(*t) for t in tasks]
    ctx = mp.get_context("fork") if "fork" in mp.get_all_start_methods() else None
    with ProcessPoolExecutor(max_workers=n, mp_context=ctx) as ex:
        futs = [ex.submit(fn, *t) for t in tasks]
        return [f.result() for f in futs]


def initial_field(init: dict, grid: Grid) -> Field:
    kind = init.get("kind", "sine")
    amp = float(init.get("amplitude", 0.0))
    if kind == "zero":
        return Field.zeros(grid)
    if kind == "constant":
        return Field(np.full(grid.n_nodes, amp), grid)
    vals = amp * np.sin(init.get("mode", 1) * np.pi * grid.x)
    vals[0] = vals[-1] = 0.0
    return Field(vals, grid)


def _sample_indices(n: int, k: int) -> np.ndarray:
    return np.unique(np.linspace(0, n - 1, max(2, min(k, n))).round().astype(int))


def _signal_rows(s: ControlSchedule) -> list[tuple[float, float, float]]:
    """``(t, u, v)`` at every knot time; a jump gives two rows, left limit first."""
    ts = np.unique(np.concatenate([k[:, 0] for k in (s.u_knots, s.v_knots) if k.size] or [np.zeros(1)]))
    rows = []
    for t in ts:
        ul, ur = dg._one_sided(s.u_knots, float(t)) if s.u_knots.size else (0.0, 0.0)
        vl, vr = dg._one_sided(s.v_knots, float(t)) if s.v_knots.size else (0.0, 0.0)
        rows.append((float(t), ul, vl))
        if ul != ur or vl != vr:
            rows.append((float(t), ur, vr))
    return rows


def _trajectory_block(traj: Trajectory, n_t: int, n_x: int):
    ti = _sample_indices(len(traj.snapshots), n_t)
    xi = _sample_indices(traj.grid.n_nodes, n_x)
    t = traj.times[ti]
    x = traj.grid.x[xi]
    Y = traj.values[np.ix_(ti, xi)]
    return t, x, Y


def _write_trajectory(out: Path, traj: Trajectory, n_t: int, n_x: int):
    t, x, Y = _trajectory_block(traj, n_t, n_x)
    write_csv(out / "trajectory.csv", ["t", "x", "y"],
              ((t[i], x[j], Y[i, j]) for i in range(t.size) for j in range(x.size)))
    return t, x, Y


def _warn_line(msg: str) -> None:
    print(f"WARNING: {msg}", file=sys.stderr)


# -- commands -------------------------------------------------------------------

def _steady_task(gamma: float, theta: float, n_cells: int):
    p = solve_steady(theta, gamma, Grid(n_cells))
    return gamma, theta, p.samples.values.copy(), p.slope_right, p.in_slope_bracket(), p.log_slope_excess


def cmd_steady_states(cfg: RunConfig) -> list[Path]:
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    grid = cfg.grid
    tasks = [(float(g), float(th), cfg.n_cells) for g in cfg.options["gammas"] for th in cfg.options["thetas"]]
    results = pool_map(_steady_task, tasks)
    rows = []
    ax = svg.Axes("steady states", "x", "value")
    print(f"{'gamma':>6} {'theta':>6} {'slope_right':>16} {'-theta^g-theta':>16} {'-theta^g':>14}  bracket  tanh_dev")
    for g, th, vals, C, ok, _ in results:
        rows.extend((g, th, x, v) for x, v in zip(grid.x, vals))
        ax.add(f"gamma={g:g} theta={th:g}", grid.x, vals)
        dev = ""
        if g == 2.0:
            dev = f"{float(np.max(np.abs(vals - tanh_profile(th, grid.x)))):.2e}"
        print(f"{g:6g} {th:6g} {C:16.8g} {-th ** g - th:16.8g} {-th ** g:14.8g}  {'ok' if ok else 'VIOLATED':7}  {dev}")
    write_csv(out / "profiles.csv", ["gamma", "theta", "x", "value"], rows)
    svg.line_plot(out / "steady_states.svg", ax)
    return [out / "profiles.csv", out / "steady_states.svg"]


def _dissipation_task(gamma: float, theta: float, eta: float, residue: str, n_cells: int, t_final: float,
                      samples: int, solver: SolverConfig):
    from .solver import solve

    params = ModelParams(gamma, horizon_T=t_final)
    grid = Grid(n_cells)
    if residue == "zero":
        y0 = Field.zeros(grid)
    else:
        y0, _ = cp.stage3_entry(theta, eta, params, grid)
    traj = solve(y0, ControlSchedule(), params, grid, solver, 0.0, t_final)
    idx = _sample_indices(len(traj.snapshots), samples)
    t = traj.times[idx]
    sup = np.array([traj.snapshots[i].sup_norm for i in idx])
    t_half = dg.time_to_fraction(traj, 0.5) if y0.sup_norm > 0 else 0.0
    rep = dg.smoothing_bound_check(traj, gamma)
    return gamma, t, sup, t_half, rep.verdict, rep.margin, rep.notes.get("decay_exponent")


def cmd_dissipation(cfg: RunConfig) -> list[Path]:
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    o = cfg.options
    tasks = [(float(g), float(o.get("theta", 0.0)), float(o["eta"]), o["residue"], cfg.n_cells,
              cfg.model.horizon_T, int(o["samples"]), cfg.solver) for g in o["gammas"]]
    results = pool_map(_dissipation_task, tasks)
    rows = []
    ax = svg.Axes("residue dissipation, zero controls", "t", "sup|y|", logx=True, logy=True)
    print(f"{'gamma':>6} {'time_to_half':>14}  smoothing_check")
    halves = []
    for g, t, sup, t_half, verdict, margin, p in results:
        rows.extend((g, a, b) for a, b in zip(t, sup))
        ax.add(f"gamma={g:g}", t, sup)
        halves.append(t_half)
        extra = f"margin={margin:.3g}" if verdict != dg.NOT_APPLICABLE else f"decay exponent {p:.3g}" if p else ""
        print(f"{g:6g} {t_half:14.6g}  {verdict} {extra}")
    gs = [r[0] for r in results]
    order = np.argsort(gs)
    mono = bool(np.all(np.diff(np.array(halves)[order]) <= 0))
    print(f"time-to-half nonincreasing in gamma: {mono}")
    write_csv(out / "supnorm.csv", ["gamma", "t", "sup_abs_y"], rows)
    svg.line_plot(out / "dissipation.svg", ax)
    return [out / "supnorm.csv", out / "dissipation.svg"]


def _banner(params: ModelParams) -> str | None:
    status = cp.hypothesis_status(params)
    if status:
        msg = f"{status}; results carry no theorem claim"
        _warn_line(msg)
        return msg
    return None


def cmd_strategy(cfg: RunConfig) -> tuple[list[Path], int]:
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    o = cfg.options
    grid = cfg.grid
    y0 = initial_field(o["initial"], grid)
    banner = _banner(cfg.model)
    targets = cp.StrategyTargets(eta=float(o["eta"]), theta=o.get("theta"),
                                 terminal_target=float(o["terminal_target"]))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", HypothesisWarning)
        plan = cp.plan_strategy(y0, cfg.model, grid, targets, cfg=cfg.solver)
    if "resolution" in plan.notes:
        _warn_line(plan.notes["resolution"])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", local_control.SmallnessWarning)
        result = cp.run_strategy(plan, y0, grid, cfg.solver)

    t, x, Y = _write_trajectory(out, result.trajectory, int(o["time_samples"]), int(o["space_samples"]))
    write_csv(out / "controls.csv", ["t", "u", "v"], _signal_rows(result.trajectory.schedule))
    lines = []
    if banner:
        lines.append(f"BANNER: {banner}")
    lines.append(f"theta={plan.theta:g} eta={plan.eta:g} T'={plan.t_prime:.6g} T'_2={plan.t_prime2:.6g} "
                 f"stage_times={list(plan.stage_times)}")
    for k in sorted(plan.notes):
        lines.append(f"note {k}: {plan.notes[k]}")
    lines.extend(r.line() for r in result.reports)
    lines.append(f"final |y(T)|_L2 = {result.final_l2:.6g} (target {targets.terminal_target:g})")
    lines.append(f"overall: {'PASS' if result.passed else 'FAIL'}")
    (out / "stage_report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    print("\n".join(lines))
    marks = [(plan.stage_times[i], f"s{i + 2}") for i in range(3)]
    svg.heat_map(out / "strategy.svg", "y(t, x) along the staged strategy", t, x, Y, marks)
    code = 0
    if not result.passed:
        failing = [r for r in result.reports if not r.passed]
        for r in failing:
            print(f"stage {r.stage} failed with margin {r.margin:.4g}", file=sys.stderr)
        code = 0 if banner else 1
    return [out / "trajectory.csv", out / "controls.csv", out / "stage_report.txt", out / "strategy.svg"], code


def cmd_local_control(cfg: RunConfig) -> tuple[list[Path], int]:
    """Boundary steering of a small state on ``[0, T]`` by the adjoint optimizer alone."""
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    o = cfg.options
    grid = cfg.grid
    y0 = initial_field(o["initial"], grid)
    _banner(cfg.model)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", local_control.SmallnessWarning)
        res = local_control.optimize(y0, cfg.model, 0.0, cfg.model.horizon_T, float(o["target"]),
                                     raise_on_miss=False, dt_max=cfg.solver.dt_max,
                                     cfl_safety=cfg.solver.cfl_safety, theta_method=cfg.solver.theta_method,
                                     backend=cfg.solver.backend)
    for w in caught:
        _warn_line(str(w.message))
    tv = res.trajectory.schedule.v_knots
    write_csv(out / "controls.csv", ["t", "v"], ((a, b) for a, b in tv))
    _write_trajectory(out, res.trajectory, int(o["time_samples"]), int(o["space_samples"]))
    ax = svg.Axes("left boundary control", "t", "v(t)")
    ax.add("v", tv[:, 0], tv[:, 1])
    svg.line_plot(out / "local_control.svg", ax)
    ok = res.terminal_norm <= float(o["target"])
    lines = [f"|y(T)|_L2 = {res.terminal_norm:.6g} (uncontrolled {res.uncontrolled_norm:.6g}, target {o['target']:g})",
             f"iterations={res.iterations} alphas={[float(a) for a in res.alphas]} sup|v|={res.control_sup:.6g}",
             f"overall: {'PASS' if ok else 'FAIL'}"]
    (out / "local_report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    print("\n".join(lines))
    return [out / "controls.csv", out / "trajectory.csv", out / "local_control.svg", out / "local_report.txt"], 0 if ok else 1


def suite_kwargs(cfg: RunConfig) -> dict[str, dict]:
    n = cfg.n_cells
    return {
        "oracle": {},
        "bracket": {},
        "layer": {},
        "comparison": {"n_cells": n, "seed": cfg.seed, "n_pairs": int(cfg.options["pairs"])},
        "gradient": {"seed": cfg.seed},
        "convergence": {"base_cells": min(n, ck.CONVERGENCE_MIN_CELLS)},
        "bounds": {},
    }


def cmd_checks(cfg: RunConfig) -> int:
    kw = suite_kwargs(cfg)
    names = list(cfg.options["suites"])
    results = pool_map(ck.run_suite, [(n, kw[n]) for n in names])
    print(f"{'suite':<12} {'verdict':<15} {'margin':<18} {'time':>8}  detail")
    for r in results:
        print(r.row())
    ok = all(r.ok for r in results)
    print("all checks passed" if ok else "CHECKS FAILED")
    return 0 if ok else 1


# -- entry point ----------------------------------------------------------------------

def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="burgers-nullctl", description=__doc__.splitlines()[0])
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", type=Path, help="TOML file with [model], [grid], [solver], [options] tables")
    p.add_argument("--gamma", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--cells", type=int)
    p.add_argument("--t-final", type=float, dest="t_final")
    p.add_argument("--out", type=Path)
    p.add_argument("--seed", type=int)
    p.add_argument("--flux", choices=("E", "F"))
    return p


def load_file(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        file_cfg = load_file(args.config)
        exp = file_cfg.pop("experiment", args.experiment)
        if exp != args.experiment:
            raise ConfigError(f"config is for {exp!r}, command is {args.experiment!r}")
        flags = {k: getattr(args, k) for k in ("gamma", "theta", "cells", "t_final", "out", "seed", "flux")}
        cfg = build_config(args.experiment, file_cfg, flags)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        if cfg.experiment == "steady-states":
            cmd_steady_states(cfg)
            return 0
        if cfg.experiment == "dissipation":
            cmd_dissipation(cfg)
            return 0
        if cfg.experiment == "strategy":
            return cmd_strategy(cfg)[1]
        if cfg.experiment == "local-control":
            return cmd_local_control(cfg)[1]
        return cmd_checks(cfg)
    except BurgersError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

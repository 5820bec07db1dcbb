"""Time the forward step, the adjoint step and a full solve on every available backend.

    python benchmarks/bench_kernels.py [--cells 128 1024 8192] [--repeat 5]

Prints one row per (kernel, n_cells, backend) with the best-of-``repeat``
time per call and the speed-up of the compiled backend over numpy.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from burgers_nullctl import kernels
from burgers_nullctl.model import ControlSchedule, Field, Grid, ModelParams
from burgers_nullctl.solver import SolverConfig, solve


def _best(fn, repeat: int, inner: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        for _ in range(inner):
            fn()
        best = min(best, (time.perf_counter() - t0) / inner)
    return best


def bench(n: int, backend: str, repeat: int) -> dict[str, float]:
    k = kernels.get(backend)
    grid = Grid(n)
    h = grid.h
    y = 2.0 * np.sin(3 * np.pi * grid.x)
    out = np.empty_like(y)
    lam = np.random.default_rng(0).standard_normal(grid.n_nodes)
    lam_old = np.empty_like(lam)
    dt = 0.5 * h / (2.5 * 2.0 ** 1.5)
    inner = max(10, 200_000 // n)
    res = {
        "step": _best(lambda: k.imex_step(y, out, dt, h, 2.5, 0, 1.0, 0.1, None, 0.0, 0.0), repeat, inner),
        "adjoint": _best(lambda: k.imex_adjoint(y, lam, lam_old, dt, h, 2.5, 0, 1.0, 1e-8), repeat, inner),
    }
    params = ModelParams(2.5, horizon_T=0.01)
    y0 = Field(y, grid)
    cfg = SolverConfig(backend=backend)
    res["solve"] = _best(lambda: solve(y0, ControlSchedule(), params, grid, cfg, 0.0, 0.01, stride=10**9), 1, 1)
    return res


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cells", type=int, nargs="+", default=[128, 1024, 8192])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = kernels.available()
    print(f"backends: {backends}")
    print(f"{'kernel':<8} {'n_cells':>8} " + " ".join(f"{b:>12}" for b in backends) + "   speedup")
    for n in args.cells:
        rows = {b: bench(n, b, args.repeat) for b in backends}
        for name in ("step", "adjoint", "solve"):
            times = [rows[b][name] for b in backends]
            speed = ""
            if "cython" in rows and "python" in rows:
                speed = f"{rows['python'][name] / rows['cython'][name]:8.1f}x"
            print(f"{name:<8} {n:>8} " + " ".join(f"{t * 1e6:10.1f}us" for t in times) + f"  {speed}")


if __name__ == "__main__":
    main()

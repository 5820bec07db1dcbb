"""Vectorized numpy implementation of the time-stepping kernels.

Used when the compiled extension is unavailable (or forced with
``BURGERS_NULLCTL_BACKEND=python``). The contract is identical to
``_ckernels``: arrays are full nodal vectors of length ``n + 1``; variant
codes are 0 (E), 1 (F) and 2 (advection off).
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded

NAME = "python"


def eo_split(y: np.ndarray, gamma: float, variant: int) -> tuple[np.ndarray, np.ndarray]:
    """Engquist-Osher splitting ``f = f+ + f-`` with ``f+' >= 0 >= f-'``."""
    if variant == 0:
        return np.sign(y) * np.abs(y) ** gamma, np.zeros_like(y)
    if variant == 1:
        return np.maximum(y, 0.0) ** gamma, np.maximum(-y, 0.0) ** gamma
    return np.zeros_like(y), np.zeros_like(y)


def split_speed(y: np.ndarray, gamma: float, variant: int, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """Derivatives of the two halves of :func:`eo_split`, with optional smoothing of ``|y|``."""
    if variant == 2:
        return np.zeros_like(y), np.zeros_like(y)
    if eps > 0.0:
        mag = gamma * (y * y + eps * eps) ** (0.5 * (gamma - 1.0))
    else:
        mag = gamma * np.abs(y) ** (gamma - 1.0)
    if variant == 0:
        return mag, np.zeros_like(y)
    s = np.sign(y)
    return np.where(s > 0, mag, 0.0), np.where(s < 0, -mag, 0.0)


def _banded(m: int, lam: float) -> np.ndarray:
    ab = np.empty((3, m))
    ab[0, :] = -lam
    ab[1, :] = 1.0 + 2.0 * lam
    ab[2, :] = -lam
    return ab


def imex_step(y, out, dt, h, gamma, variant, theta, u, forcing, v_new, w_new) -> float:
    """One IMEX step; writes the new state into ``out`` and returns ``max |out|``."""
    fp, fm = eo_split(y, gamma, variant)
    F = fp[:-1] + fm[1:]
    r = dt / h
    mu = dt / (h * h)
    yi = y[1:-1]
    rhs = yi - r * (F[1:] - F[:-1]) + (1.0 - theta) * mu * (y[2:] - 2.0 * yi + y[:-2]) + dt * u
    if forcing is not None:
        rhs = rhs + dt * forcing[1:-1]
    rhs[0] += theta * mu * v_new
    rhs[-1] += theta * mu * w_new
    out[1:-1] = solve_banded((1, 1), _banded(rhs.size, theta * mu), rhs,
                             overwrite_b=True, check_finite=False)
    out[0] = v_new
    out[-1] = w_new
    return float(np.max(np.abs(out)))


def imex_adjoint(y, lam_new, lam_old, dt, h, gamma, variant, theta, eps) -> float:
    """Transpose of the linearized step around ``y``.

    ``lam_new`` is the sensitivity with respect to the state after the step;
    the sensitivity with respect to the state before is written to
    ``lam_old``. Returns the sensitivity with respect to the new left
    boundary value.
    """
    r = dt / h
    mu = dt / (h * h)
    c = (1.0 - theta) * mu
    p = solve_banded((1, 1), _banded(lam_new.size - 2, theta * mu), lam_new[1:-1],
                     check_finite=False)
    gv = float(lam_new[0] + theta * mu * p[0])
    dp, dm = split_speed(y, gamma, variant, eps)
    P = np.zeros_like(lam_new)
    P[1:-1] = p
    lam_old[:] = 0.0
    lam_old[1:-1] = P[1:-1] * (1.0 - r * (dp[1:-1] - dm[1:-1]) - 2.0 * c)
    lam_old[1:] += P[:-1] * (c - r * dm[1:])
    lam_old[:-1] += P[1:] * (c + r * dp[:-1])
    return gv

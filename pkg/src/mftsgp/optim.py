"""Nelder-Mead search over log correlation lengths."""
from __future__ import annotations

import logging
from typing import Callable

import numpy as np
from scipy.optimize import minimize

logger = logging.getLogger(__name__)

START_LENGTH = 0.5
SIMPLEX_SIZE = 0.1
EVALS_PER_DIM = 500
# lengths are clipped to this box; outside it the kernel is either a
# near-identity or a near-constant matrix and the objective is flat
LOG_BOUNDS = (np.log(1e-3), np.log(1e3))


class OptimizationError(RuntimeError):
    pass


def minimize_log_lengths(
    objective: Callable[[np.ndarray], float],
    d: int,
    start: float | np.ndarray = START_LENGTH,
    simplex_size: float = SIMPLEX_SIZE,
    max_evals: int | None = None,
) -> tuple[np.ndarray, float]:
    """Minimize ``objective(lengths)`` with Nelder-Mead in log-length space.

    Non-finite objective values are treated as ``+inf``. Returns the best
    lengths found and the objective value there.
    """
    x0 = np.log(np.broadcast_to(np.asarray(start, dtype=float), (d,)).copy())
    max_evals = EVALS_PER_DIM * d if max_evals is None else max_evals
    best = {"x": None, "f": np.inf}
    n_finite = 0

    def wrapped(theta):
        nonlocal n_finite
        theta = np.clip(theta, *LOG_BOUNDS)
        try:
            val = float(objective(np.exp(theta)))
        except (np.linalg.LinAlgError, ValueError, FloatingPointError):
            val = np.inf
        if not np.isfinite(val):
            return np.inf
        n_finite += 1
        if val < best["f"]:
            best["x"], best["f"] = theta.copy(), val
        return val

    simplex = np.vstack([x0, x0 + simplex_size * np.eye(d)])
    minimize(
        wrapped,
        x0,
        method="Nelder-Mead",
        options={"initial_simplex": simplex, "maxfev": max_evals, "xatol": 1e-4, "fatol": 1e-10},
    )
    if best["x"] is None:
        raise OptimizationError("objective was non-finite at every evaluated point")
    logger.debug("Nelder-Mead: %d finite evaluations, best %.6g", n_finite, best["f"])
    return np.exp(best["x"]), best["f"]

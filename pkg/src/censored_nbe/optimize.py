"""Box-constrained Nelder-Mead (scipy) with a box-aware starting simplex."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .exceptions import InvalidArgument

__all__ = ["OptimizeResult", "nelder_mead"]


@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    nit: int
    nfev: int
    converged: bool


def nelder_mead(f, x0, box, xtol=1e-5, max_iter=500, step=0.1) -> OptimizeResult:
    """Minimize ``f`` over ``box = (lower, upper)``.

    Trial points are clipped into the box. Stops when every vertex lies
    within ``xtol`` of the best one (coordinate-wise) or after ``max_iter``
    iterations, and returns the best vertex. ``step`` sets the initial edge as a fraction of the
    box width (or of ``|x0|`` when the box is unbounded).
    """
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    if lo.shape != (n,) or hi.shape != (n,) or np.any(lo > hi):
        raise InvalidArgument("box bounds must match x0 and satisfy lower <= upper")
    if np.any(x0 < lo) or np.any(x0 > hi):
        raise InvalidArgument("starting point outside the box")

    def fx(x):
        v = f(x)
        return float(v) if np.isfinite(v) else np.inf

    width = np.where(np.isfinite(hi - lo), hi - lo, np.maximum(np.abs(x0), 1.0))
    sim = np.empty((n + 1, n))
    sim[0] = x0
    for i in range(n):
        e = np.zeros(n)
        e[i] = step * width[i]
        # step inward if the forward vertex would leave the box
        sim[i + 1] = x0 + e if x0[i] + e[i] <= hi[i] else x0 - e
    sim = np.clip(sim, lo, hi)
    res = minimize(fx, x0, method="Nelder-Mead", bounds=list(zip(lo, hi)),
                   options=dict(initial_simplex=sim, xatol=xtol, fatol=np.inf,
                                maxiter=max_iter, maxfev=np.inf))
    return OptimizeResult(np.asarray(res.x, dtype=float), float(res.fun), int(res.nit),
                          int(res.nfev), res.status == 0)

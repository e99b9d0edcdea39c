"""Nelder-Mead downhill simplex minimizer."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass
class SimplexResult:
    x: np.ndarray
    fun: float
    iterations: int
    evaluations: int
    converged: bool
    diameter: float


def nelder_mead(fun: Callable[[np.ndarray], float], x0, scale: float | np.ndarray,
                xtol: float = 1e-9, max_iter: int = 200,
                reflect: float = 1.0, expand: float = 2.0,
                contract: float = 0.5, shrink: float = 0.5) -> SimplexResult:
    """Minimize ``fun`` from ``x0`` with an axis-aligned initial simplex.

    Stops when the simplex diameter (largest vertex separation) drops below
    ``xtol`` or after ``max_iter`` iterations.
    """
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    steps = np.broadcast_to(np.asarray(scale, dtype=float), (n,))
    pts = np.tile(x0, (n + 1, 1))
    for i in range(n):
        pts[i + 1, i] += steps[i]
    vals = np.array([fun(p) for p in pts])
    nfev = n + 1

    def diameter():
        d = pts[:, None, :] - pts[None, :, :]
        return float(np.sqrt((d * d).sum(axis=-1)).max())

    it = 0
    converged = False
    while True:
        order = np.argsort(vals, kind="stable")
        pts, vals = pts[order], vals[order]
        if diameter() < xtol:
            converged = True
            break
        if it >= max_iter:
            break
        it += 1
        centroid = pts[:-1].mean(axis=0)
        worst = pts[-1]
        xr = centroid + reflect * (centroid - worst)
        fr = fun(xr)
        nfev += 1
        if fr < vals[0]:
            xe = centroid + expand * (xr - centroid)
            fe = fun(xe)
            nfev += 1
            if fe < fr:
                pts[-1], vals[-1] = xe, fe
            else:
                pts[-1], vals[-1] = xr, fr
        elif fr < vals[-2]:
            pts[-1], vals[-1] = xr, fr
        else:
            if fr < vals[-1]:
                xc = centroid + contract * (xr - centroid)
            else:
                xc = centroid + contract * (worst - centroid)
            fc = fun(xc)
            nfev += 1
            if fc < min(fr, vals[-1]):
                pts[-1], vals[-1] = xc, fc
            else:
                for i in range(1, n + 1):
                    pts[i] = pts[0] + shrink * (pts[i] - pts[0])
                    vals[i] = fun(pts[i])
                nfev += n
    return SimplexResult(pts[0].copy(), float(vals[0]), it, nfev, converged, diameter())

"""Piecewise adaptive Gauss-Kronrod integration (QUADPACK via scipy)."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class QuadResult:
    value: float
    abs_error_estimate: float

    def __post_init__(self):
        if not self.abs_error_estimate >= 0:
            raise ValueError("error estimate must be non-negative")

    def __float__(self) -> float:
        return self.value


def integrate_panels(f, breakpoints, tol: float = 1e-12, limit: int = 200) -> QuadResult:
    """Integrate ``f`` over consecutive panels ``[p_i, p_{i+1}]``.

    Raises QuadratureError when the summed error estimate exceeds ``tol``.
    """
    pts = np.unique(np.asarray(breakpoints, dtype=float))
    total = 0.0
    err = 0.0
    panel_tol = tol / max(1, pts.size - 1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for lo, hi in zip(pts[:-1], pts[1:]):
            v, e = integrate.quad(f, lo, hi, epsabs=0.1 * panel_tol, epsrel=1e-13, limit=limit)
            total += v
            err += e
    if err > tol:
        raise QuadratureError(f"quadrature error estimate {err:.3g} exceeds {tol:.3g}")
    return QuadResult(total, err)

"""Deterministic quadrature of the Levy-measure integrals used by the estimators."""

from __future__ import annotations

import math

from .kernels import TruncationKernel
from .model import GaussianCP, LevyMeasure, NoJumps, TemperedStable
from .quad import QuadResult, integrate_panels

Z_MAX = 50.0


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")


def _singular_head(f, alpha: float, upper: float = 1.0, tol: float = 1e-12) -> QuadResult:
    """int_0^upper f(v) v^-alpha dv via v = u^(1/(1-alpha)), smooth in u."""
    p = 1.0 / (1.0 - alpha)
    return integrate_panels(lambda u: f(u**p) * p, [0.0, upper ** (1.0 - alpha)], tol=tol)


def gamma_tail(alpha: float) -> QuadResult:
    """int_0^inf exp(-z) z^-alpha dz, i.e. Gamma(1 - alpha)."""
    _check_alpha(alpha)
    head = _singular_head(lambda z: math.exp(-z), alpha)
    tail = integrate_panels(lambda z: math.exp(-z) * z ** (-alpha), [1.0, 5.0, 15.0, Z_MAX])
    return QuadResult(head.value + tail.value, head.abs_error_estimate + tail.abs_error_estimate)


def kernel_fractional_moment(kernel: TruncationKernel, alpha: float, tol: float = 1e-8) -> QuadResult:
    """int_0^inf kernel(v) v^-alpha dv."""
    _check_alpha(alpha)
    if kernel.kind == "none":
        raise ValueError("the constant kernel has an infinite fractional moment")
    head = _singular_head(lambda v: float(kernel(v)), alpha, tol=0.1 * tol)
    pts = [1.0] + [b for b in kernel.breakpoints if b > 1.0]
    if len(pts) == 1:
        return head
    body = integrate_panels(lambda v: kernel(v) * v ** (-alpha), pts, tol=0.9 * tol)
    return QuadResult(head.value + body.value, head.abs_error_estimate + body.abs_error_estimate)


def trunc_compensator_at(gamma_x: float, threshold: float, kernel: TruncationKernel,
                         levy: LevyMeasure, tol: float = 1e-10) -> float:
    """int z gamma_x (1 - kernel(gamma_x z / threshold)) F(z) dz."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    if isinstance(levy, NoJumps):
        raise ValueError("no Levy measure to integrate")
    if kernel.kind == "none" or gamma_x == 0.0:
        return 0.0
    scale = threshold / abs(gamma_x)

    def weight(z):
        return 1.0 - kernel(gamma_x * z / threshold)

    if isinstance(levy, TemperedStable):
        a = levy.alpha
        lo = scale
        if lo >= Z_MAX:
            return 0.0
        pts = [b * scale for b in kernel.breakpoints if b * scale < Z_MAX]
        pts = [lo] + pts
        # geometric splits keep the z^-alpha decay resolved after the last breakpoint
        z = max(pts)
        while z * 4.0 < Z_MAX:
            z *= 4.0
            pts.append(z)
        pts.append(Z_MAX)
        res = integrate_panels(lambda z: weight(z) * math.exp(-z) * z ** (-a), pts, tol=tol)
        return gamma_x * res.value

    if isinstance(levy, GaussianCP):
        if levy.lam == 0.0:
            return 0.0
        lo, hi = levy.mu_j - 40.0 * levy.sigma_j, levy.mu_j + 40.0 * levy.sigma_j
        bps = [s * b * scale for b in kernel.breakpoints for s in (-1.0, 1.0)]
        pts = [lo, hi, levy.mu_j] + [p for p in bps if lo < p < hi]
        dens = levy.density
        res = integrate_panels(lambda z: z * weight(z) * float(dens(z)), pts, tol=tol)
        return gamma_x * res.value
    raise TypeError(f"unsupported Levy measure {levy!r}")


def trunc_compensator(gamma_x: float, dt: float, beta: float, c: float,
                      kernel: TruncationKernel, levy: LevyMeasure) -> float:
    """Truncated-jump drift at threshold ``c * dt**beta`` (per unit time)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return trunc_compensator_at(gamma_x, c * dt**beta, kernel, levy)


def stable_correction_constant(alpha: float, beta: float, c: float, gamma: float,
                               kernel: TruncationKernel, dt: float, j: float | None = None) -> float:
    """dt^(beta (1-alpha)) c^(1-alpha) gamma^alpha * int_0^inf kernel(v) v^-alpha dv."""
    if j is None:
        j = kernel_fractional_moment(kernel, alpha).value
    return dt ** (beta * (1.0 - alpha)) * c ** (1.0 - alpha) * gamma**alpha * j


__all__ = [
    "QuadResult",
    "gamma_tail",
    "kernel_fractional_moment",
    "trunc_compensator",
    "trunc_compensator_at",
    "stable_correction_constant",
]

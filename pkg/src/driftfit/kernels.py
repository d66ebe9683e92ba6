"""Truncation kernels: the smooth plateau function and oscillating kernels.

``phi0`` equals 1 on [-1, 1], vanishes outside [-2, 2] and is C-infinity.
The oscillating kernel of order ``l`` is

    phi_l(x) = (1/c_l) * sum_{k=1}^{l} C(l, k) (-1)^(k+1) (1/k) phi1(x / k),
    phi1(x)  = (d phi0(x) - phi0(x / d)) / (d - 1),
    c_l      = sum_{k=1}^{l} C(l, k) (-1)^(k+1) / k,

which is 1 on [-1, 1] and vanishes for |x| >= 2 l d.
"""

from __future__ import annotations

import argparse
import csv
import math
from dataclasses import dataclass

import numpy as np

from .quad import integrate_panels

KINDS = ("phi0", "osc", "indicator", "none")


def _g(u):
    out = np.zeros_like(u)
    pos = u > 0
    out[pos] = np.exp(-1.0 / u[pos])
    return out


def _phi0_scalar(x: float) -> float:
    a = abs(x)
    if a <= 1.0:
        return 1.0
    if a >= 2.0:
        return 0.0
    num = math.exp(-1.0 / (2.0 - a))
    return num / (num + math.exp(-1.0 / (a - 1.0)))


def _osc_scalar(x: float, l: int, d: float) -> float:
    if abs(x) <= 1.0:
        return 1.0
    total = 0.0
    for k in range(1, l + 1):
        u = x / k
        phi1 = (d * _phi0_scalar(u) - _phi0_scalar(u / d)) / (d - 1.0)
        total += math.comb(l, k) * (-1) ** (k + 1) / k * phi1
    return total / osc_normalizer(l)


def eval_phi0(x):
    if isinstance(x, (float, int)):
        return _phi0_scalar(float(x))
    x = np.asarray(x, dtype=float)
    a = np.abs(x)
    out = np.where(a <= 1.0, 1.0, 0.0)
    mid = (a > 1.0) & (a < 2.0)
    if np.any(mid):
        am = a[mid]
        num = _g(2.0 - am)
        out[mid] = num / (num + _g(am - 1.0))
    return out if out.ndim else float(out)


def osc_normalizer(l: int) -> float:
    return sum(math.comb(l, k) * (-1) ** (k + 1) / k for k in range(1, l + 1))


def eval_phi1(x, d: float):
    x = np.asarray(x, dtype=float)
    return (d * eval_phi0(x) - eval_phi0(x / d)) / (d - 1.0)


def eval_oscillating(x, l: int, d: float):
    if l < 1 or d <= 1:
        raise ValueError("need l >= 1 and d > 1")
    if isinstance(x, (float, int)):
        return _osc_scalar(float(x), l, d)
    x = np.asarray(x, dtype=float)
    total = np.zeros_like(x)
    for k in range(1, l + 1):
        total = total + math.comb(l, k) * (-1) ** (k + 1) / k * eval_phi1(x / k, d)
    out = np.where(np.abs(x) <= 1.0, 1.0, total / osc_normalizer(l))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class TruncationKernel:
    """``kind`` is one of phi0, osc (needs ``l``, ``d``), indicator or none."""

    kind: str = "phi0"
    l: int = 0
    d: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "osc" and (self.l < 1 or self.d <= 1):
            raise ValueError("oscillating kernel needs l >= 1 and d > 1")

    @classmethod
    def phi0(cls) -> "TruncationKernel":
        return cls("phi0")

    @classmethod
    def oscillating(cls, l: int, d: float) -> "TruncationKernel":
        return cls("osc", int(l), float(d))

    @property
    def support_bound(self) -> float:
        return {"phi0": 2.0, "indicator": 1.0, "none": math.inf}.get(
            self.kind, 2.0 * self.l * self.d
        )

    @property
    def breakpoints(self) -> list[float]:
        """Positive abscissae where the kernel changes regime."""
        if self.kind == "phi0":
            return [1.0, 2.0]
        if self.kind == "indicator":
            return [1.0]
        if self.kind == "none":
            return []
        return sorted({k * b for k in range(1, self.l + 1)
                       for b in (1.0, 2.0, self.d, 2.0 * self.d)})

    @property
    def coefficient_sum(self) -> float:
        """Sum of |coefficients| of the phi1 terms, a bound on |kernel| / max|phi1|."""
        if self.kind != "osc":
            return 1.0
        return sum(math.comb(self.l, k) / k for k in range(1, self.l + 1)) / abs(
            osc_normalizer(self.l))

    def __call__(self, x):
        if self.kind == "phi0":
            return eval_phi0(x)
        if self.kind == "osc":
            return eval_oscillating(x, self.l, self.d)
        x = np.asarray(x, dtype=float)
        if self.kind == "indicator":
            out = np.where(np.abs(x) <= 1.0, 1.0, 0.0)
        else:
            out = np.ones_like(x)
        return out if out.ndim else float(out)

    def scaled(self, y, threshold: float):
        """Kernel applied to ``y / threshold``."""
        if threshold <= 0:
            raise ValueError("threshold must be positive")
        return self(np.asarray(y, dtype=float) / threshold)


def eval_scaled(kernel: TruncationKernel, y, threshold: float):
    return kernel.scaled(y, threshold)


def kernel_moment(kernel: TruncationKernel, k: int, tol: float = 1e-10) -> float:
    """int x^k kernel(x) dx over the support."""
    if k < 0:
        raise ValueError("moment order must be >= 0")
    if kernel.kind == "none":
        raise ValueError("the constant kernel has no finite moments")
    bp = kernel.breakpoints
    pts = [-b for b in bp] + [0.0] + bp
    return integrate_panels(lambda x: x**k * kernel(x), pts, tol=tol).value


def dump(kernel: TruncationKernel, path, points: int = 2001) -> None:
    """Write ``x,phi`` samples of the kernel on a uniform grid over its support."""
    s = kernel.support_bound if math.isfinite(kernel.support_bound) else 2.0
    xs = np.linspace(-s, s, points)
    ys = kernel(xs)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "phi"])
        for x, y in zip(xs, ys):
            w.writerow([f"{x:.17g}", f"{y:.17g}"])


def kernel_from_args(ns: argparse.Namespace) -> TruncationKernel:
    if ns.kind == "osc":
        return TruncationKernel.oscillating(ns.l, ns.d)
    return TruncationKernel(ns.kind)

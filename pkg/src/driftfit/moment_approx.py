"""Approximations of the truncated conditional mean

    m(theta, h, x) = E[X_h phi((X_h - x) / (c h^beta)) | X_0 = x]
                     / E[phi((X_h - x) / (c h^beta)) | X_0 = x]

that centre the contrast, together with their theta-gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .jet import generator_iterates
from .kernels import TruncationKernel
from .levy_integrals import kernel_fractional_moment
from .model import ModelSpec, TemperedStable
from .sde_sim import SimScheme, simulate_batch

THETA1_EXCLUSION = 1e-6


class OracleError(RuntimeError):
    """Raised when the Monte Carlo denominator is not positive."""


def _as_float_array(x):
    return np.asarray(x, dtype=float)


# -- closed forms -------------------------------------------------------------


def m_euler(model: ModelSpec, theta, x, dt):
    """x + dt * drift_bar(theta, x)."""
    return x + dt * model.drift_bar(theta, x)


def m_kessler_ou_exact(theta, x, dt, jump_drift: float = 0.0):
    """Exact conditional mean of the affine diffusion with drift
    theta1 x + theta2 - jump_drift (jump_drift = gamma * lambda * mu_j)."""
    th1, th2 = float(theta[0]), float(theta[1])
    if abs(th1) < THETA1_EXCLUSION:
        raise ValueError(f"theta1={th1} too close to 0 for the exact OU mean")
    x = _as_float_array(x)
    dt = _as_float_array(dt)
    out = (x + th2 / th1 - jump_drift / th1) * np.exp(th1 * dt) + (jump_drift - th2) / th1
    out = np.where(dt == 0, x, out)
    return out if out.ndim else float(out)


def _kessler_ou_grad(theta, x, dt, jump_drift: float):
    th1, th2 = float(theta[0]), float(theta[1])
    if abs(th1) < THETA1_EXCLUSION:
        raise ValueError(f"theta1={th1} too close to 0 for the exact OU mean")
    x = _as_float_array(x)
    e = np.exp(th1 * dt)
    em1 = np.expm1(th1 * dt)
    q = th2 - jump_drift
    d1 = x * dt * e + q * (dt * e / th1 - em1 / th1**2)
    d2 = em1 / th1 + 0.0 * x
    return d1, d2


def m_kessler_generic(model: ModelSpec, theta, x, dt, order: int):
    """x + sum_{k=1}^{order} A^k g(x) dt^k / k! with A f = b_bar f' + a^2 f'' / 2."""
    val, _ = _kessler_generic(model, theta, x, dt, order, with_grad=False)
    return val


def _kessler_generic(model, theta, x, dt, order, with_grad):
    x = _as_float_array(x)
    dt = _as_float_array(dt)
    n_params = 2 if with_grad else 0
    it = generator_iterates(model.drift_bar, model.diffusion, x, order, n_params, tuple(theta))
    val = x.copy()
    grad = np.zeros((2,) + np.broadcast_shapes(x.shape, dt.shape))
    for k in range(1, order + 1):
        w = dt**k / math.factorial(k)
        val = val + it[k - 1, 0] * w
        if with_grad:
            grad = grad + it[k - 1, 1:] * w
    val = val if np.ndim(val) else float(val)
    return val, (grad[0], grad[1])


def _stable_levy(model: ModelSpec) -> TemperedStable:
    if not isinstance(model.levy, TemperedStable):
        raise ValueError("the stable-corrected approximation needs tempered stable jumps")
    return model.levy


def m_stable_corrected(model: ModelSpec, theta, x, dt, beta: float, c: float,
                       kernel: TruncationKernel, j: float | None = None):
    """Euler mean plus the truncated small-jump correction
    dt^(1 + beta (1 - alpha)) c^(1 - alpha) gamma^alpha int_0^inf phi(v) v^-alpha dv."""
    alpha = _stable_levy(model).alpha
    if j is None:
        j = kernel_fractional_moment(kernel, alpha).value
    gamma = np.abs(model.jump_coeff(_as_float_array(x)))
    corr = dt ** (1.0 + beta * (1.0 - alpha)) * c ** (1.0 - alpha) * gamma**alpha * j
    out = m_euler(model, theta, x, dt) + corr
    return out if np.ndim(out) else float(out)


# -- Monte Carlo oracle -------------------------------------------------------


class OracleResult(NamedTuple):
    estimate: float
    stderr: float
    mean_weight: float


def oracle_scheme(dt: float) -> SimScheme:
    return SimScheme(substeps=max(1, math.ceil(dt / 1e-3 - 1e-9)))


def m_mc_oracle(model: ModelSpec, theta, x: float, dt: float, beta: float, c: float,
                kernel: TruncationKernel, n_paths: int, seed: int = 0,
                scheme: SimScheme | None = None, chunk: int = 100_000) -> OracleResult:
    """Ratio estimator sum X phi / sum phi over simulated one-step paths.

    The standard error is the delta-method error of the ratio. Chunks of
    paths use independent streams keyed by the chunk index.
    """
    if n_paths < 1000:
        raise ValueError("the oracle needs at least 1000 paths")
    x = float(x)
    if dt == 0:
        return OracleResult(x, 0.0, 1.0)
    if scheme is None:
        scheme = oracle_scheme(dt)
    thr = c * dt**beta
    grid = np.array([0.0, dt])
    s_w = s_y = s_ww = s_yy = s_wy = 0.0
    done = 0
    i = 0
    while done < n_paths:
        size = min(chunk, n_paths - done)
        vals, _ = simulate_batch(model, theta, x, grid, scheme, seed, size, tag=f"oracle{i}")
        d = vals[:, 1] - x
        w = kernel.scaled(d, thr)
        y = d * w
        s_w += w.sum()
        s_y += y.sum()
        s_ww += (w * w).sum()
        s_yy += (y * y).sum()
        s_wy += (w * y).sum()
        done += size
        i += 1
    if s_w <= 0:
        raise OracleError("non-positive kernel mass: increase the number of paths")
    n = float(n_paths)
    r = s_y / s_w
    wbar = s_w / n
    resid2 = (s_yy - 2.0 * r * s_wy + r * r * s_ww) / n
    se = math.sqrt(max(resid2, 0.0) / n) / wbar
    return OracleResult(x + r, se, wbar)


# -- strategy objects ---------------------------------------------------------


@dataclass(frozen=True)
class MomentApprox:
    """Base class: ``mean`` gives m~ and ``theta_grad`` its theta-gradient."""

    name = "base"
    # m~ is affine in x whenever the model is (used by the fast contrast path)
    affine_in_x = True

    def mean(self, model: ModelSpec, theta, x, dt):
        raise NotImplementedError

    def theta_grad(self, model: ModelSpec, theta, x, dt):
        raise NotImplementedError


@dataclass(frozen=True)
class Euler(MomentApprox):
    name = "euler"

    def mean(self, model, theta, x, dt):
        return m_euler(model, theta, x, dt)

    def theta_grad(self, model, theta, x, dt):
        g1, g2 = model.drift_theta_grad(theta, _as_float_array(x))
        return dt * g1, dt * g2


@dataclass(frozen=True)
class KesslerOUExact(MomentApprox):
    name = "kessler_ou"

    def mean(self, model, theta, x, dt):
        return m_kessler_ou_exact(theta, x, dt, model.jump_mean_drift)

    def theta_grad(self, model, theta, x, dt):
        return _kessler_ou_grad(theta, x, dt, model.jump_mean_drift)


@dataclass(frozen=True)
class KesslerGeneric(MomentApprox):
    order: int = 2
    name = "kessler_generic"

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("Kessler order must be >= 1")

    def mean(self, model, theta, x, dt):
        return m_kessler_generic(model, theta, x, dt, self.order)

    def theta_grad(self, model, theta, x, dt):
        return _kessler_generic(model, theta, x, dt, self.order, with_grad=True)[1]


@dataclass(frozen=True)
class StableCorrected(MomentApprox):
    beta: float = 0.49
    c: float = 1.0
    kernel: TruncationKernel = field(default_factory=TruncationKernel.phi0)
    alpha: float = 0.5
    j: float = field(default=float("nan"))
    name = "stable_corrected"

    @classmethod
    def for_model(cls, model: ModelSpec, beta: float, c: float,
                  kernel: TruncationKernel) -> "StableCorrected":
        return cls(beta, c, kernel, _stable_levy(model).alpha)

    def __post_init__(self):
        if math.isnan(self.j):
            object.__setattr__(self, "j", kernel_fractional_moment(self.kernel, self.alpha).value)

    def mean(self, model, theta, x, dt):
        if _stable_levy(model).alpha != self.alpha:
            raise ValueError("model alpha differs from the precomputed correction")
        return m_stable_corrected(model, theta, x, dt, self.beta, self.c, self.kernel, self.j)

    def theta_grad(self, model, theta, x, dt):
        return Euler().theta_grad(model, theta, x, dt)


@dataclass(frozen=True)
class MCOracle(MomentApprox):
    n_paths: int = 100_000
    beta: float = 0.49
    c: float = 1.0
    kernel: TruncationKernel = field(default_factory=TruncationKernel.phi0)
    seed: int = 0
    scheme: SimScheme | None = None
    name = "mc_oracle"
    affine_in_x = False

    def mean(self, model, theta, x, dt):
        xs = _as_float_array(x)
        dts = np.broadcast_to(_as_float_array(dt), xs.shape)
        out = np.array([
            m_mc_oracle(model, theta, xi, di, self.beta, self.c, self.kernel,
                        self.n_paths, self.seed, self.scheme).estimate
            for xi, di in zip(xs.ravel(), dts.ravel())
        ]).reshape(xs.shape)
        return out if out.ndim else float(out)

    def theta_grad(self, model, theta, x, dt):
        raise TypeError("the Monte Carlo oracle has no derivative")


def m_theta_grad(approx: MomentApprox, model: ModelSpec, theta, x, dt):
    """(d m~/d theta1, d m~/d theta2) for the chosen approximation."""
    return approx.theta_grad(model, theta, x, dt)

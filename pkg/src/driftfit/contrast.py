"""Jump-filtered least-squares contrast and its minimisation.

For observations X_0, ..., X_n with steps dt_i the contrast is

    U(theta) = sum_i w_i (X_{i+1} - m(theta, dt_i, X_i))^2
                     * phi((X_{i+1} - X_i) / (c dt_i^beta)) * 1{|X_i| <= dt_i^-k}

where m is one of the conditional-mean approximations of
:mod:`driftfit.moment_approx`, and w_i is 1 or 1 / (a(X_i)^2 dt_i).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple

import numpy as np
from scipy.optimize import minimize

from .kernels import TruncationKernel
from .levy_integrals import gamma_tail, kernel_fractional_moment
from .model import ModelSpec, TemperedStable
from .moment_approx import MomentApprox
from .sde_sim import SamplePath

DEFAULT_BOX = ((-5.0, -0.01), (-10.0, 10.0))
XATOL = 1e-8
# the simplex is shrunk past XATOL so the reported point is well inside it
INNER_XATOL = 1e-10
MAX_EVALS = 2000


@dataclass(frozen=True)
class ContrastConfig:
    """Threshold ``c * dt**beta``, kernel, indicator exponent and weighting.

    ``k_ind=None`` switches the indicator 1{|X_i| <= dt^-k_ind} off.
    """

    beta: float = 0.49
    c: float = 1.0
    kernel: TruncationKernel = field(default_factory=TruncationKernel.phi0)
    k_ind: float | None = 3.0
    weight_by_variance: bool = False

    def __post_init__(self):
        if not 0.0 < self.beta < 0.5:
            raise ValueError("beta must lie in (0, 1/2)")
        if self.c <= 0:
            raise ValueError("c must be positive")
        if self.k_ind is not None and self.k_ind <= 0:
            raise ValueError("k_ind must be positive")


class EstimateResult(NamedTuple):
    theta: tuple[float, float]
    contrast_at_opt: float
    kept_fraction: float
    iterations: int
    converged: bool


class _Increments(NamedTuple):
    x: np.ndarray      # left points X_i
    y: np.ndarray      # right points X_{i+1}
    dt: np.ndarray
    mass: np.ndarray   # w_i * phi_i * indicator_i
    phi: np.ndarray    # phi_i * indicator_i (no variance weight)


def _increments(path: SamplePath, model: ModelSpec, cfg: ContrastConfig) -> _Increments:
    if len(path) < 2:
        raise ValueError("the path needs at least two observations")
    x = path.values[:-1]
    y = path.values[1:]
    dt = path.steps
    phi = cfg.kernel(((y - x) / (cfg.c * dt**cfg.beta)))
    phi = np.asarray(phi, dtype=float)
    if cfg.k_ind is not None:
        phi = np.where(np.abs(x) <= dt ** (-cfg.k_ind), phi, 0.0)
    mass = phi
    if cfg.weight_by_variance:
        a = np.asarray(model.diffusion(x), dtype=float) + 0.0 * x
        mass = phi / (a * a * dt)
    return _Increments(x, y, dt, mass, phi)


def _direct(inc: _Increments, theta, model, approx) -> float:
    r = inc.y - approx.mean(model, theta, inc.x, inc.dt)
    return float(np.sum(inc.mass * r * r))


def contrast_value(path: SamplePath, theta, model: ModelSpec, approx: MomentApprox,
                   cfg: ContrastConfig) -> float:
    """U(theta) evaluated term by term."""
    return _direct(_increments(path, model, cfg), theta, model, approx)


def kept_fraction(path: SamplePath, model: ModelSpec, cfg: ContrastConfig) -> float:
    """Share of increments with a non-zero weight in the contrast."""
    inc = _increments(path, model, cfg)
    return float(np.mean(np.abs(inc.phi) > 0))


class _AffineEvaluator:
    """U(theta) from sufficient statistics when m is affine in x and dt is constant.

    With m(theta, x) = A(theta) + B(theta) x the residual around a reference
    point theta_ref is r0 - dA - dB x, so U is a quadratic form in (dA, dB)
    whose coefficients are accumulated once. Centering at theta_ref keeps
    the cancellation small near the minimum.
    """

    def __init__(self, inc: _Increments, model, approx, theta_ref):
        self.model = model
        self.approx = approx
        self.dt = float(np.mean(inc.dt))
        self.theta2_ref = float(theta_ref[1])
        self.ref = self._coeffs(theta_ref)
        r0 = inc.y - (self.ref[0] + self.ref[1] * inc.x)
        w = inc.mass
        self.s_rr = float(np.sum(w * r0 * r0))
        self.s_r = float(np.sum(w * r0))
        self.s_xr = float(np.sum(w * inc.x * r0))
        self.s_w = float(np.sum(w))
        self.s_x = float(np.sum(w * inc.x))
        self.s_xx = float(np.sum(w * inc.x * inc.x))

    def _coeffs(self, theta):
        # for the drift theta1 x + theta2 the slope depends on theta1 alone;
        # evaluating it at the reference theta2 keeps it bit-identical when
        # theta1 does not move (rounding noise in B would otherwise couple to
        # the large x-weighted residual sum)
        a = float(self.approx.mean(self.model, theta, 0.0, self.dt))
        th_b = (theta[0], self.theta2_ref)
        b = (float(self.approx.mean(self.model, th_b, 1.0, self.dt))
             - float(self.approx.mean(self.model, th_b, 0.0, self.dt)))
        return a, b

    def excess(self, theta) -> float:
        """U(theta) - U(theta_ref); free of the large constant, so it keeps
        full relative precision near the reference point."""
        a, b = self._coeffs(theta)
        da, db = a - self.ref[0], b - self.ref[1]
        return (-2.0 * da * self.s_r - 2.0 * db * self.s_xr
                + da * da * self.s_w + 2.0 * da * db * self.s_x + db * db * self.s_xx)

    def __call__(self, theta) -> float:
        return self.s_rr + self.excess(theta)


def _fast_path_ok(inc: _Increments, model, approx) -> bool:
    if model.affine is None or not approx.affine_in_x:
        return False
    return bool(np.ptp(inc.dt) <= 1e-9 * np.mean(inc.dt))


def _euler_wls(inc: _Increments, model, frozen: dict[int, float]):
    """Closed-form minimiser of the Euler contrast for the affine drift.

    Regresses the compensated increment rate on (x, 1) with weights
    mass * dt^2; frozen coordinates are moved to the response.
    """
    rate = (inc.y - inc.x) / inc.dt + model.compensator(inc.x)
    w = inc.mass * inc.dt**2
    cols = [inc.x, np.ones_like(inc.x)]
    for i, v in frozen.items():
        rate = rate - v * cols[i]
    free = [i for i in range(2) if i not in frozen]
    design = np.stack([cols[i] for i in free], axis=1)
    gram = design.T @ (w[:, None] * design)
    rhs = design.T @ (w * rate)
    sol = np.linalg.lstsq(gram, rhs, rcond=None)[0]
    out = [0.0, 0.0]
    for i, v in frozen.items():
        out[i] = v
    for i, s in zip(free, sol):
        out[i] = float(s)
    return out


def _normalize_frozen(frozen) -> dict[int, float]:
    if not frozen:
        return {}
    names = {"theta1": 0, "theta2": 1, 0: 0, 1: 1}
    out = {}
    for k, v in dict(frozen).items():
        if k not in names:
            raise ValueError(f"unknown parameter {k!r}")
        out[names[k]] = float(v)
    if len(out) == 2:
        raise ValueError("at least one parameter must be free")
    return out


def _run_nm(fun, x0, lo, hi, scale):
    n = len(x0)
    simplex = np.tile(x0, (n + 1, 1))
    for i in range(n):
        step = scale[i]
        # step inwards when the start sits on the upper bound
        simplex[i + 1, i] = x0[i] + step if x0[i] + step <= hi[i] else x0[i] - step
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = minimize(fun, x0, method="Nelder-Mead", bounds=list(zip(lo, hi)),
                       options={"xatol": INNER_XATOL, "fatol": math.inf, "maxfev": MAX_EVALS,
                                "initial_simplex": simplex})
    return res


def minimize_contrast(path: SamplePath, model: ModelSpec, approx: MomentApprox,
                      cfg: ContrastConfig, theta_box=DEFAULT_BOX,
                      frozen: Mapping | None = None) -> EstimateResult:
    """Nelder-Mead minimisation of U over ``theta_box``.

    The start is the weighted least-squares Euler estimate (clamped to the
    box). The search is restarted once from a fresh simplex around the first
    optimum; it has converged when the final simplex is narrower than 1e-8
    in every coordinate.
    """
    box = np.asarray(theta_box, dtype=float)
    if box.shape != (2, 2) or np.any(box[:, 0] > box[:, 1]):
        raise ValueError("theta_box must be ((lo1, hi1), (lo2, hi2)) with lo <= hi")
    fz = _normalize_frozen(frozen)
    free = [i for i in range(2) if i not in fz]
    inc = _increments(path, model, cfg)

    if model.affine is not None:
        start = _euler_wls(inc, model, fz)
    else:
        start = [float(np.mean(box[i])) for i in range(2)]
        for i, v in fz.items():
            start[i] = v
    start = [float(np.clip(start[i], *box[i])) if i in free else start[i] for i in range(2)]

    def full(z):
        th = list(start)
        for i, v in zip(free, z):
            th[i] = float(v)
        return th

    lo = box[free, 0]
    hi = box[free, 1]
    width = np.maximum(hi - lo, 1e-12)
    fast = _fast_path_ok(inc, model, approx)

    def objective(ref):
        if fast:
            ev = _AffineEvaluator(inc, model, approx, ref)
            return lambda z: ev.excess(full(z))
        return lambda z: _direct(inc, full(z), model, approx)

    z0 = np.array([start[i] for i in free])
    r1 = _run_nm(objective(start), z0, lo, hi, 0.05 * width)
    z1 = np.clip(r1.x, lo, hi)
    r2 = _run_nm(objective(full(z1)), z1, lo, hi, 1e-3 * width)
    # r2 starts at r1's optimum and never moves uphill, so it is the best point
    zb = np.clip(r2.x, lo, hi)
    theta = tuple(full(zb))
    sim = r2.final_simplex[0]
    narrow = bool(np.all(np.abs(sim[1:] - sim[0]) < XATOL))
    converged = narrow and r2.nfev < MAX_EVALS
    return EstimateResult(
        theta=(float(theta[0]), float(theta[1])),
        contrast_at_opt=_direct(inc, theta, model, approx),
        kept_fraction=float(np.mean(np.abs(inc.phi) > 0)),
        iterations=int(r1.nfev + r2.nfev),
        converged=converged,
    )


def estimate_theta2_stable(path: SamplePath, theta1: float, model: ModelSpec,
                           cfg: ContrastConfig, j: float | None = None):
    """Closed-form theta2 for tempered stable jumps with theta1 known.

    Both values are exact minimisers of the contrast with theta1 frozen.
    Returns ``(theta2, theta2_euler)``: the Euler version adds back the
    compensator gamma * Gamma(1 - alpha) of the compensated drift; the
    corrected one also removes the mean of the small jumps that pass the
    filter.
    """
    if not isinstance(model.levy, TemperedStable) or model.affine is None:
        raise ValueError("needs the affine model with tempered stable jumps")
    dt_all = path.steps
    dt = float(np.mean(dt_all))
    if np.ptp(dt_all) > 1e-9 * dt:
        raise ValueError("the explicit estimator needs a uniform grid")
    inc = _increments(path, model, cfg)
    s_phi = float(np.sum(inc.phi))
    if s_phi <= 0:
        raise ValueError("non-positive total kernel weight")
    alpha = model.levy.alpha
    gamma = model.affine.gamma
    num = float(np.sum((inc.y - inc.x - dt * theta1 * inc.x) * inc.phi))
    theta2_euler = num / (dt * s_phi) + gamma * gamma_tail(alpha).value
    if j is None:
        j = kernel_fractional_moment(cfg.kernel, alpha).value
    corr = dt ** (cfg.beta * (1.0 - alpha)) * cfg.c ** (1.0 - alpha) * abs(gamma) ** alpha * j
    return theta2_euler - corr, theta2_euler


class StepCondition(NamedTuple):
    value: float
    warn: bool


def check_step_condition(n: int, dt: float, order: int) -> StepCondition:
    """sqrt(n) * dt^(order - 1/2), which should be small for the order-K mean."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if dt <= 0:
        raise ValueError("dt must be positive")
    value = math.sqrt(n) * dt ** (order - 0.5)
    if value > 1.0:
        warnings.warn(f"sqrt(n) dt^(K-1/2) = {value:.4g} > 1: the expansion order is too low",
                      RuntimeWarning, stacklevel=2)
    return StepCondition(value, value > 1.0)

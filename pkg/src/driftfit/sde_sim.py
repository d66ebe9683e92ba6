"""Simulation of discretely observed jump-diffusion paths.

Paths are produced on a refined grid (``substeps`` fine steps per
observation interval) either by Euler-Maruyama or, for the affine model with
constant coefficients, by the exact Ornstein-Uhlenbeck transition with jumps
propagated from their exact arrival times. Jumps are compensated: the
simulated jump integral has mean zero.

Tempered stable jumps are simulated as a compound Poisson process of the
jumps above a cutoff ``eps``; the jumps below ``eps`` are replaced by their
mean, which leaves a neglected mean-zero remainder of variance at most
``dt * eps**(2 - alpha) / (2 - alpha)`` per interval of length ``dt``.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import special
from scipy.signal import lfilter

from .model import GaussianCP, ModelSpec, NoJumps, TemperedStable
from .rng import stream

TS_REMAINDER_TOL = 1e-8


@dataclass(frozen=True)
class SimScheme:
    substeps: int = 10
    exact_ou: bool = False

    def __post_init__(self):
        if int(self.substeps) < 1:
            raise ValueError("substeps must be >= 1")


@dataclass(frozen=True)
class SamplePath:
    times: np.ndarray
    values: np.ndarray
    n_jumps: int = 0

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        x = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != x.shape:
            raise ValueError("times and values must be 1-D of equal length")
        if t.size == 0 or t[0] != 0.0:
            raise ValueError("times must start at 0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", x)

    def __len__(self) -> int:
        return self.times.size

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.times)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x"])
            for t, x in zip(self.times, self.values):
                w.writerow([f"{t:.17g}", f"{x:.17g}"])

    @classmethod
    def from_csv(cls, path: str | Path) -> "SamplePath":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        t = np.array([float(r["t"]) for r in rows])
        x = np.array([float(r["x"]) for r in rows])
        return cls(t, x)


def uniform_grid(t_final: float, n: int) -> np.ndarray:
    """n intervals of equal length on [0, t_final]."""
    return np.arange(n + 1, dtype=float) * (t_final / n)


# -- jump samplers -----------------------------------------------------------


def sample_cp_jumps(lam, jump_law, interval, rng):
    """Jump times and N(mu_j, sigma_j^2) sizes of a rate-``lam`` Poisson process."""
    mu_j, sigma_j = jump_law
    t_a, t_b = interval
    if lam < 0 or t_b <= t_a:
        raise ValueError("need lam >= 0 and t_b > t_a")
    count = rng.poisson(lam * (t_b - t_a))
    times = np.sort(rng.uniform(t_a, t_b, size=count))
    sizes = rng.normal(mu_j, sigma_j, size=count)
    return times, sizes


def ts_cutoff(alpha: float, dt: float, tol: float = TS_REMAINDER_TOL) -> float:
    """Largest eps whose neglected small-jump variance over ``dt`` is <= tol."""
    eps = (tol * (2.0 - alpha) / dt) ** (1.0 / (2.0 - alpha))
    if eps >= 1.0:
        warnings.warn(
            f"tempered stable cutoff eps={eps:.3g} >= 1: almost all jump mass is "
            "replaced by its mean",
            RuntimeWarning,
            stacklevel=2,
        )
    return eps


def ts_big_jump_mean(alpha: float, eps: float) -> float:
    """Mean jump rate above the cutoff, int_eps^inf z F(z) dz."""
    return math.gamma(1.0 - alpha) * float(special.gammaincc(1.0 - alpha, eps))


def _ts_envelope_rate(alpha: float, eps: float) -> float:
    return math.exp(-eps) * eps ** (-alpha) / alpha


def sample_ts_jumps(alpha, interval, eps, rng):
    """Arrival times and sizes of the tempered stable jumps larger than ``eps``.

    Proposals come from the Pareto envelope exp(-eps) z^(-1-alpha) on
    (eps, inf) and are thinned with probability exp(-(z - eps)).
    """
    t_a, t_b = interval
    count = rng.poisson(_ts_envelope_rate(alpha, eps) * (t_b - t_a))
    times = rng.uniform(t_a, t_b, size=count)
    sizes = eps * rng.random(count) ** (-1.0 / alpha)
    keep = rng.random(count) < np.exp(-(sizes - eps))
    times, sizes = times[keep], sizes[keep]
    order = np.argsort(times, kind="stable")
    return times[order], sizes[order]


def sample_ts_increment(alpha, dt, eps, rng, size=None):
    """Compensated tempered stable increment(s) over a step of length ``dt``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if eps <= 0:
        raise ValueError("eps must be positive")
    n = 1 if size is None else int(size)
    if dt == 0:
        return 0.0 if size is None else np.zeros(n)
    if dt < 0:
        raise ValueError("dt must be non-negative")
    if _ts_envelope_rate(alpha, eps) * dt < 1e-300:
        warnings.warn("cutoff too large: no retained jumps", RuntimeWarning, stacklevel=2)
    counts = rng.poisson(_ts_envelope_rate(alpha, eps) * dt, size=n)
    total = int(counts.sum())
    sizes = eps * rng.random(total) ** (-1.0 / alpha)
    keep = rng.random(total) < np.exp(-(sizes - eps))
    owner = np.repeat(np.arange(n), counts)
    sums = np.bincount(owner[keep], weights=sizes[keep], minlength=n)
    out = sums - dt * ts_big_jump_mean(alpha, eps)
    return float(out[0]) if size is None else out


# -- path simulation ---------------------------------------------------------


def _check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise ValueError("grid needs at least two points")
    if grid[0] != 0.0:
        raise ValueError("grid must start at 0")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    return grid


def _fine_grid(grid: np.ndarray, m: int) -> np.ndarray:
    steps = np.diff(grid)
    frac = np.arange(m, dtype=float) / m
    fine = (grid[:-1, None] + steps[:, None] * frac[None, :]).ravel()
    return np.append(fine, grid[-1])


def _jump_effective_mean(model: ModelSpec, eps: float | None) -> float:
    """Rate of the jump mean that must be removed from the drift."""
    levy = model.levy
    if isinstance(levy, TemperedStable):
        return ts_big_jump_mean(levy.alpha, eps)
    return levy.first_moment()


def _draw_jumps(model, t_final, eps, rng, n_paths):
    """Per-path jump (times, sizes, owner) over [0, t_final]."""
    levy = model.levy
    if isinstance(levy, NoJumps) or (isinstance(levy, GaussianCP) and levy.lam == 0):
        empty = np.empty(0)
        return empty, empty, np.empty(0, dtype=np.int64)
    if isinstance(levy, GaussianCP):
        counts = rng.poisson(levy.lam * t_final, size=n_paths)
        total = int(counts.sum())
        times = rng.uniform(0.0, t_final, size=total)
        sizes = rng.normal(levy.mu_j, levy.sigma_j, size=total)
        owner = np.repeat(np.arange(n_paths), counts)
        return times, sizes, owner
    if isinstance(levy, TemperedStable):
        a = levy.alpha
        counts = rng.poisson(_ts_envelope_rate(a, eps) * t_final, size=n_paths)
        total = int(counts.sum())
        times = rng.uniform(0.0, t_final, size=total)
        sizes = eps * rng.random(total) ** (-1.0 / a)
        keep = rng.random(total) < np.exp(-(sizes - eps))
        owner = np.repeat(np.arange(n_paths), counts)
        return times[keep], sizes[keep], owner[keep]
    raise TypeError(f"unsupported Levy measure {levy!r}")


def simulate_batch(model: ModelSpec, theta, x0, grid, scheme: SimScheme = SimScheme(),
                   seed: int = 0, n_paths: int = 1, tag: str = "path"):
    """Simulate ``n_paths`` independent paths; returns (values, jump_counts).

    ``values`` has shape (n_paths, len(grid)). Randomness comes from two
    streams keyed by (seed, tag, channel), one for the Brownian motion and
    one for the jumps.
    """
    grid = _check_grid(grid)
    m = int(scheme.substeps)
    if scheme.exact_ou and model.affine is None:
        raise ValueError("exact_ou requires the affine model with constant coefficients")
    theta = (float(theta[0]), float(theta[1]))
    n_obs = grid.size - 1
    fine = _fine_grid(grid, m)
    h = np.diff(fine)
    k_total = h.size

    eps = None
    if isinstance(model.levy, TemperedStable):
        eps = ts_cutoff(model.levy.alpha, float(np.max(np.diff(grid))))
    comp = _jump_effective_mean(model, eps)

    rng_w = stream(seed, tag, "brownian")
    rng_j = stream(seed, tag, "jumps")
    times, sizes, owner = _draw_jumps(model, grid[-1], eps, rng_j, n_paths)
    step = np.clip(np.searchsorted(fine, times, side="left") - 1, 0, k_total - 1)
    jump_counts = np.bincount(owner, minlength=n_paths)

    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (n_paths,)).copy()
    aff = model.affine
    uniform = np.ptp(h) <= 1e-9 * h.mean()

    if aff is not None and (uniform or scheme.exact_ou):
        th1, th2 = theta
        if uniform:
            h = np.full(k_total, (grid[-1] - grid[0]) / k_total)
        const = th2 - aff.gamma * comp
        if scheme.exact_ou:
            if th1 != 0.0:
                a_k = np.exp(th1 * h)
                b_k = const * np.expm1(th1 * h) / th1
                s_k = aff.sigma * np.sqrt(np.expm1(2.0 * th1 * h) / (2.0 * th1))
            else:
                a_k = np.ones_like(h)
                b_k = const * h
                s_k = aff.sigma * np.sqrt(h)
            weights = aff.gamma * sizes * np.exp(th1 * (fine[step + 1] - times))
        else:
            a_k = 1.0 + th1 * h
            b_k = const * h
            s_k = aff.sigma * np.sqrt(h)
            weights = aff.gamma * sizes
        jumps = np.bincount(owner * k_total + step, weights=weights,
                            minlength=n_paths * k_total).reshape(n_paths, k_total)
        noise = rng_w.standard_normal((n_paths, k_total))
        drive = b_k + s_k * noise + jumps
        if np.ptp(a_k) == 0.0:
            a = float(a_k[0])
            xs = lfilter([1.0], [1.0, -a], drive, axis=1, zi=(a * x0)[:, None])[0]
        else:
            xs = np.empty((n_paths, k_total))
            x = x0.copy()
            for k in range(k_total):
                x = a_k[k] * x + drive[:, k]
                xs[:, k] = x
        values = np.concatenate([x0[:, None], xs[:, m - 1::m]], axis=1)
        return values, jump_counts

    # generic Euler-Maruyama, gamma evaluated at the left sub-step state
    jumps = np.bincount(owner * k_total + step, weights=sizes,
                        minlength=n_paths * k_total).reshape(n_paths, k_total)
    sqrt_h = np.sqrt(h)
    values = np.empty((n_paths, n_obs + 1))
    values[:, 0] = x0
    x = x0.copy()
    for k in range(k_total):
        g = model.jump_coeff(x)
        dw = sqrt_h[k] * rng_w.standard_normal(n_paths)
        x = x + (model.drift(theta, x) - g * comp) * h[k] + model.diffusion(x) * dw + g * jumps[:, k]
        if (k + 1) % m == 0:
            values[:, (k + 1) // m] = x
    return values, jump_counts


def simulate_path(model: ModelSpec, theta0, x0: float, grid, scheme: SimScheme = SimScheme(),
                  seed: int = 0) -> SamplePath:
    """One observed path of the model started at ``x0`` on ``grid``."""
    grid = _check_grid(grid)
    values, counts = simulate_batch(model, theta0, x0, grid, scheme, seed, n_paths=1)
    return SamplePath(grid, values[0], n_jumps=int(counts[0]))

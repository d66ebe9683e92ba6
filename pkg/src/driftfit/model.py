"""Model description for the scalar jump-diffusion

    dX = b(theta, X) dt + a(X) dW + gamma(X-) z (mu - F dz dt)(dt, dz)

with a two-dimensional drift parameter ``theta = (theta1, theta2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

Theta = tuple[float, float]


@dataclass(frozen=True)
class NoJumps:
    def first_moment(self) -> float:
        return 0.0


@dataclass(frozen=True)
class GaussianCP:
    """Compound Poisson jumps, rate ``lam`` and N(mu_j, sigma_j^2) sizes."""

    lam: float
    mu_j: float
    sigma_j: float

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("jump intensity must be non-negative")
        if self.sigma_j <= 0:
            raise ValueError("jump standard deviation must be positive")

    def first_moment(self) -> float:
        return self.lam * self.mu_j

    def density(self, z):
        z = np.asarray(z, dtype=float)
        u = (z - self.mu_j) / self.sigma_j
        return self.lam * np.exp(-0.5 * u * u) / (self.sigma_j * math.sqrt(2.0 * math.pi))


@dataclass(frozen=True)
class TemperedStable:
    """One-sided tempered stable Levy density exp(-z) z^(-1-alpha) on z > 0."""

    alpha: float

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("tempered stable index must lie in (0, 1)")

    def first_moment(self) -> float:
        return math.gamma(1.0 - self.alpha)

    def density(self, z):
        z = np.asarray(z, dtype=float)
        out = np.zeros_like(z)
        pos = z > 0
        out[pos] = np.exp(-z[pos]) * z[pos] ** (-1.0 - self.alpha)
        return out


LevyMeasure = NoJumps | GaussianCP | TemperedStable


@dataclass(frozen=True)
class AffineCoeffs:
    """Marks a model with drift theta1*x + theta2 and constant a, gamma."""

    sigma: float
    gamma: float


@dataclass(frozen=True)
class ModelSpec:
    """Coefficient functions of the SDE.

    ``drift``, ``diffusion`` and ``jump_coeff`` are applied elementwise and
    should only use arithmetic (or the helpers in :mod:`driftfit.jet`) so that
    they also accept Taylor jets.
    """

    drift: Callable[[Any, Any], Any]
    drift_theta_grad: Callable[[Any, Any], tuple]
    diffusion: Callable[[Any], Any]
    jump_coeff: Callable[[Any], Any]
    levy: LevyMeasure = field(default_factory=NoJumps)
    affine: AffineCoeffs | None = None

    def compensator(self, x):
        """gamma(x) * int z F(dz): the drift removed by compensation."""
        return self.jump_coeff(x) * self.levy.first_moment()

    def drift_bar(self, theta, x):
        return self.drift(theta, x) - self.compensator(x)

    @property
    def jump_mean_drift(self) -> float:
        """gamma * int z F(dz) for affine models (theta-free constant)."""
        if self.affine is None:
            raise ValueError("jump_mean_drift requires an affine model")
        return self.affine.gamma * self.levy.first_moment()


def affine_model(sigma: float, gamma: float = 1.0, levy: LevyMeasure | None = None) -> ModelSpec:
    """theta1*x + theta2 drift, constant volatility and jump coefficient."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    levy = NoJumps() if levy is None else levy
    return ModelSpec(
        drift=lambda th, x: th[0] * x + th[1],
        drift_theta_grad=lambda th, x: (x + 0.0 * th[0], 1.0 + 0.0 * x),
        diffusion=lambda x: sigma + 0.0 * x,
        jump_coeff=lambda x: gamma + 0.0 * x,
        levy=levy,
        affine=AffineCoeffs(sigma=float(sigma), gamma=float(gamma)),
    )

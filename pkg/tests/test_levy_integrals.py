import math

import numpy as np
import pytest
from scipy import integrate

from driftfit.kernels import TruncationKernel
from driftfit.levy_integrals import (gamma_tail, kernel_fractional_moment,
                                     stable_correction_constant, trunc_compensator,
                                     trunc_compensator_at)
from driftfit.model import GaussianCP, NoJumps, TemperedStable
from driftfit.quad import QuadResult, QuadratureError, integrate_panels
from driftfit.rng import stream


def test_gamma_tail_values():
    assert gamma_tail(0.5).value == pytest.approx(math.sqrt(math.pi), abs=1e-10)
    assert gamma_tail(0.3).value == pytest.approx(1.2980553326, abs=1e-9)
    assert gamma_tail(1e-9).value == pytest.approx(1.0, abs=1e-8)
    assert gamma_tail(0.5).abs_error_estimate <= 1e-10


@pytest.mark.parametrize("alpha", [0.1, 0.25, 0.5, 0.7, 0.9])
def test_gamma_reflection(alpha):
    # Gamma(alpha) = Gamma(1 + alpha) / alpha, with Gamma(1 + alpha) by plain quadrature
    g1a = integrate.quad(lambda z: z**alpha * math.exp(-z), 0, np.inf, epsabs=1e-13)[0]
    prod = gamma_tail(alpha).value * g1a / alpha * math.sin(math.pi * alpha) / math.pi
    assert prod == pytest.approx(1.0, abs=1e-8)


def test_gamma_tail_rejects_alpha():
    for a in (0.0, 1.0, -0.2):
        with pytest.raises(ValueError):
            gamma_tail(a)


def test_fractional_moment_indicator_and_bracket():
    assert kernel_fractional_moment(TruncationKernel("indicator"), 0.5).value == pytest.approx(
        2.0, abs=1e-8)
    j = kernel_fractional_moment(TruncationKernel.phi0(), 0.5).value
    j2 = 2 * (math.sqrt(2) - 1)
    assert 2.0 < j < 2.0 + j2


def test_fractional_moment_small_alpha_limit():
    for k in (TruncationKernel.phi0(), TruncationKernel.oscillating(3, 3)):
        half_mass = integrate_panels(lambda v: float(k(v)), [0.0] + k.breakpoints).value
        assert kernel_fractional_moment(k, 1e-9).value == pytest.approx(half_mass, abs=1e-6)


def test_fractional_moment_independent_quadrature():
    k = TruncationKernel.phi0()
    ref = integrate.quad(lambda v: k(v) * v**-0.3, 0, 2, points=[1.0], limit=400,
                         epsabs=1e-12)[0]
    assert kernel_fractional_moment(k, 0.3).value == pytest.approx(ref, abs=1e-8)


def test_compensator_symmetric_gaussian_and_flat_kernel():
    k = TruncationKernel.phi0()
    assert trunc_compensator(1.0, 0.2, 0.49, 1.0, k, GaussianCP(1.0, 0.0, 1.4)) == pytest.approx(
        0.0, abs=1e-12)
    assert trunc_compensator(1.0, 0.2, 0.49, 1.0, TruncationKernel("none"),
                             TemperedStable(0.5)) == 0.0
    with pytest.raises(ValueError):
        trunc_compensator(1.0, 0.2, 0.49, 1.0, k, NoJumps())


def test_compensator_gaussian_against_quad():
    levy = GaussianCP(0.7, 0.8, 0.6)
    k = TruncationKernel.phi0()
    thr = 0.3
    ref = integrate.quad(lambda z: z * (1 - k(z / thr)) * levy.density(z), -10, 10,
                         points=[-0.6, -0.3, 0.3, 0.6], limit=400)[0]
    assert trunc_compensator_at(1.0, thr, k, levy) == pytest.approx(ref, abs=1e-9)


def test_compensator_stable_against_monte_carlo():
    alpha, thr = 0.5, 0.1
    k = TruncationKernel.phi0()
    value = trunc_compensator_at(1.0, thr, k, TemperedStable(alpha))
    # z (1 - phi(z / thr)) is zero below thr: sample z > thr from F restricted
    # there by a Pareto proposal with exponential thinning
    rng = stream(0, "mc")
    n = 4_000_000
    z = thr * rng.random(n) ** (-1 / alpha)
    w = np.exp(-(z - thr))
    mass = math.exp(-thr) * thr ** (-alpha) / alpha
    f = mass * w * z * (1 - k(z / thr))
    se = f.std() / math.sqrt(n)
    assert value > 0
    assert abs(f.mean() - value) < 3 * se


def test_compensator_limits_and_monotone():
    k = TruncationKernel.phi0()
    ts = TemperedStable(0.5)
    assert trunc_compensator_at(1.0, 1e-10, k, ts) == pytest.approx(math.sqrt(math.pi), rel=1e-4)
    thr = [1e-6, 1e-4, 1e-2, 0.1, 0.5, 1.0, 3.0]
    vals = [trunc_compensator_at(1.0, t, k, ts) for t in thr]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_stable_correction_constant():
    k = TruncationKernel.phi0()
    j = kernel_fractional_moment(k, 0.5).value
    c = stable_correction_constant(0.5, 0.49, 1.0, 1.0, k, 0.01)
    assert c == pytest.approx(0.01 ** (0.49 * 0.5) * j, rel=1e-14)


def test_quad_result_and_errors():
    with pytest.raises(ValueError):
        QuadResult(1.0, -1.0)
    r = integrate_panels(math.sin, [0.0, math.pi / 2, math.pi])
    assert float(r) == pytest.approx(2.0, abs=1e-12)
    with pytest.raises(QuadratureError):
        integrate_panels(lambda x: 1.0 / math.sqrt(abs(x - 0.3)) if x != 0.3 else 0.0,
                         [0.0, 1.0], tol=1e-15, limit=5)

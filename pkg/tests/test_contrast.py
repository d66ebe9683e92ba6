import math
import warnings

import numpy as np
import pytest

from driftfit.contrast import (ContrastConfig, _AffineEvaluator, _increments, check_step_condition,
                               contrast_value, estimate_theta2_stable, kept_fraction,
                               minimize_contrast)
from driftfit.kernels import TruncationKernel
from driftfit.levy_integrals import gamma_tail, kernel_fractional_moment
from driftfit.model import GaussianCP, TemperedStable, affine_model
from driftfit.moment_approx import Euler, KesslerGeneric, KesslerOUExact, StableCorrected
from driftfit.sde_sim import SamplePath, SimScheme, simulate_path, uniform_grid

THETA0 = (-0.5, 2.0)
NONE = TruncationKernel("none")
EXACT = SimScheme(10, exact_ou=True)


def euler_flow(theta, x0, dt, n):
    x = np.empty(n + 1)
    x[0] = x0
    for i in range(n):
        x[i + 1] = x[i] + dt * (theta[0] * x[i] + theta[1])
    return SamplePath(np.arange(n + 1) * dt, x)


def ou_path(seed, t_final=400.0, n=2000, model=None):
    model = model or affine_model(0.3)
    return simulate_path(model, THETA0, 4.0, uniform_grid(t_final, n), EXACT, seed=seed)


# -- contrast_value --


def test_noiseless_flow_gives_zero_contrast():
    m = affine_model(0.0)
    path = euler_flow(THETA0, 6.0, 0.2, 50)
    assert contrast_value(path, THETA0, m, Euler(), ContrastConfig()) == pytest.approx(0, abs=1e-25)


def test_single_increment():
    m = affine_model(1.0)
    path = SamplePath([0.0, 1.0], [0.3, 0.55])
    cfg = ContrastConfig(kernel=NONE, weight_by_variance=True)
    # theta = 0 makes the Euler mean the identity
    assert contrast_value(path, (0.0, 0.0), m, Euler(), cfg) == pytest.approx(0.25**2)


def test_euler_contrast_is_the_least_squares_quadratic():
    m = affine_model(0.3)
    path = ou_path(1)
    cfg = ContrastConfig(kernel=TruncationKernel.oscillating(2, 3))
    inc = _increments(path, m, cfg)
    # normal-equation form: U = r'Wr - 2 th' D'W r + th' D'W D th
    design = np.stack([inc.x * inc.dt, inc.dt], axis=1)
    r = inc.y - inc.x
    w = inc.mass
    gram = design.T @ (w[:, None] * design)
    lin = design.T @ (w * r)
    const = r @ (w * r)
    for th in [(-0.5, 2.0), (-1.3, 0.4), (-0.05, -3.0)]:
        t = np.array(th)
        expect = const - 2 * t @ lin + t @ gram @ t
        got = contrast_value(path, th, m, Euler(), cfg)
        assert got == pytest.approx(expect, rel=1e-10)


def test_irregular_grid_and_weights():
    m = affine_model(0.5)
    times = np.array([0.0, 0.1, 0.3, 0.35])
    vals = np.array([1.0, 1.2, 0.9, 1.0])
    cfg = ContrastConfig(kernel=NONE, weight_by_variance=True)
    dt = np.diff(times)
    mean = vals[:-1] + dt * (THETA0[0] * vals[:-1] + THETA0[1])
    expect = np.sum((vals[1:] - mean) ** 2 / (0.25 * dt))
    assert contrast_value(SamplePath(times, vals), THETA0, m, Euler(), cfg) == pytest.approx(expect)


def test_kernel_hard_zero_on_injected_jump():
    m = affine_model(0.3)
    base = ou_path(2, t_final=40.0, n=200)
    cfg = ContrastConfig(kernel=TruncationKernel.oscillating(3, 3))
    dt = 0.2
    size = 1.0001 * cfg.kernel.support_bound * cfg.c * dt**cfg.beta
    k = 100
    vals = base.values.copy()
    vals[k + 1:] += size
    jumped = SamplePath(base.times, vals)
    # the increments either side of the jump, each starting at time 0
    left = SamplePath(base.times[: k + 1], vals[: k + 1])
    right = SamplePath(base.times[k + 1:] - base.times[k + 1], vals[k + 1:])
    for th in [THETA0, (-1.0, 1.0)]:
        for approx in (Euler(), KesslerOUExact()):
            total = contrast_value(jumped, th, m, approx, cfg)
            parts = (contrast_value(left, th, m, approx, cfg)
                     + contrast_value(right, th, m, approx, cfg))
            assert total == pytest.approx(parts, rel=1e-12)
    assert kept_fraction(jumped, m, cfg) == pytest.approx(199 / 200)


def test_indicator_removes_far_points():
    m = affine_model(0.3)
    path = SamplePath([0.0, 0.25, 0.5], [1.0, 20.0, 20.5])
    cfg = ContrastConfig(kernel=NONE, k_ind=2.0)   # bound 0.25^-2 = 16
    assert kept_fraction(path, m, cfg) == 0.5
    assert kept_fraction(path, m, ContrastConfig(kernel=NONE, k_ind=None)) == 1.0


def test_contrast_config_validation():
    for kw in ({"beta": 0.0}, {"beta": 0.5}, {"c": 0.0}, {"k_ind": 0.0}):
        with pytest.raises(ValueError):
            ContrastConfig(**kw)
    with pytest.raises(ValueError):
        contrast_value(SamplePath([0.0], [1.0]), THETA0, affine_model(0.3), Euler(),
                       ContrastConfig())


def test_affine_evaluator_matches_direct():
    m = affine_model(0.3, 1.0, GaussianCP(1.0, 0.0, math.sqrt(2)))
    path = ou_path(3, model=m)
    cfg = ContrastConfig(kernel=TruncationKernel.oscillating(3, 3))
    inc = _increments(path, m, cfg)
    for approx in (Euler(), KesslerOUExact(), KesslerGeneric(3)):
        ev = _AffineEvaluator(inc, m, approx, (-0.45, 1.9))
        for th in [(-0.5, 2.0), (-0.8, 3.0)]:
            assert ev(th) == pytest.approx(contrast_value(path, th, m, approx, cfg), rel=1e-9)


# -- minimize_contrast --


def test_noiseless_data_recovered():
    m = affine_model(0.0)
    path = euler_flow(THETA0, 6.0, 0.2, 400)
    res = minimize_contrast(path, m, Euler(), ContrastConfig(kernel=NONE))
    assert res.theta == pytest.approx(THETA0, abs=1e-8)
    assert res.converged
    assert res.kept_fraction == 1.0


@pytest.mark.parametrize("approx", [Euler(), KesslerOUExact(), KesslerGeneric(3)],
                         ids=lambda a: a.name)
def test_result_fields(approx):
    m = affine_model(0.3)
    res = minimize_contrast(ou_path(4), m, approx, ContrastConfig())
    assert res.converged
    assert 0 <= res.kept_fraction <= 1
    assert res.iterations > 0
    assert res.contrast_at_opt <= contrast_value(ou_path(4), THETA0, m, approx,
                                                 ContrastConfig()) + 1e-12
    assert abs(res.theta[0] + 0.5) < 0.2 and abs(res.theta[1] - 2) < 0.8


def test_result_clamped_to_box():
    m = affine_model(0.3)
    box = ((-5.0, -0.01), (-10.0, 1.0))
    res = minimize_contrast(ou_path(5), m, KesslerOUExact(), ContrastConfig(), box)
    assert res.theta[1] <= 1.0
    assert -5.0 <= res.theta[0] <= -0.01
    with pytest.raises(ValueError):
        minimize_contrast(ou_path(5), m, Euler(), ContrastConfig(), ((1.0, 0.0), (0.0, 1.0)))


def test_frozen_validation():
    m = affine_model(0.3)
    with pytest.raises(ValueError):
        minimize_contrast(ou_path(5), m, Euler(), ContrastConfig(), frozen={"theta3": 1.0})
    with pytest.raises(ValueError):
        minimize_contrast(ou_path(5), m, Euler(), ContrastConfig(),
                          frozen={"theta1": -0.5, "theta2": 2.0})
    res = minimize_contrast(ou_path(5), m, Euler(), ContrastConfig(), frozen={"theta1": -0.5})
    assert res.theta[0] == -0.5


def test_argmin_invariant_under_variance_weighting():
    m = affine_model(0.3, 1.0, GaussianCP(0.1, 0.0, math.sqrt(2)))
    path = ou_path(6, model=m)
    for approx in (Euler(), KesslerOUExact()):
        a = minimize_contrast(path, m, approx, ContrastConfig(weight_by_variance=False))
        b = minimize_contrast(path, m, approx, ContrastConfig(weight_by_variance=True))
        assert a.theta == pytest.approx(b.theta, abs=1e-7)
        # the values differ by the constant factor 1 / (sigma^2 dt)
        assert b.contrast_at_opt == pytest.approx(a.contrast_at_opt / (0.09 * 0.2), rel=1e-6)


def test_frozen_minimiser_equals_explicit_estimator():
    m = affine_model(0.3, 1.0, TemperedStable(0.5))
    cfg = ContrastConfig(kernel=TruncationKernel.phi0())
    approx = StableCorrected.for_model(m, cfg.beta, cfg.c, cfg.kernel)
    for seed in range(4):
        path = simulate_path(m, THETA0, 4.0, uniform_grid(100, 10**4), EXACT, seed=seed)
        res = minimize_contrast(path, m, approx, cfg, frozen={"theta1": -0.5})
        t2, _ = estimate_theta2_stable(path, -0.5, m, cfg)
        assert res.theta[1] == pytest.approx(t2, abs=1e-8)


def test_consistency_trend():
    m = affine_model(0.3)
    err = []
    for t_final in (250.0, 1000.0, 4000.0):
        n = int(t_final / 0.2)
        e = []
        for seed in range(50):
            path = simulate_path(m, THETA0, 4.0, uniform_grid(t_final, n), EXACT, seed=seed)
            res = minimize_contrast(path, m, KesslerOUExact(), ContrastConfig(kernel=NONE))
            e.append(np.hypot(res.theta[0] + 0.5, res.theta[1] - 2.0))
        err.append(np.mean(e))
    assert err[0] > err[1] > err[2]


def test_filter_drops_jumps_and_reduces_spread():
    # the filtered estimate keeps a small-jump bias (see the oscillating
    # kernels); what the filter buys with the exact mean is a smaller spread
    m = affine_model(0.3, 1.0, GaussianCP(1.0, 0.0, math.sqrt(2)))
    grid = uniform_grid(2000, 10**4)
    est = {"phi0": [], "none": []}
    kept = []
    for seed in range(20):
        path = simulate_path(m, THETA0, 4.0, grid, EXACT, seed=seed)
        for kind in est:
            cfg = ContrastConfig(kernel=TruncationKernel(kind))
            res = minimize_contrast(path, m, KesslerOUExact(), cfg)
            est[kind].append(res.theta)
            if kind == "phi0":
                kept.append(res.kept_fraction)
    assert max(kept) < 1.0
    s_f = np.std(est["phi0"], axis=0, ddof=1)
    s_u = np.std(est["none"], axis=0, ddof=1)
    assert np.all(s_f < s_u)


# -- explicit estimator --


def test_explicit_identity_and_plain_mean():
    m = affine_model(0.3, 1.0, TemperedStable(0.3))
    path = simulate_path(m, THETA0, 4.0, uniform_grid(50, 5000), EXACT, seed=9)
    cfg = ContrastConfig(kernel=NONE, k_ind=None)
    # the flat kernel has no finite fractional moment; a zero correction is passed
    t2, t2e = estimate_theta2_stable(path, -0.5, m, cfg, j=0.0)
    assert t2 == t2e
    dx = np.diff(path.values)
    plain = np.mean(dx - 0.01 * -0.5 * path.values[:-1]) / 0.01
    # the compensated drift moves the jump mean gamma Gamma(1 - alpha) into theta2
    assert t2e == pytest.approx(plain + gamma_tail(0.3).value, rel=1e-12)
    assert math.isinf(NONE.support_bound)

    cfg = ContrastConfig(c=1.5, kernel=TruncationKernel.phi0())
    for seed in range(3):
        path = simulate_path(m, THETA0, 4.0, uniform_grid(100, 10**4), EXACT, seed=seed)
        t2, t2e = estimate_theta2_stable(path, -0.5, m, cfg)
        j = kernel_fractional_moment(cfg.kernel, 0.3).value
        corr = 0.01 ** (0.49 * 0.7) * 1.5**0.7 * j
        assert t2e - t2 == pytest.approx(corr, abs=1e-12)


def test_explicit_estimator_errors():
    cfg = ContrastConfig()
    ts = affine_model(0.3, 1.0, TemperedStable(0.5))
    with pytest.raises(ValueError):
        estimate_theta2_stable(ou_path(1, 20, 100), -0.5, affine_model(0.3), cfg)
    with pytest.raises(ValueError):
        estimate_theta2_stable(SamplePath([0, 0.1, 0.3], [1, 1, 1]), -0.5, ts, cfg)
    # every increment outside the kernel support
    far = SamplePath([0.0, 0.01, 0.02], [0.0, 5.0, 10.0])
    with pytest.raises(ValueError):
        estimate_theta2_stable(far, -0.5, ts, cfg)


# -- step condition --


def test_step_condition_examples():
    with pytest.warns(RuntimeWarning):
        s = check_step_condition(10**4, 0.2, 2)
    assert s.value == pytest.approx(100 * 0.2**1.5) and s.warn
    assert s.value == pytest.approx(8.944, abs=1e-3)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        s = check_step_condition(10**4, 0.2, 6)
        assert s.value == pytest.approx(1.43e-2, rel=2e-3) and not s.warn
        tiny = check_step_condition(10**4, 1e-12, 2)
        assert tiny.value < 1e-10 and not tiny.warn
    for args in ((0, 0.2, 2), (10, 0.0, 2)):
        with pytest.raises(ValueError):
            check_step_condition(*args)

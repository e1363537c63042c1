import math

import numpy as np
import pytest
from scipy import integrate

from fklab.model import (
    KernelSpec,
    eval_kernel,
    eval_potential,
    exp_power_potential,
    kernel_moments,
    phi_of_R,
    power_log_potential,
    power_potential,
    sup_potential,
    sup_potential_interval,
    theta_of_R,
    valley_potential,
    valley_tail_bound_check,
)

TRUNC_HALF = KernelSpec(family="truncated", alpha1=0.5, alpha2=0.5)


def test_kernel_truncated_closed_form():
    assert eval_kernel(TRUNC_HALF, 0.0, 0.5) == pytest.approx(0.5**-1.5)
    assert eval_kernel(TRUNC_HALF, 0.0, 2.0) == 0.0


def test_kernel_diagonal_rejected():
    with pytest.raises(ValueError, match="singular"):
        eval_kernel(TRUNC_HALF, 1.0, 1.0)


@pytest.mark.parametrize(
    "kernel",
    [
        TRUNC_HALF,
        KernelSpec(family="stable_like", alpha1=0.8, alpha2=0.8),
        KernelSpec(family="tempered", alpha1=1.0, alpha2=1.0, gamma=2.0),
        KernelSpec(family="variable_order", alpha1=0.5, alpha2=1.0),
    ],
)
def test_kernel_symmetry_random_pairs(kernel, rng):
    x = rng.uniform(-3, 3, size=100)
    y = x + rng.uniform(0.01, kernel.kappa, size=100) * rng.choice([-1, 1], size=100)
    assert np.array_equal(eval_kernel(kernel, x, y), eval_kernel(kernel, y, x))


@pytest.mark.parametrize(
    "kernel",
    [
        TRUNC_HALF,
        KernelSpec(family="stable_like", alpha1=0.8, alpha2=0.8),
        KernelSpec(family="tempered", alpha1=1.0, alpha2=1.0, gamma=1.5),
        KernelSpec(family="variable_order", alpha1=0.5, alpha2=1.0),
    ],
)
def test_kernel_sandwich(kernel, rng):
    # c1 |z|^(-d-a1) <= J <= c2 |z|^(-d-a2) for 1e3 pairs within kappa
    x = rng.uniform(-5, 5, size=1000)
    z = rng.uniform(1e-4, kernel.kappa, size=1000) * rng.choice([-1, 1], size=1000)
    J = eval_kernel(kernel, x, x + z)
    az = np.abs(z)
    lower = kernel.c1 * az ** (-kernel.d - kernel.alpha1)
    upper = kernel.c2 * az ** (-kernel.d - kernel.alpha2)
    assert np.all(J >= lower * (1 - 1e-12))
    assert np.all(J <= upper * (1 + 1e-12))


def test_moments_truncated_closed_forms():
    L1, L2, L = kernel_moments(TRUNC_HALF, 0.25)
    assert L1 == pytest.approx(4.0)  # (2/alpha)(s^-alpha - 1) at s = 1/4
    assert kernel_moments(TRUNC_HALF, 1.0)[1] == pytest.approx(2.0 / 1.5)
    assert kernel_moments(TRUNC_HALF, 1.0)[0] == 0.0
    assert L == pytest.approx(L1 + 0.25 * (L2 / 0.25**2) ** 3)


def test_moments_match_quadrature():
    # independent quadrature route, relative 1e-8
    for s in (0.2, 0.5, 0.9):
        L1, L2, _ = kernel_moments(TRUNC_HALF, s)
        q1 = 2.0 * integrate.quad(lambda z: z**-1.5, s, 1.0, epsabs=1e-13, epsrel=1e-12)[0]
        q2 = 2.0 * integrate.quad(lambda z: z**2 * z**-1.5, 0.0, s, epsabs=1e-13, epsrel=1e-12)[0]
        assert L1 == pytest.approx(q1, rel=1e-8)
        assert L2 == pytest.approx(q2, rel=1e-8)


def test_moments_range_error():
    with pytest.raises(ValueError):
        kernel_moments(TRUNC_HALF, 1.5)


def test_variable_order_moments_bounded_by_orders():
    k = KernelSpec(family="variable_order", alpha1=0.5, alpha2=1.0)
    L1, L2, _ = kernel_moments(k, 0.25)
    lo1 = kernel_moments(TRUNC_HALF, 0.25)[0]
    hi1 = kernel_moments(KernelSpec(family="truncated", alpha1=1.0, alpha2=1.0), 0.25)[0]
    assert lo1 <= L1 <= hi1 * 1.0001


def test_potential_examples():
    assert eval_potential(power_potential(2.0), 3.0) == 9.0
    v = valley_potential(k0=3.0, alpha=0.5)
    assert eval_potential(v, 1.0) == 1.0  # x1 = 1, r1 = 1
    assert eval_potential(power_log_potential(1.0, 3.0), 0.0) == 0.0


def test_valley_is_one_sided():
    v = valley_potential(k0=3.0, alpha=0.5)
    assert eval_potential(v, 1.5) == 1.0
    assert eval_potential(v, -1.5) == pytest.approx(2.25)


def test_phi_examples():
    p = power_potential(2.0)
    assert phi_of_R(p, 2.0) == pytest.approx(4.0)
    assert phi_of_R(p, 0.5) == pytest.approx(1.0)  # max(R^2, K) at the K boundary


def test_phi_monotone_all_families():
    Rs = np.logspace(-1, 2, 25)
    for spec in (power_potential(2.0), power_log_potential(1.5, 1.0), exp_power_potential(0.5), valley_potential(k0=3.0, alpha=0.5)):
        vals = [phi_of_R(spec, R) for R in Rs]
        assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


def test_theta_examples_and_monotone():
    p = power_potential(2.0)
    assert theta_of_R(p, 1.0) == 0.0
    assert theta_of_R(p, 2.0) == 0.0
    v = valley_potential(k0=3.0, alpha=0.5)
    Rs = np.logspace(0, 3, 20)
    vals = [theta_of_R(v, R) for R in Rs]
    assert all(b <= a + 1e-15 for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-3 * vals[0]  # tends to zero


def test_theta_valley_clipped_series():
    v = valley_potential(k0=3.0, alpha=0.5)
    # beyond the low region: sum over balls with x_m >= R, boundary clipped
    R = 8.0  # at the center of ball 2
    r2 = 2.0 ** (-5.0)
    expected = r2 + sum(2.0 * float(m) ** (-5.0) for m in range(3, 4000))
    assert theta_of_R(v, R) == pytest.approx(expected, rel=1e-10)


def test_valley_tail_bound_check():
    v = valley_potential(k0=5.0, alpha=0.5)
    rep = valley_tail_bound_check(v, [2.0, 10.0, 100.0, 1000.0], eps=0.5)
    assert rep["bounded"]
    assert rep["exponent"] == pytest.approx(1.5)  # d/alpha - eps
    # sampled at ball centers the ratio decays (exponent 2/k0 - eps < 0)
    centers = [float(n) ** 5.0 for n in (2, 3, 4)]
    rc = valley_tail_bound_check(v, centers, eps=0.5)
    ratios = [row["ratio"] for row in rc["rows"]]
    assert ratios[0] >= ratios[1] >= ratios[2]
    # smaller eps means a larger exponent hence a larger fitted amplitude
    v9 = valley_potential(k0=9.0, alpha=0.5)
    rep_e = valley_tail_bound_check(v9, [2.0, 10.0, 100.0, 1000.0], eps=0.5)
    rep_half = valley_tail_bound_check(v9, [2.0, 10.0, 100.0, 1000.0], eps=0.25)
    assert rep_half["c0"] >= rep_e["c0"]


def test_valley_tail_bound_type_and_parameter_errors():
    with pytest.raises(TypeError):
        valley_tail_bound_check(power_potential(2.0), [2.0], eps=0.5)
    with pytest.raises(ValueError, match="k0"):
        valley_tail_bound_check(valley_potential(k0=3.0, alpha=0.5), [2.0], eps=0.5)


def test_single_ball_degenerate_tail():
    # effectively one ball: exp_log radii with strong decay, tiny low region
    v = valley_potential(radius_law="exp_log", c5=0.2, c6=10.0, eta2=0.0, off_family="power", theta=2.0, c=400.0)
    r1 = v.valley_radius(1)
    assert theta_of_R(v, 0.9) == pytest.approx(2.0 * r1, rel=1e-4)  # whole ball counted
    assert theta_of_R(v, 1.0 + r1 + 1e-9) < 1e-4 * (2.0 * r1)  # beyond it: next-ball dust only
    # power law: a single clipped interval behind the last relevant radius
    vp = valley_potential(k0=5.0, alpha=0.5)
    assert theta_of_R(vp, 2.0 + 1e-9) == pytest.approx(sum(2.0 * float(m) ** (-9.0) for m in range(2, 2000)), rel=1e-10)


def test_sup_potential_interval_valley():
    v = valley_potential(k0=3.0, alpha=0.5)
    assert sup_potential_interval(v, 0.5, 1.5) == pytest.approx(2.25)  # hits ball and off part
    assert sup_potential(v, 1.2) == pytest.approx(1.44)
    p = power_potential(2.0)
    assert sup_potential_interval(p, -3.0, 1.0) == 9.0


def test_kernel_spec_validation():
    with pytest.raises(ValueError):
        KernelSpec(family="nope", alpha1=1.0, alpha2=1.0)
    with pytest.raises(ValueError):
        KernelSpec(family="truncated", alpha1=1.5, alpha2=0.5)
    with pytest.raises(ValueError):
        KernelSpec(family="tempered", alpha1=1.0, alpha2=1.0, gamma=math.inf)
    with pytest.raises(ValueError):
        KernelSpec(family="stable_like", alpha1=0.5, alpha2=1.0)


def test_potential_spec_validation():
    with pytest.raises(ValueError):
        valley_potential(k0=0.4, alpha=0.5)  # radii not summable
    with pytest.raises(ValueError):
        power_potential(2.0, K=-1.0)
    with pytest.raises(ValueError):
        valley_potential(k0=3.0, alpha=0.5, K=0.5)  # valley must sit in the low set

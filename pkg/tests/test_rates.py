import math

import numpy as np
import pytest

from conftest import solve_case
from fklab.errors import SlicingInapplicableError, UnboundedInverseError
from fklab.model import KernelSpec, phi_of_R, power_log_potential, power_potential, valley_potential
from fklab.rates import (
    ComparisonFunction,
    alpha_rate,
    beta_hat,
    beta_rate,
    build_rate_bundle,
    calibrate_comparison_constant,
    calibrate_local_sp_constant,
    check_slicing_summability,
    gamma_rate,
    generalized_inverse,
    iuc_integral_test,
    mixed_sp_witness,
    power_log_iuc_classification,
    power_log_rate_inverse,
    psi_rate,
    rate_table,
    slicing_schedule,
)
from fklab.spectral import ground_state_log_tail

TRUNC = KernelSpec(family="truncated", alpha1=1.0, alpha2=1.0)
EPS = 1.0 / 22.0


def test_generalized_inverse_examples():
    assert generalized_inverse(lambda s: s * s, "increasing", 4.0) == pytest.approx(2.0, abs=1e-9)
    assert generalized_inverse(lambda s: math.exp(-s), "decreasing", math.exp(-3.0)) == pytest.approx(3.0, abs=1e-9)


def test_generalized_inverse_power_log_round_trip():
    pot = power_log_potential(1.5, 1.0)
    target = phi_of_R(pot, 5.0)
    r = generalized_inverse(lambda R: phi_of_R(pot, R), "increasing", target)
    assert r == pytest.approx(5.0, abs=1e-8)


def test_generalized_inverse_round_trip_property(rng):
    f = lambda s: s**3 + s
    for r in rng.uniform(0.01, 1e5, size=100):
        s = generalized_inverse(f, "increasing", r)
        assert f(s) >= r - 1e-8 * max(1.0, r)


def test_generalized_inverse_unbounded():
    with pytest.raises(UnboundedInverseError):
        generalized_inverse(lambda s: 1.0 - math.exp(-s), "increasing", 2.0)


@pytest.fixture(scope="module")
def power_bundle():
    return build_rate_bundle(TRUNC, power_potential(2.0), EPS)


@pytest.fixture(scope="module")
def power_log_bundle():
    return build_rate_bundle(TRUNC, power_log_potential(1.5, 1.0), EPS)


def test_comparison_function_range(power_bundle):
    cmp_fn = power_bundle.comparison
    assert cmp_fn.phi(0.0) == 1.0
    xs = np.linspace(0.0, 10.0, 40)
    vals = [cmp_fn.phi(x) for x in xs]
    assert all(0.0 < v <= 1.0 for v in vals)
    assert all(b <= a for a, b in zip(vals, vals[1:]))


def test_alpha_rate_limit_and_monotonicity(power_bundle):
    base = alpha_rate(power_bundle, 2.0, 1e12)
    limit = power_bundle.c_kappa / power_bundle.comparison.phi(3.0) ** 2
    assert base == pytest.approx(limit, rel=1e-10)
    assert alpha_rate(power_bundle, 4.0, 1.0) > alpha_rate(power_bundle, 2.0, 1.0)


def test_alpha_rate_hand_substitution():
    # direct substitution of the comparison profile at r=2, s=1:
    # alpha = c(kappa) exp(2/(1-6 eps) * 3 * log(1 + 3 + V(3 + 2 eps kappa))) * 2
    eps = 1.0 / 22.0
    bundle = build_rate_bundle(TRUNC, power_potential(2.0), eps)
    vsup = (3.0 + 2.0 * eps) ** 2
    expected = bundle.c_kappa * math.exp(2.0 / (1.0 - 6.0 * eps) * 3.0 * math.log(1.0 + 3.0 + vsup)) * 2.0
    assert alpha_rate(bundle, 2.0, 1.0) == pytest.approx(expected, rel=1e-12)


def test_gamma_vanishes_for_power(power_bundle):
    for s in (0.001, 0.01, 0.1, power_bundle.s0):
        assert gamma_rate(power_bundle, s) == 0.0


def test_beta_monotone_power_log(power_log_bundle):
    s_grid = power_log_bundle.s0 * np.logspace(-4, 0, 50)
    vals = [power_log_bundle.log_beta(s) for s in s_grid]
    assert all(b <= a + 1e-9 for a, b in zip(vals, vals[1:]))


def test_beta_freeze_rule(power_bundle):
    assert beta_rate(power_bundle, 2.0 * power_bundle.s0) == beta_rate(power_bundle, power_bundle.s0)


def test_psi_and_beta_hat(power_log_bundle):
    assert power_log_bundle.sobolev_p is None  # alpha1 = 1 = d
    kern = KernelSpec(family="truncated", alpha1=0.5, alpha2=0.5)
    b = build_rate_bundle(kern, power_log_potential(1.5, 1.0), EPS)
    assert b.sobolev_p == pytest.approx(4.0)
    Rs = np.logspace(0.1, 2, 30)
    psis = [psi_rate(b, R) for R in Rs]
    assert all(y <= x + 1e-12 for x, y in zip(psis, psis[1:]))
    s_grid = b.s0_hat * np.logspace(-4, 0, 30)
    vals = [b.log_beta_hat(s) for s in s_grid]
    assert all(y <= x + 1e-9 for x, y in zip(vals, vals[1:]))
    assert beta_hat(b, s_grid[0]) >= beta_hat(b, s_grid[-1])


def test_slicing_degenerate_gamma(power_bundle):
    with pytest.raises(SlicingInapplicableError, match="gamma vanishes"):
        slicing_schedule(power_bundle, 0.5)


EXP_VALLEY = valley_potential(radius_law="exp_log", c5=1e-8, c6=8.0, eta2=2.0, off_family="power_log", theta1=1.0, theta2=3.0, c=3.0)


@pytest.fixture(scope="module")
def exp_valley_bundle():
    return build_rate_bundle(TRUNC, EXP_VALLEY, EPS)


def test_slicing_summability_and_schedule(exp_valley_bundle):
    total, terms = check_slicing_summability(exp_valley_bundle)
    assert math.isfinite(total) and terms > 3
    n0, s_list, beta_tilde = slicing_schedule(exp_valley_bundle, 0.5)
    assert n0 >= 1 and len(s_list) >= 1
    assert beta_tilde > 0.0
    # s_n non-increasing
    assert all(y <= x + 1e-12 for x, y in zip(s_list, s_list[1:]))
    # n0 non-increasing as s increases
    n0_big, _, _ = slicing_schedule(exp_valley_bundle, 1.0)
    assert n0_big <= n0


def test_slicing_rejects_power_tail():
    bundle = build_rate_bundle(TRUNC, valley_potential(k0=5.0, alpha=0.5), EPS)
    with pytest.raises(SlicingInapplicableError):
        check_slicing_summability(bundle)


def test_closed_form_classifier_grid():
    grid = [(0.5, 0.0), (1.0, 1.0), (1.0, 2.0), (1.0, 3.0), (1.5, 0.0), (2.0, -1.0)]
    expected = [False, False, False, True, True, True]
    assert [power_log_iuc_classification(*p) for p in grid] == expected


def test_numeric_integral_agrees_with_closed_form():
    grid = [(0.5, 0.0), (1.0, 1.0), (1.0, 2.0), (1.0, 3.0), (1.5, 0.0), (2.0, -1.0)]
    expected = [False, False, False, True, True, True]
    agree = 0
    undecided = 0
    for (t1, t2), e in zip(grid, expected):
        res = iuc_integral_test(power_log_rate_inverse(t1, t2), 100.0)
        if res.verdict == "undecided":
            undecided += 1
            assert (t1, t2) == (1.0, 2.0)  # only the boundary case may stay open
        elif res.verdict == ("converges" if e else "diverges"):
            agree += 1
    assert agree >= 5
    assert undecided <= 1


def test_integral_test_frozen_constant_diverges():
    assert iuc_integral_test(lambda s: 3.0, 100.0).verdict == "diverges"


def test_integral_test_exact_log_square_converges():
    # 1/log^2(1+r) integrates finitely; the closed-form family table, not
    # this single integrand, is the authority for the (1,2) boundary.
    res = iuc_integral_test(lambda r: 1.0 / math.log1p(r) ** 2, 100.0)
    assert res.verdict == "converges"
    assert power_log_iuc_classification(1.0, 2.0) is False


def test_integral_test_theta2_3_shape_converges():
    g = lambda r: 1.0 / (math.log1p(r) * math.log(math.log(math.e + r)) ** 2)
    assert iuc_integral_test(g, 100.0).verdict == "converges"


def test_rate_table_columns(power_log_bundle):
    rows = rate_table(power_log_bundle, s_values=power_log_bundle.s0 * np.logspace(-3, 0, 7))
    assert set(rows[0]) == {"s", "beta", "gamma", "beta_hat", "beta_tilde"}
    assert all(r["gamma"] == 0.0 for r in rows)


# ---------------------------------------------------------------------------
# mixed super Poincare witness
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def witness_setup():
    pot = power_log_potential(1.5, 1.0)
    asm, spec = solve_case(theta=-1.0, potential=pot)  # theta unused when a potential is given
    grid = asm.grid
    cmp_fn = ComparisonFunction(kappa=TRUNC.kappa, epsilon=EPS, potential=pot)
    log_phi1 = ground_state_log_tail(spec)
    C0 = calibrate_comparison_constant(cmp_fn, grid.nodes, log_phi1)
    rng = np.random.default_rng(7)
    suite = []
    for _ in range(500):
        knots = np.linspace(-grid.R, grid.R, 25)
        suite.append(np.interp(grid.nodes, knots, rng.normal(size=knots.size)))
    c_kappa = calibrate_local_sp_constant(
        TRUNC, grid, asm.Bform, cmp_fn, suite, r_values=(1.0, 2.0, 4.0), s_values=(0.05, 0.2, 1.0)
    )
    bundle = build_rate_bundle(TRUNC, pot, EPS, C0=C0, c_kappa=c_kappa)
    return asm, spec, bundle


def test_witness_zero_function(witness_setup):
    asm, spec, bundle = witness_setup
    lhs, rhs = mixed_sp_witness(bundle, asm.form_value, np.zeros(asm.grid.N), spec.ground_state, asm.grid.h, 0.1)
    assert lhs == 0.0 and rhs == 0.0


def test_witness_ground_state(witness_setup):
    asm, spec, bundle = witness_setup
    for s in (1e-3, 0.05, 1.0):
        lhs, rhs = mixed_sp_witness(bundle, asm.form_value, spec.ground_state, spec.ground_state, asm.grid.h, s)
        assert lhs <= rhs


def test_witness_scaling_homogeneity(witness_setup):
    asm, spec, bundle = witness_setup
    f = np.exp(-asm.grid.nodes**2)
    lhs1, rhs1 = mixed_sp_witness(bundle, asm.form_value, f, spec.ground_state, asm.grid.h, 0.2)
    lhs2, rhs2 = mixed_sp_witness(bundle, asm.form_value, 2.0 * f, spec.ground_state, asm.grid.h, 0.2)
    assert lhs2 == pytest.approx(4.0 * lhs1, rel=1e-12)
    assert rhs2 == pytest.approx(4.0 * rhs1, rel=1e-12)  # gamma-term absent (Theta = 0)


def test_witness_random_sweep_no_violations(witness_setup):
    asm, spec, bundle = witness_setup
    grid = asm.grid
    rng = np.random.default_rng(99)  # fresh draw, distinct from calibration
    s_values = bundle.s0 * np.logspace(-3, 0.5, 10)
    violations = 0
    for _ in range(200):
        knots = np.linspace(-grid.R, grid.R, 25)
        f = np.interp(grid.nodes, knots, rng.normal(size=knots.size))
        for s in s_values:
            lhs, rhs = mixed_sp_witness(bundle, asm.form_value, f, spec.ground_state, grid.h, s)
            violations += lhs > rhs
    assert violations == 0

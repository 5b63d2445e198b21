"""Exact oracles, quadrature cross-checks, and power-law fitting."""

import math

import numpy as np
import pytest

from sntail.density import DensityModel
from sntail.oracles import (
    degenerate_component_check,
    leading_coeff_fit,
    rademacher_tail_exact,
    region_tail_integral,
    regularized_incomplete_beta,
    sphere_tail_exact,
    tail_window,
)


def test_cross_oracle_region_vs_sphere():
    # two independent routes to the same number: incomplete beta vs quadrature
    for n in (2, 3, 4):
        model = DensityModel.iid_normal(n)
        for eps in (0.01, 0.05, 0.1):
            sphere = sphere_tail_exact(n, math.sqrt(n) - eps)
            region = region_tail_integral(model, n, eps, 2.0, "weighted")
            assert region.value == pytest.approx(sphere.value, rel=1e-5)


def test_sphere_tail_shape():
    for n in (2, 3, 5, 8):
        assert sphere_tail_exact(n, 0.0).value == pytest.approx(0.5, rel=1e-13)
        assert sphere_tail_exact(n, math.sqrt(n)).value == 0.0
        grid = np.linspace(0.0, math.sqrt(n), 60)
        vals = [sphere_tail_exact(n, t).value for t in grid]
        assert all(a > b for a, b in zip(vals, vals[1:]))


def test_sphere_tail_frozen_value():
    got = sphere_tail_exact(2, math.sqrt(2.0) - 0.01).value
    assert got == pytest.approx(0.037875979175382504, rel=1e-13)


def test_sphere_tail_exactly_linear_at_n3():
    # the n=3 law is eps / (2 sqrt(3)) with no higher-order terms
    for eps in (1e-6, 1e-3, 0.1, 0.5):
        got = sphere_tail_exact(3, math.sqrt(3.0) - eps).value
        assert got == pytest.approx(eps / (2.0 * math.sqrt(3.0)), rel=1e-12)


def test_incomplete_beta_symmetry_sweep():
    rng = np.random.default_rng(20240603)
    for _ in range(400):
        a = float(rng.uniform(0.1, 30.0))
        b = float(rng.uniform(0.1, 30.0))
        x = float(rng.uniform(0.0, 1.0))
        total = regularized_incomplete_beta(a, b, x) + regularized_incomplete_beta(
            b, a, 1.0 - x
        )
        assert abs(total - 1.0) <= 1e-13


def test_incomplete_beta_against_scipy():
    from scipy.special import betainc

    rng = np.random.default_rng(99)
    for _ in range(200):
        a = float(rng.uniform(0.2, 20.0))
        b = float(rng.uniform(0.2, 20.0))
        x = float(rng.uniform(0.0, 1.0))
        assert regularized_incomplete_beta(a, b, x) == pytest.approx(
            betainc(a, b, x), abs=1e-14, rel=1e-12
        )


def test_leading_coeff_fit_recovers_synthetic_law():
    rng = np.random.default_rng(17)
    for _ in range(20):
        c = float(rng.uniform(0.05, 5.0))
        e = float(rng.uniform(0.3, 3.0))
        grid = np.geomspace(1e-4, 1e-2, 9)
        fit = leading_coeff_fit(lambda t: c * t**e, 4, grid, expected_exponent=e)
        assert fit.coefficient == pytest.approx(c, rel=1e-10)
        assert fit.exponent == pytest.approx(e, abs=1e-10)
        assert fit.conforming


def test_leading_coeff_fit_grid_hygiene():
    with pytest.raises(ValueError):
        leading_coeff_fit(lambda t: t, 3, np.array([1e-3, 1e-3, 1e-2]))
    with pytest.raises(ValueError):
        leading_coeff_fit(lambda t: t, 3, np.array([1e-3, 1e-2]))
    with pytest.raises(ValueError):
        leading_coeff_fit(lambda t: t, 3, np.array([-1e-3, 1e-3, 1e-2]))
    fit = leading_coeff_fit(lambda t: t, 3, np.array([1e-2, 1e-3, 1e-4]))
    # grid is recorded largest-first, marching toward zero
    assert fit.epsilons == (1e-2, 1e-3, 1e-4)


def test_leading_coeff_fit_flags_flat_tail():
    # an atom at the boundary fits exponent 0 and must not conform
    fit = leading_coeff_fit(
        lambda t: 0.125, 3, np.geomspace(1e-3, 1e-1, 7)
    )
    assert fit.exponent == pytest.approx(0.0, abs=1e-12)
    assert not fit.conforming


def test_rademacher_tail_enumeration():
    # inside the window only the all-equal sign pattern clears the threshold
    for n in (2, 3, 4, 8, 12):
        eps = 0.4 / math.sqrt(n)
        res = rademacher_tail_exact(n, eps)
        assert res.value == 2.0 ** (-n)
        assert res.error_estimate == 0.0
    # direct check against a brute-force count at n=4
    n, eps = 4, 0.2
    threshold = math.sqrt(n) - eps
    count = 0
    for mask in range(2**n):
        signs = np.array([1.0 if mask >> j & 1 else -1.0 for j in range(n)])
        if signs.sum() / math.sqrt(n) > threshold:
            count += 1
    assert rademacher_tail_exact(n, eps).value == count / 2.0**n


def test_rademacher_tail_flat_in_window():
    # the tail is an atom: constant over the whole admissible window
    n = 5
    lo = rademacher_tail_exact(n, 1e-9).value
    hi = rademacher_tail_exact(n, 0.99 * 0.5 / math.sqrt(n)).value
    assert lo == hi == 2.0 ** (-n)


def test_degenerate_component_tail_is_zero():
    for n in (3, 4, 6):
        eps = 0.9 * (math.sqrt(n) - math.sqrt(n - 1.0))
        res = degenerate_component_check(n, eps)
        assert res.value == 0.0
        assert res.error_estimate == 0.0


def test_tail_window_values():
    assert tail_window(3, 2.0) == pytest.approx(math.sqrt(3) - math.sqrt(2), rel=1e-12)
    for n in (2, 3, 5):
        for beta in (1.5, 2.0, 3.0):
            w = tail_window(n, beta)
            assert 0.0 < w < n ** (1.0 - 1.0 / beta)


def test_region_integral_respects_window():
    model = DensityModel.iid_normal(3)
    with pytest.raises(ValueError):
        region_tail_integral(model, 3, 2.0 * tail_window(3, 2.0), 2.0, "weighted")
    with pytest.raises(ValueError):
        region_tail_integral(model, 3, -0.1, 2.0, "weighted")


def test_region_integral_beta3():
    # quadrature route works off the Euclidean case too
    model = DensityModel.iid_normal(2)
    eps = 0.05
    res = region_tail_integral(model, 2, eps, 3.0, "weighted")
    assert res.value > 0.0
    assert res.error_estimate < 1e-6 * res.value + 1e-12


def test_paper_integrand_differs_from_weighted():
    # the two integrands answer different questions; they must not coincide
    model = DensityModel.iid_normal(3)
    w = region_tail_integral(model, 3, 0.1, 2.0, "weighted").value
    p = region_tail_integral(model, 3, 0.1, 2.0, "paper").value
    assert abs(w - p) > 1e-3 * w

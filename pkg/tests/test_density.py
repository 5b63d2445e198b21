"""Density models, radial profiles, and the model spec grammar."""

import math

import numpy as np
import pytest
from scipy import integrate

import sntail.density as density
from sntail.density import (
    DISCRETE_MODELS,
    DensityModel,
    RadialProfileQuery,
    h_profile,
    parse_model,
    weighted_profile_mirror,
)


def test_paper_profile_at_ones_iid_normal():
    # integral of f(z*ones) over all z has the closed form below
    for n in range(2, 7):
        model = DensityModel.iid_normal(n)
        got = h_profile(model, RadialProfileQuery(np.ones(n - 1), "paper"))
        expect = (2.0 * math.pi) ** (-(n - 1) / 2.0) / math.sqrt(n)
        assert got == pytest.approx(expect, rel=1e-9)


def test_change_of_variables_recovers_total_mass_n2():
    # integrating weighted profile plus its mirror over all directions gives 1
    model = DensityModel.iid_normal(2)

    def both(v: float) -> float:
        arr = np.array([v])
        fwd = h_profile(model, RadialProfileQuery(arr, "weighted"))
        return fwd + weighted_profile_mirror(model, arr)

    total, err = integrate.quad(both, -np.inf, np.inf, limit=200)
    assert total == pytest.approx(1.0, abs=max(1e-8, 10.0 * err))


def test_profile_invariant_under_wider_truncation(monkeypatch):
    # doubling the scanned domain (halving the effective cutoff) is a no-op
    # smooth models only: the folded density's support-edge jump adds
    # quadrature noise that has nothing to do with truncation
    cases = [
        (DensityModel.iid_normal(3), "paper"),
        (DensityModel.iid_student_t(3, nu=4.0), "weighted"),
        (
            DensityModel.gaussian(
                np.zeros(3),
                np.array([[1.0, 0.2, 0.0], [0.2, 1.0, 0.2], [0.0, 0.2, 1.0]]),
            ),
            "weighted",
        ),
    ]
    baselines = [
        h_profile(m, RadialProfileQuery(np.array([1.0, 1.0]), var))
        for m, var in cases
    ]
    original = density._scan_support

    def widened(psi, lo_sign, hi_sign):
        span = original(psi, lo_sign, hi_sign)
        if span is None:
            return None
        z_lo, z_hi, hints = span
        # outward in both directions, never into the support
        z_lo = 2.0 * z_lo if z_lo < 0.0 else 0.5 * z_lo
        z_hi = 2.0 * z_hi if z_hi > 0.0 else 0.5 * z_hi
        return z_lo, z_hi, hints

    monkeypatch.setattr(density, "_scan_support", widened)
    for (m, var), base in zip(cases, baselines):
        wide = h_profile(m, RadialProfileQuery(np.array([1.0, 1.0]), var))
        assert wide == pytest.approx(base, rel=2e-10)


def test_pdf_normalization_spot_checks():
    rng = np.random.default_rng(314159)
    models = [
        DensityModel.iid_normal(2),
        DensityModel.iid_student_t(2, nu=5.0),
        DensityModel.gaussian(
            np.zeros(2), np.array([[1.0, 0.3], [0.3, 1.0]])
        ),
    ]
    for model in models:
        # crude importance check: pdf ratio f(x)/phi(x) under normal draws
        x = rng.standard_normal((200_000, 2))
        phi = np.exp(-0.5 * np.sum(x * x, axis=1)) / (2.0 * math.pi)
        est = float(np.mean(model.pdf(x) / phi))
        assert est == pytest.approx(1.0, abs=0.02)


def test_folded_normal_support_and_positivity():
    model = DensityModel.iid_folded_normal(3, shift=1.0)
    below = np.array([[0.5, 2.0, 2.0]])
    assert model.pdf(below)[0] == 0.0
    above = np.array([[1.5, 2.0, 2.5]])
    assert model.pdf(above)[0] > 0.0
    u = np.random.default_rng(11).uniform(size=(10_000, 3))
    draws = model.draw_from_uniforms(u)
    assert np.all(draws >= 1.0)


def test_student_t_requires_heavy_tail_guard():
    with pytest.raises(ValueError):
        DensityModel.iid_student_t(3, nu=2.0)
    with pytest.raises(ValueError):
        DensityModel.iid_student_t(3, nu=1.5)
    DensityModel.iid_student_t(3, nu=2.0 + 1e-9)


def test_parse_model_families():
    m = parse_model("iid-normal", 3)
    assert m.kind == "iid-normal" and m.n == 3
    m = parse_model("iid-student-t:nu=5", 4)
    assert m.kind == "iid-student-t" and m.nu == 5.0
    m = parse_model("iid-folded-normal:shift=2", 3)
    assert m.kind == "iid-folded-normal" and m.shift == 2.0
    m = parse_model("gaussian:mean=0 0,cov=1 0.3 0.3 1", 2)
    assert m.kind == "gaussian"
    np.testing.assert_allclose(m.chol @ m.chol.T, [[1.0, 0.3], [0.3, 1.0]])
    for name in DISCRETE_MODELS:
        assert parse_model(name, 3) == name


def test_parse_model_rejects_bad_specs():
    with pytest.raises(ValueError):
        parse_model("iid-laplace", 3)
    with pytest.raises(ValueError):
        parse_model("iid-student-t", 3)
    with pytest.raises(ValueError):
        parse_model("gaussian:cov=1 0 0", 2)
    with pytest.raises(ValueError):
        parse_model("rademacher:p=0.4", 3)
    with pytest.raises(ValueError):
        parse_model("iid-normal:bogus=1", 3)


def test_gaussian_requires_valid_covariance():
    with pytest.raises(ValueError):
        DensityModel.gaussian(np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(ValueError):
        DensityModel.gaussian(np.zeros(2), np.array([[1.0, 0.5], [0.4, 1.0]]))


def test_profile_vanishes_off_support():
    # direction with a negative coordinate never meets the folded support
    model = DensityModel.iid_folded_normal(2)
    got = h_profile(model, RadialProfileQuery(np.array([-1.0]), "weighted"))
    assert got == 0.0

"""Independent oracles for tail probabilities of self-normalized sums.

Every closed-form constant this package produces must survive comparison
against at least one of these routes, each built from first principles and
sharing no algebra with the formulas under test:

  sphere_tail_exact       exact spherical-cap probability for rotation
                          invariant laws (regularized incomplete beta)
  region_tail_integral    direct quadrature of the joint density over the
                          tail region, in ray coordinates
  rademacher_tail_exact   exhaustive enumeration of all sign vectors
  degenerate_component_check  exact reduction when one coordinate is pinned

`leading_coeff_fit` extracts the small-epsilon power law from any of them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np
from scipy import integrate

from .analytic_core import g_many
from .density import (
    DensityModel,
    QuadratureError,
    RadialProfileQuery,
    ZPlan,
    build_z_plan,
    h_profile,
    profile_batch,
)

__all__ = [
    "OracleResult",
    "CoefficientFit",
    "regularized_incomplete_beta",
    "sphere_tail_exact",
    "rademacher_tail_exact",
    "degenerate_component_check",
    "region_tail_integral",
    "tail_window",
    "leading_coeff_fit",
    "RADEMACHER_ENUMERATION_CAP",
]

RADEMACHER_ENUMERATION_CAP = 24

_CF_TOL = 1e-15
_CF_MAX_ITER = 400
_FPMIN = 1e-300


@dataclass(frozen=True)
class OracleResult:
    """Value produced by one oracle route, with its own error estimate."""

    value: float
    method: str
    error_estimate: float
    metadata: Mapping[str, object]


@dataclass(frozen=True)
class CoefficientFit:
    """Power-law fit q(eps) ~ coefficient * eps**exponent on a grid.

    `conforming` is judged against `expected_exponent` (default (n-1)/2):
    the log-log fit must be tight and the fitted exponent close to the
    expected one.  A flat tail (atom at the threshold) fits cleanly with
    exponent 0 and is flagged as non-conforming.
    """

    coefficient: float
    exponent: float
    epsilons: tuple[float, ...]
    residual: float
    expected_exponent: float
    conforming: bool


def _beta_cf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta, modified Lentz scheme."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    frac = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        frac *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        frac *= delta
        if abs(delta - 1.0) < _CF_TOL:
            return frac
    raise RuntimeError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b), the regularized incomplete beta function."""
    if a <= 0.0 or b <= 0.0:
        raise ValueError("shape parameters must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return float(x)
    log_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, 1.0 - x) / b


def sphere_tail_exact(n: int, threshold: float) -> OracleResult:
    """P(T(n) > threshold) for any spherically symmetric model.

    For such models the normalized vector is uniform on the unit sphere and
    T(n)/sqrt(n) is its first coordinate, whose square is Beta-distributed.
    This closed form is exact for iid standard normals in particular, and
    depends on none of the constants under test.
    """
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    root_n = math.sqrt(n)
    if abs(threshold) > root_n:
        raise ValueError(
            f"threshold {threshold} outside the attainable range [-{root_n}, {root_n}]"
        )
    s = threshold / root_n
    upper_half = 0.5 * regularized_incomplete_beta(0.5 * (n - 1), 0.5, 1.0 - s * s)
    value = upper_half if threshold >= 0.0 else 1.0 - upper_half
    return OracleResult(
        value=float(value),
        method="sphere-exact",
        error_estimate=5e-15,
        metadata={"n": n, "threshold": float(threshold)},
    )


def rademacher_tail_exact(n: int, epsilon: float) -> OracleResult:
    """P(T(n) > sqrt(n) - eps) for iid signs, by enumerating all 2**n vectors.

    Within the window 0 < eps < 1/(2 sqrt(n)) only the all-plus vector
    clears the threshold, so the tail is exactly 2**-n; the enumeration
    verifies rather than assumes that.
    """
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    if n > RADEMACHER_ENUMERATION_CAP:
        raise ValueError(
            f"enumeration capped at n = {RADEMACHER_ENUMERATION_CAP}, got {n}"
        )
    window = 0.5 / math.sqrt(n)
    if not 0.0 < epsilon < window:
        raise ValueError(
            f"epsilon must lie in (0, {window:.6g}) for n = {n}, got {epsilon}"
        )
    codes = np.arange(2**n, dtype=np.uint32)
    minus_counts = np.bitwise_count(codes).astype(np.int64)
    sums = n - 2 * minus_counts
    stats = sums / math.sqrt(n)
    hits = int(np.count_nonzero(stats > math.sqrt(n) - epsilon))
    return OracleResult(
        value=hits / float(2**n),
        method="enumeration",
        error_estimate=0.0,
        metadata={"n": n, "epsilon": float(epsilon), "hits": hits, "total": 2**n},
    )


def degenerate_component_check(n: int, epsilon: float) -> OracleResult:
    """Exact tail when the first coordinate is identically zero.

    With the remaining n - 1 coordinates iid standard normal, both the sum
    and the norm ignore the pinned coordinate, so the statistic equals the
    (n-1)-dimensional one and the sphere formula applies at the original
    threshold.  The tail vanishes identically once sqrt(n) - eps exceeds
    sqrt(n - 1).
    """
    if n < 3:
        raise ValueError(f"n must be >= 3 so that n - 1 >= 2, got {n}")
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    threshold = math.sqrt(n) - epsilon
    if threshold > math.sqrt(n - 1):
        value, err = 0.0, 0.0
    else:
        inner = sphere_tail_exact(n - 1, threshold)
        value, err = inner.value, inner.error_estimate
    return OracleResult(
        value=value,
        method="exact-reduction",
        error_estimate=err,
        metadata={"n": n, "epsilon": float(epsilon), "threshold": threshold},
    )


def tail_window(n: int, beta: float = 2.0) -> float:
    """Width of the epsilon window on which the tail region stays bounded.

    The region {g > n**(1-1/beta) - eps} is a bounded convex neighborhood of
    the all-ones direction exactly when eps < n**(1-1/beta) - (n-1)**(1-1/beta).
    """
    return n ** (1.0 - 1.0 / beta) - (n - 1) ** (1.0 - 1.0 / beta)


def _envelope_value(t: np.ndarray, n: int, beta: float) -> np.ndarray:
    """sup of g over the slice with one coordinate pinned to t (t >= 0).

    With r = n - 2 free coordinates the supremum has all of them equal to
    w* = (c1/c0)**(1/(beta-1)) where c0 = 1 + t, c1 = 1 + t**beta.
    """
    t = np.asarray(t, dtype=float)
    r = n - 2
    c0 = 1.0 + t
    c1 = 1.0 + np.abs(t) ** beta
    if r == 0:
        return c0 / c1 ** (1.0 / beta)
    w = (c1 / c0) ** (1.0 / (beta - 1.0))
    return (c0 + r * w) / (c1 + r * w**beta) ** (1.0 / beta)


def _bisect_scalar(
    fn: Callable[[float], float], lo: float, hi: float, iters: int = 80
) -> float:
    """Root of fn on [lo, hi] assuming fn(lo) and fn(hi) differ in sign."""
    f_lo = fn(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if fn(mid) * f_lo > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _coordinate_range(n: int, beta: float, level: float) -> tuple[float, float]:
    """Interval of coordinate values reachable inside the region {g > level}."""

    def fn(t: float) -> float:
        return float(_envelope_value(np.array([t]), n, beta)[0]) - level

    if fn(0.0) >= 0.0:
        raise ValueError("tail region touches the orthant boundary")
    hi = 2.0
    for _ in range(60):
        if fn(hi) < 0.0:
            break
        hi *= 2.0
    else:
        raise QuadratureError("tail region upper extent not bracketed")
    return _bisect_scalar(fn, 0.0, 1.0), _bisect_scalar(fn, hi, 1.0)


def _radial_boundary(
    dirs: np.ndarray, beta: float, level: float, r_cap: float
) -> np.ndarray:
    """Distance from the all-ones point to {g = level} along each direction.

    g is quasiconcave with its maximum at the all-ones point, so it is
    non-increasing along every outgoing ray and the crossing is unique.
    """
    k = dirs.shape[0]
    lo = np.zeros(k)
    hi = np.full(k, r_cap)
    vals = g_many(1.0 + hi[:, None] * dirs, beta)
    if np.any(vals > level):
        raise QuadratureError("region extends past its certified bounding ball")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        inside = g_many(1.0 + mid[:, None] * dirs, beta) > level
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return 0.5 * (lo + hi)


def _region_integrand(
    model: DensityModel, pts: np.ndarray, integrand: str, plan: ZPlan
) -> np.ndarray:
    if integrand == "weighted":
        return profile_batch(model, pts, "weighted", plan)
    vals = profile_batch(model, pts, "paper", plan)
    return vals * np.prod(pts, axis=-1)


def _polar_directions(count: int) -> np.ndarray:
    theta = (np.arange(count) + 0.5) * (2.0 * math.pi / count)
    return np.stack((np.cos(theta), np.sin(theta)), axis=1)


def _sphere_directions(n_mu: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss product grid on the unit sphere: nodes (k, 3) and weights (k,).

    Gauss-Legendre in the polar cosine crossed with a uniform azimuthal grid
    of 2 * n_mu points integrates spherical harmonics up to degree
    2 * n_mu - 1 exactly, so smooth integrands converge spectrally.
    """
    mu, w_mu = np.polynomial.legendre.leggauss(n_mu)
    n_phi = 2 * n_mu
    phi = (np.arange(n_phi) + 0.5) * (2.0 * math.pi / n_phi)
    sin_theta = np.sqrt(1.0 - mu * mu)
    cos_phi, sin_phi = np.cos(phi), np.sin(phi)
    dirs = np.empty((n_mu * n_phi, 3))
    dirs[:, 0] = np.outer(sin_theta, cos_phi).ravel()
    dirs[:, 1] = np.outer(sin_theta, sin_phi).ravel()
    dirs[:, 2] = np.repeat(mu, n_phi)
    weights = np.repeat(w_mu, n_phi) * (2.0 * math.pi / n_phi)
    return dirs, weights


def region_tail_integral(
    model: DensityModel,
    n: int,
    epsilon: float,
    beta: float = 2.0,
    integrand: str = "weighted",
    rel_target: float = 1e-8,
) -> OracleResult:
    """Tail probability route via quadrature over the ray-coordinate region.

    The event {T > n**(1-1/beta) - eps} maps, in coordinates x = z*(1, v)
    with z > 0, to {g(v) > n**(1-1/beta) - eps}, a bounded convex
    neighborhood of the all-ones point when eps is inside `tail_window`.
    The weighted integrand z**(n-1) f(z, zv) makes the region integral equal
    the tail probability exactly; the paper integrand (prod v_j) * h(v)
    evaluates the as-published region expression instead.

    n is capped at 4 (one to three region dimensions).
    """
    if integrand not in ("paper", "weighted"):
        raise ValueError(f"integrand must be paper or weighted, got {integrand!r}")
    if not 2 <= n <= 4:
        raise ValueError(f"region quadrature supports 2 <= n <= 4, got {n}")
    if model.n != n:
        raise ValueError(f"model dimension {model.n} does not match n = {n}")
    window = tail_window(n, beta)
    if not 0.0 < epsilon < window:
        raise ValueError(
            f"epsilon must lie in (0, {window:.6g}) for n = {n}, beta = {beta}"
        )
    rel_target = max(rel_target, 1e-12)
    level = n ** (1.0 - 1.0 / beta) - epsilon
    dim = n - 1
    t_lo, t_hi = _coordinate_range(n, beta, level)

    if dim == 1:
        return _region_dim1(model, n, level, integrand, rel_target, t_lo, t_hi, epsilon, beta)

    r_cap = 1.0001 * math.sqrt(dim) * max(t_hi - 1.0, 1.0 - t_lo)

    # Shared ray-parameter quadrature plan, built from boundary probes.
    if dim == 2:
        probe_dirs = _polar_directions(16)
    else:
        probe_dirs, _ = _sphere_directions(4)
    probe_r = _radial_boundary(probe_dirs, beta, level, r_cap)
    probes = np.vstack((np.ones((1, dim)), 1.0 + probe_r[:, None] * probe_dirs))
    plan = build_z_plan(model, probes)

    def level_value(lvl: int) -> tuple[float, int]:
        if dim == 2:
            n_dir = 96 * 2**lvl
            n_t = 48 * 2**lvl
            dirs = _polar_directions(n_dir)
            dir_w = np.full(n_dir, 2.0 * math.pi / n_dir)
        else:
            n_mu = 16 * 2**lvl
            n_t = 24 * 2**lvl
            dirs, dir_w = _sphere_directions(n_mu)
        radii = _radial_boundary(dirs, beta, level, r_cap)
        x_gl, w_gl = np.polynomial.legendre.leggauss(n_t)
        t_nodes = radii[:, None] * (0.5 * (x_gl + 1.0))[None, :]
        t_weights = radii[:, None] * 0.5 * w_gl[None, :]
        pts = 1.0 + t_nodes[:, :, None] * dirs[:, None, :]
        flat = pts.reshape(-1, dim)
        f_vals = _region_integrand(model, flat, integrand, plan).reshape(t_nodes.shape)
        inner = np.sum(f_vals * t_nodes ** (dim - 1) * t_weights, axis=1)
        return float(np.dot(inner, dir_w)), dirs.shape[0] * n_t

    max_level = 4 if dim == 2 else 2
    prev, diff = None, math.inf
    for lvl in range(max_level + 1):
        current, nodes_used = level_value(lvl)
        if prev is not None:
            diff = abs(current - prev)
            if diff <= rel_target * max(abs(current), 1e-300):
                return OracleResult(
                    value=current,
                    method="region-quadrature",
                    error_estimate=diff,
                    metadata={
                        "n": n,
                        "epsilon": float(epsilon),
                        "beta": float(beta),
                        "integrand": integrand,
                        "refinement_level": lvl,
                        "nodes": nodes_used,
                    },
                )
        prev = current
    raise QuadratureError(
        f"region quadrature missed relative target {rel_target:.1e}; "
        f"last refinement moved the value by {diff:.3e}"
    )


def _region_dim1(
    model: DensityModel,
    n: int,
    level: float,
    integrand: str,
    rel_target: float,
    t_lo: float,
    t_hi: float,
    epsilon: float,
    beta: float,
) -> OracleResult:
    variant = "weighted" if integrand == "weighted" else "paper"

    def fv(t: float) -> float:
        h = h_profile(model, RadialProfileQuery(np.array([t]), variant))
        return h if integrand == "weighted" else t * h

    value, abserr, *rest = integrate.quad(
        fv, t_lo, t_hi, epsabs=1e-14, epsrel=rel_target * 0.1, limit=200, full_output=1
    )
    if len(rest) > 1 and abserr > 100.0 * max(1e-14, rel_target * abs(value)):
        raise QuadratureError(
            f"interval quadrature stalled: estimated error {abserr:.3e}"
        )
    return OracleResult(
        value=float(value),
        method="region-quadrature",
        error_estimate=float(abserr) + 1e-11 * abs(t_hi - t_lo),
        metadata={
            "n": n,
            "epsilon": float(epsilon),
            "beta": float(beta),
            "integrand": integrand,
            "interval": (t_lo, t_hi),
        },
    )


def leading_coeff_fit(
    evaluator: Callable[[float], float],
    n: int,
    eps_grid: np.ndarray,
    expected_exponent: float | None = None,
    residual_threshold: float = 1e-2,
    exponent_tolerance: float = 0.1,
) -> CoefficientFit:
    """Least-squares power-law fit of a tail evaluator on an epsilon grid.

    Fits log q against log eps.  The residual is the RMS misfit in log
    space; `conforming` additionally requires the fitted exponent to land
    near `expected_exponent` (default (n-1)/2, the generic small-epsilon
    exponent in the continuous case).
    """
    eps = np.array(sorted(float(e) for e in np.atleast_1d(eps_grid)))
    if eps.size < 3:
        raise ValueError("need at least 3 grid points for a meaningful fit")
    if np.any(eps <= 0.0):
        raise ValueError("epsilon grid must be positive")
    if np.any(np.diff(eps) == 0.0):
        raise ValueError("epsilon grid must not contain duplicates")
    values = np.array([float(evaluator(e)) for e in eps])
    if np.any(values <= 0.0):
        raise ValueError("tail evaluator returned non-positive values; nothing to fit")
    log_e, log_q = np.log(eps), np.log(values)
    slope, intercept = np.polyfit(log_e, log_q, 1)
    resid = log_q - (slope * log_e + intercept)
    rms = float(np.sqrt(np.mean(resid * resid)))
    expected = 0.5 * (n - 1) if expected_exponent is None else float(expected_exponent)
    conforming = rms <= residual_threshold and abs(slope - expected) <= exponent_tolerance
    # Grid is recorded largest-first, marching toward zero.
    return CoefficientFit(
        coefficient=float(np.exp(intercept)),
        exponent=float(slope),
        epsilons=tuple(eps[::-1]),
        residual=rms,
        expected_exponent=expected,
        conforming=bool(conforming),
    )

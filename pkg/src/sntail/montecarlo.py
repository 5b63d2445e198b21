"""Deterministic Monte Carlo for self-normalized tail probabilities.

Sampling is organized in fixed-size chunks, each opened at an absolute
counter offset of a Philox stream keyed by the seed.  The mapping from
chunk index to random words never depends on how chunks are distributed
over workers, so estimates are bit-identical for any worker count; a
thread pool only changes wall time.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator, Union

import numpy as np
from scipy.special import ndtri

from .density import DISCRETE_MODELS, DensityModel

__all__ = [
    "CHUNK_TRIALS",
    "STATISTICS",
    "StatisticSpec",
    "SamplerSpec",
    "MCEstimate",
    "MaxSumComparison",
    "wilson_interval",
    "statistic",
    "statistic_batch",
    "sample_batch",
    "estimate_tail",
    "compare_max_vs_sum",
    "spec_hash",
]

CHUNK_TRIALS = 65536
# Two-sided 95%: norm.isf(0.025) frozen so the CI never drifts with scipy.
_WILSON_Z = 1.959963984540054

STATISTICS = ("sum", "max-over-Zn", "max-over-Zk")

ModelLike = Union[DensityModel, str]


@dataclass(frozen=True)
class StatisticSpec:
    """Which functional of the sample to threshold.

    sum:          S(n) / (sum |x_i|^beta)^(1/beta)
    max-over-Zn:  max_{k=2..n} S(k) / Z(n)
    max-over-Zk:  max_{k=2..n} S(k) / Z(k)

    The max variants always normalize by the Euclidean norm; beta only
    enters the sum variant's denominator.
    """

    beta: float = 2.0
    variant: str = "sum"

    def __post_init__(self) -> None:
        if not self.beta > 1.0:
            raise ValueError(f"beta must exceed 1, got {self.beta}")
        if self.variant not in STATISTICS:
            raise ValueError(
                f"unknown statistic variant {self.variant!r}; choose from {STATISTICS}"
            )


@dataclass(frozen=True)
class SamplerSpec:
    """A reproducible sampling plan.

    `model` is either a DensityModel or one of the discrete names
    (rademacher, degenerate-first-coordinate).  Results are bit-identical
    for fixed (seed, trials) regardless of workers: substreams are keyed
    by absolute trial position, never by worker identity.
    """

    model: ModelLike
    n: int
    seed: int
    trials: int
    workers: int = 1

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if isinstance(self.model, str):
            if self.model not in DISCRETE_MODELS:
                raise ValueError(
                    f"unknown discrete model {self.model!r}; choose from {DISCRETE_MODELS}"
                )
        elif self.model.n != self.n:
            raise ValueError(
                f"model dimension {self.model.n} does not match n = {self.n}"
            )
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.trials < 1:
            raise ValueError("trials must be positive")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @property
    def model_label(self) -> str:
        return self.model if isinstance(self.model, str) else self.model.kind


@dataclass(frozen=True)
class MCEstimate:
    """Tail estimate with a Wilson score interval."""

    hits: int
    trials: int
    p_hat: float
    ci_low: float
    ci_high: float
    seed: int
    threshold: float
    variant: str
    beta: float
    model: str
    spec_hash: str
    warnings: tuple[str, ...] = ()

    def to_payload(self) -> dict[str, object]:
        return {
            "hits": self.hits,
            "trials": self.trials,
            "p_hat": self.p_hat,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "seed": self.seed,
            "threshold": self.threshold,
            "statistic": self.variant,
            "beta": self.beta,
            "model": self.model,
            "spec_hash": self.spec_hash,
            "warnings": list(self.warnings),
        }

    def covers(self, value: float) -> bool:
        return self.ci_low <= value <= self.ci_high


def wilson_interval(hits: int, trials: int, z: float = _WILSON_Z) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion.

    Stays inside [0, 1] and behaves sensibly at hits = 0, which rare-tail
    runs routinely produce.
    """
    if trials <= 0:
        raise ValueError("trials must be positive")
    if not 0 <= hits <= trials:
        raise ValueError(f"hits must lie in [0, {trials}], got {hits}")
    p = hits / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (p + z2 / (2.0 * trials)) / denom
    spread = z * math.sqrt(p * (1.0 - p) / trials + z2 / (4.0 * trials * trials)) / denom
    # at the boundary counts the score interval closes on 0 resp. 1 exactly,
    # but center - spread leaves a rounding residue; pin the exact endpoint
    lo = 0.0 if hits == 0 else max(center - spread, 0.0)
    hi = 1.0 if hits == trials else min(center + spread, 1.0)
    return lo, hi


def _as_stat(spec: StatisticSpec | str | None) -> StatisticSpec:
    if spec is None:
        return StatisticSpec()
    if isinstance(spec, str):
        return StatisticSpec(variant=spec)
    return spec


def statistic_batch(x: np.ndarray, spec: StatisticSpec | str | None = None) -> np.ndarray:
    """Self-normalized statistics for a (trials, n) batch of draws.

    Rejects all-zero rows: the statistic is undefined there (the models of
    interest put zero mass on the zero vector).
    """
    stat = _as_stat(spec)
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValueError("expected a 2-D batch of draws")
    if x.shape[1] < 2:
        raise ValueError("samples must have length >= 2")
    sq = x * x
    if not np.all(np.any(x != 0.0, axis=1)):
        raise ValueError("statistic undefined on the zero vector")
    if stat.variant == "sum":
        num = np.sum(x, axis=1)
        if stat.beta == 2.0:
            den = np.sqrt(np.sum(sq, axis=1))
        else:
            den = np.sum(np.abs(x) ** stat.beta, axis=1) ** (1.0 / stat.beta)
        return num / den
    if stat.variant == "max-over-Zn":
        num = np.max(np.cumsum(x, axis=1)[:, 1:], axis=1)
        den = np.sqrt(np.sum(sq, axis=1))
        return num / den
    # max-over-Zk: running partial sums over running Euclidean norms.  A
    # vanishing prefix norm (possible when leading coordinates are all
    # zero) contributes nothing to the max.
    partial = np.cumsum(x, axis=1)[:, 1:]
    norms = np.sqrt(np.cumsum(sq, axis=1))[:, 1:]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(norms > 0.0, partial / norms, -np.inf)
    return np.max(ratios, axis=1)


def statistic(x: np.ndarray, spec: StatisticSpec | str | None = None) -> float:
    """Statistic of a single length-n sample."""
    return float(statistic_batch(np.asarray(x, dtype=float)[None, :], spec)[0])


def spec_hash(sampler: SamplerSpec, stat: StatisticSpec, threshold: float) -> str:
    """Stable digest of everything the estimate is a function of.

    Recorded on every MCEstimate so a run can be replayed bit-for-bit from
    its serialized form.  User-supplied density callables are not
    serializable; they hash by kind and dimension only.
    """
    model = sampler.model
    if isinstance(model, str):
        desc: dict[str, object] = {"model": model}
    else:
        desc = {"model": model.kind}
        for field in ("mu", "sigma", "nu", "shift"):
            value = getattr(model, field, None)
            if value is not None:
                desc[field] = repr(float(value))
        if model.kind == "gaussian":
            desc["mean"] = [repr(float(v)) for v in model.mean]
            desc["chol"] = [repr(float(v)) for v in model.chol.ravel()]
    desc.update(
        n=sampler.n,
        seed=sampler.seed,
        trials=sampler.trials,
        beta=repr(float(stat.beta)),
        variant=stat.variant,
        threshold=repr(float(threshold)),
    )
    blob = json.dumps(desc, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _chunk_uniforms(seed: int, chunk_index: int, m: int, n: int) -> np.ndarray:
    """Open the Philox stream at the absolute offset of this chunk.

    Each trial consumes exactly n doubles and each double consumes one
    64-bit Philox word; advance() moves the counter in 4-word blocks, so
    the double offset chunk_index * CHUNK_TRIALS * n is always divisible
    by 4.  Row-major fill keeps trial i of the run at doubles
    [i * n, (i + 1) * n) regardless of chunking.
    """
    bitgen = np.random.Philox(key=seed)
    offset_doubles = chunk_index * CHUNK_TRIALS * n
    bitgen.advance(offset_doubles // 4)
    return np.random.Generator(bitgen).random((m, n))


def _chunk_draws(sampler: SamplerSpec, chunk_index: int, m: int) -> np.ndarray:
    """Draws for one chunk, a pure function of (model, seed, chunk_index)."""
    u = _chunk_uniforms(sampler.seed, chunk_index, m, sampler.n)
    model = sampler.model
    if isinstance(model, str):
        if model == "rademacher":
            return np.where(u >= 0.5, 1.0, -1.0)
        # degenerate-first-coordinate: first coordinate identically zero,
        # the rest iid standard normal.
        x = ndtri(np.clip(u, 1e-300, 1.0 - 1e-16))
        x[:, 0] = 0.0
        return x
    return model.draw_from_uniforms(u)


def _chunk_sizes(trials: int) -> list[int]:
    n_chunks = (trials + CHUNK_TRIALS - 1) // CHUNK_TRIALS
    return [
        min(CHUNK_TRIALS, trials - c * CHUNK_TRIALS) for c in range(n_chunks)
    ]


def sample_batch(sampler: SamplerSpec) -> Iterator[np.ndarray]:
    """Yield the sample stream in chunk order, (m, n) arrays."""
    for c, m in enumerate(_chunk_sizes(sampler.trials)):
        yield _chunk_draws(sampler, c, m)


def _run_chunks(sampler: SamplerSpec, per_chunk) -> list:
    """Map per_chunk(draws) over all chunks, results in chunk order."""
    sizes = _chunk_sizes(sampler.trials)

    def job(c: int):
        return per_chunk(_chunk_draws(sampler, c, sizes[c]))

    if sampler.workers <= 1:
        return [job(c) for c in range(len(sizes))]
    with ThreadPoolExecutor(max_workers=sampler.workers) as pool:
        return list(pool.map(job, range(len(sizes))))


def estimate_tail(
    sampler: SamplerSpec,
    stat: StatisticSpec | str | None = None,
    threshold: float | None = None,
    epsilon: float | None = None,
) -> MCEstimate:
    """Monte Carlo estimate of P(statistic > threshold), strict exceedance.

    Give either `threshold` directly or `epsilon`, which sets threshold =
    n^(1-1/beta) - epsilon (the tail parameterization used throughout).
    The result is a pure function of (sampler.model, n, seed, trials,
    stat, threshold); workers only distribute chunks.
    """
    stat = _as_stat(stat)
    if (threshold is None) == (epsilon is None):
        raise ValueError("give exactly one of threshold or epsilon")
    if threshold is None:
        cutoff = float(sampler.n) ** (1.0 - 1.0 / stat.beta)
        if not 0.0 < epsilon < cutoff:
            raise ValueError(f"epsilon must lie in (0, {cutoff:.6g}), got {epsilon}")
        threshold = cutoff - epsilon
    if not math.isfinite(threshold):
        raise ValueError("threshold must be finite")
    if sampler.trials < 1000:
        raise ValueError(f"need at least 1000 trials, got {sampler.trials}")

    def per_chunk(draws: np.ndarray) -> int:
        return int(np.count_nonzero(statistic_batch(draws, stat) > threshold))

    hits = int(sum(_run_chunks(sampler, per_chunk)))
    low, high = wilson_interval(hits, sampler.trials)
    return MCEstimate(
        hits=hits,
        trials=sampler.trials,
        p_hat=hits / sampler.trials,
        ci_low=low,
        ci_high=high,
        seed=sampler.seed,
        threshold=float(threshold),
        variant=stat.variant,
        beta=stat.beta,
        model=sampler.model_label,
        spec_hash=spec_hash(sampler, stat, threshold),
    )


@dataclass(frozen=True)
class MaxSumComparison:
    """Coupled estimates of the running-max and endpoint tails.

    All three statistics are evaluated on the same draws (common random
    numbers).  The endpoint event implies the max events pathwise, so
    disagreement is exactly "max exceeded, endpoint did not".
    """

    max_zn_estimate: MCEstimate
    max_zk_estimate: MCEstimate
    sum_estimate: MCEstimate
    max_without_sum: int
    either: int
    trials: int
    ratio: float
    ratio_low: float
    ratio_high: float
    warnings: tuple[str, ...] = ()

    @property
    def coincidence_rate(self) -> float:
        """Among trials where either event occurred, fraction where both did."""
        if self.either == 0:
            return 1.0
        return 1.0 - self.max_without_sum / self.either

    @property
    def all_coincide(self) -> bool:
        return self.max_without_sum == 0

    def ratio_covers(self, value: float) -> bool:
        return self.ratio_low <= value <= self.ratio_high


def compare_max_vs_sum(sampler: SamplerSpec, epsilon: float) -> MaxSumComparison:
    """Estimate the max-statistic and endpoint tails on shared samples.

    Threshold is sqrt(n) - epsilon with Euclidean normalization (the max
    comparison lives in the beta = 2 world).  The supported window for
    the max/endpoint equivalence is 0 < epsilon < 1/(2 sqrt(n-1));
    outside it the comparison still runs but carries a warning.  The
    ratio interval [R_lo/Q_hi, R_hi/Q_lo] is the conservative quotient of
    the two Wilson intervals; it ignores the coupling, so it always
    contains the tighter paired interval.
    """
    n = sampler.n
    if not 0.0 < epsilon < math.sqrt(n):
        raise ValueError(f"epsilon must lie in (0, sqrt(n)), got {epsilon}")
    if sampler.trials < 1000:
        raise ValueError(f"need at least 1000 trials, got {sampler.trials}")
    threshold = math.sqrt(n) - epsilon
    window_hi = 0.5 / math.sqrt(n - 1)
    warnings: tuple[str, ...] = ()
    if epsilon >= window_hi:
        warnings = (
            f"epsilon {epsilon:g} is outside the max-comparison window "
            f"(0, {window_hi:.6g}); the estimates are still exact but the "
            "equivalence of the two tails is not guaranteed",
        )

    def per_chunk(draws: np.ndarray) -> tuple[int, int, int, int]:
        hit_zn = statistic_batch(draws, "max-over-Zn") > threshold
        hit_zk = statistic_batch(draws, "max-over-Zk") > threshold
        hit_sum = statistic_batch(draws, "sum") > threshold
        only_max = int(np.count_nonzero(hit_zn & ~hit_sum))
        either = int(np.count_nonzero(hit_zn | hit_sum))
        return (
            int(np.count_nonzero(hit_zn)),
            int(np.count_nonzero(hit_zk)),
            int(np.count_nonzero(hit_sum)),
            only_max,
        ) + (either,)

    parts = _run_chunks(sampler, per_chunk)
    hits_zn = sum(p[0] for p in parts)
    hits_zk = sum(p[1] for p in parts)
    hits_sum = sum(p[2] for p in parts)
    only_max = sum(p[3] for p in parts)
    either = sum(p[4] for p in parts)

    def build(hits: int, variant: str) -> MCEstimate:
        low, high = wilson_interval(hits, sampler.trials)
        stat = StatisticSpec(2.0, variant)
        return MCEstimate(
            hits=hits,
            trials=sampler.trials,
            p_hat=hits / sampler.trials,
            ci_low=low,
            ci_high=high,
            seed=sampler.seed,
            threshold=threshold,
            variant=variant,
            beta=2.0,
            model=sampler.model_label,
            spec_hash=spec_hash(sampler, stat, threshold),
            warnings=warnings,
        )

    zn_est = build(hits_zn, "max-over-Zn")
    zk_est = build(hits_zk, "max-over-Zk")
    sum_est = build(hits_sum, "sum")
    ratio = hits_zn / hits_sum if hits_sum > 0 else math.inf
    ratio_low = zn_est.ci_low / sum_est.ci_high if sum_est.ci_high > 0.0 else math.inf
    ratio_high = zn_est.ci_high / sum_est.ci_low if sum_est.ci_low > 0.0 else math.inf
    return MaxSumComparison(
        max_zn_estimate=zn_est,
        max_zk_estimate=zk_est,
        sum_estimate=sum_est,
        max_without_sum=only_max,
        either=either,
        trials=sampler.trials,
        ratio=ratio,
        ratio_low=ratio_low,
        ratio_high=ratio_high,
        warnings=warnings,
    )

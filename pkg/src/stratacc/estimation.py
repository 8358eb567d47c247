"""Accuracy estimators and the variance algebra behind them.

All sampling is uniform with replacement, so no finite-population
correction appears in the estimator variances. For a 0/1 correctness
variable with population mean A over N instances the population variance
is S^2 = N/(N-1) * A(1-A); a sample of size n estimates it without bias by
s^2 = n/(n-1) * a_hat(1-a_hat).

Closed-form variances for a stratified estimator under the three budget
allocation policies (weights W_k, within-stratum spreads S_k, budget n):

    pro:  (1/n) * sum W_k S_k^2
    equ:  (K/n) * sum W_k^2 S_k^2
    opt:  (sum W_k S_k)^2 / n

Scenario helpers take :class:`StratumTruth` rows; a row with ``size=None``
stands for an effectively infinite stratum (S_k^2 = A_k(1-A_k)), otherwise
the exact N_k/(N_k-1) factor is kept. The two modes are never mixed
silently: each operation documents which one it uses.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .oracle import BudgetedOracle
from .stratification import StrataPartition

if TYPE_CHECKING:  # avoids a circular import; plans are duck-typed below
    from .allocation import AllocationPlan


def plan_counts(plan: "AllocationPlan | Sequence[int]") -> list[int]:
    """Per-stratum draw counts from a plan object or a bare sequence."""
    counts = getattr(plan, "counts", plan)
    return [int(c) for c in counts]

PRO = "pro"
EQU = "equ"
OPT = "opt"
ALLOCATION_POLICIES = (PRO, EQU, OPT)


@dataclass(frozen=True, slots=True)
class StratumStats:
    """Per-stratum sample summary: draws, mean correctness, unbiased s^2."""

    n: int
    estimate: float
    s2: float | None


@dataclass(frozen=True)
class EstimateResult:
    """Point estimate of accuracy with its unbiased variance estimate.

    ``variance_estimate`` is None (unavailable) when any stratum received
    fewer than two draws, since s_k^2 divides by n_k - 1.
    """

    estimate: float
    variance_estimate: float | None
    samples_used: int
    per_stratum: tuple[StratumStats, ...] | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.estimate <= 1.0:
            raise ValueError("accuracy estimate must lie in [0, 1]")
        if self.variance_estimate is not None and self.variance_estimate < 0.0:
            raise ValueError("variance estimate must be nonnegative")


@dataclass(frozen=True)
class StratumTruth:
    """Ground-truth stratum description for scenario algebra.

    ``size=None`` selects the infinite-population spread A(1-A); a concrete
    size keeps the exact N/(N-1) factor.
    """

    weight: float
    accuracy: float
    size: int | None = None

    def __post_init__(self) -> None:
        if self.weight < 0.0:
            raise ValueError("stratum weight must be nonnegative")
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError("stratum accuracy must lie in [0, 1]")
        if self.size is not None and self.size < 2:
            raise ValueError("stratum size must be at least 2")

    def s_squared(self) -> float:
        spread = self.accuracy * (1.0 - self.accuracy)
        if self.size is None:
            return spread
        return self.size * spread / (self.size - 1)


def _check_strata(strata: Sequence[StratumTruth]) -> None:
    if not strata:
        raise ValueError("need at least one stratum")
    total = sum(s.weight for s in strata)
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"stratum weights sum to {total}, expected 1")


def population_accuracy(strata: Sequence[StratumTruth]) -> float:
    """Overall accuracy sum(W_k * A_k) of a stratified population."""
    _check_strata(strata)
    return float(sum(s.weight * s.accuracy for s in strata))


def true_accuracy(bits: Sequence[float] | np.ndarray) -> float:
    """Population mean of the correctness bits."""
    values = np.asarray(bits, dtype=np.float64)
    if values.size == 0:
        raise ValueError("need at least one correctness bit")
    return float(values.mean())


def finite_population_variance(accuracy: float, size: int) -> float:
    """Variance of a 0/1 variable over a finite population:
    N/(N-1) * A(1-A)."""
    if size < 2:
        raise ValueError("population size must be at least 2")
    return size * accuracy * (1.0 - accuracy) / (size - 1)


def sample_variance_bernoulli(estimate: float, n: int) -> float:
    """Unbiased estimate of S^2 from n with-replacement draws:
    n/(n-1) * a_hat(1-a_hat)."""
    if n < 2:
        raise ValueError("need at least two draws")
    return n * estimate * (1.0 - estimate) / (n - 1)


def random_estimate(
    oracle: BudgetedOracle, n: int, seed: int | np.random.Generator | np.random.SeedSequence
) -> EstimateResult:
    """Estimate accuracy from n uniform with-replacement label draws.

    The variance estimate is a_hat(1-a_hat)/(n-1), the unbiased estimator
    for with-replacement sampling.
    """
    if n < 2:
        raise ValueError("need n >= 2 draws")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, oracle.population_size, size=n)
    bits = oracle.query_bits(idx)
    est = float(bits.mean())
    return EstimateResult(
        estimate=est,
        variance_estimate=est * (1.0 - est) / (n - 1),
        samples_used=n,
    )


def stratified_estimate(
    oracle: BudgetedOracle,
    partition: StrataPartition,
    plan: AllocationPlan | Sequence[int],
    seed: int | np.random.Generator | np.random.SeedSequence,
) -> EstimateResult:
    """Stratified random sampling estimate sum(W_k * a_hat_k).

    Draws plan.counts[k] instances uniformly with replacement inside each
    stratum. The variance estimate sums W_k^2 a_hat_k(1-a_hat_k)/(n_k-1)
    and is unavailable when any stratum received fewer than two draws.
    """
    counts = plan_counts(plan)
    if len(counts) != partition.k:
        raise ValueError(
            f"plan covers {len(counts)} strata, partition has {partition.k}"
        )
    if min(counts) < 1:
        raise ValueError("every stratum needs at least one draw")
    if partition.size != oracle.population_size:
        raise ValueError("partition and oracle cover different datasets")
    rng = np.random.default_rng(seed)
    stats: list[StratumStats] = []
    estimate = 0.0
    variance: float | None = 0.0
    for k in range(partition.k):
        members = partition.stratum_indices(k)
        n_k = counts[k]
        idx = members[rng.integers(0, members.size, size=n_k)]
        bits = oracle.query_bits(idx)
        mean_k = float(bits.mean())
        w_k = float(partition.weights[k])
        estimate += w_k * mean_k
        if n_k >= 2:
            s2_k = sample_variance_bernoulli(mean_k, n_k)
            if variance is not None:
                variance += w_k * w_k * mean_k * (1.0 - mean_k) / (n_k - 1)
        else:
            s2_k = None
            variance = None
        stats.append(StratumStats(n=n_k, estimate=mean_k, s2=s2_k))
    return EstimateResult(
        estimate=estimate,
        variance_estimate=variance,
        samples_used=int(sum(counts)),
        per_stratum=tuple(stats),
    )


def theoretical_variance_random(accuracy: float, size: int, n: int) -> float:
    """Variance of the simple random sampling estimator:
    N A(1-A) / ((N-1) n)."""
    if n < 1:
        raise ValueError("n must be positive")
    return finite_population_variance(accuracy, size) / n


def theoretical_variance_stratified(
    strata: Sequence[StratumTruth], plan: AllocationPlan | Sequence[int]
) -> float:
    """Variance of the stratified estimator for known stratum accuracies:
    sum W_k^2 N_k A_k(1-A_k) / ((N_k-1) n_k). Requires exact sizes."""
    _check_strata(strata)
    counts = plan_counts(plan)
    if len(counts) != len(strata):
        raise ValueError("plan and strata must align")
    if min(counts) < 1:
        raise ValueError("every stratum needs a positive budget")
    total = 0.0
    for stratum, n_k in zip(strata, counts):
        if stratum.size is None:
            raise ValueError("exact stratum sizes required")
        total += stratum.weight**2 * finite_population_variance(
            stratum.accuracy, stratum.size
        ) / n_k
    return total


def allocation_variance(
    strata: Sequence[StratumTruth], n: int, policy: str
) -> float:
    """Closed-form stratified variance under a named allocation policy.

    Uses each stratum's own spread mode: exact N_k/(N_k-1) factors when
    sizes are given, A_k(1-A_k) otherwise.
    """
    _check_strata(strata)
    if n < 1:
        raise ValueError("n must be positive")
    if policy == PRO:
        return sum(s.weight * s.s_squared() for s in strata) / n
    if policy == EQU:
        return len(strata) * sum(s.weight**2 * s.s_squared() for s in strata) / n
    if policy == OPT:
        return sum(s.weight * np.sqrt(s.s_squared()) for s in strata) ** 2 / n
    raise ValueError(f"unknown allocation policy {policy!r}")


@dataclass(frozen=True)
class VarianceGaps:
    """Variance reductions between sampling designs (infinite-population)."""

    gap_random_minus_pro: float
    gap_pro_minus_opt: float


def variance_decomposition(strata: Sequence[StratumTruth], n: int) -> VarianceGaps:
    """Closed-form gaps between random, proportional and optimal designs.

    Infinite-population mode throughout (S_k^2 = A_k(1-A_k); any sizes on
    the strata are ignored). The gaps have two derivations each:

        V_random - V_pro = (1/n) sum W_k (A_k - A)^2
        V_pro - V_opt    = (1/n) sum W_k (S_k - S_M)^2,  S_M = sum W_k S_k

    Both are evaluated here alongside the direct subtractions of the design
    variances and must agree to 1e-12; disagreement raises, making the
    identity check part of the operation itself.
    """
    _check_strata(strata)
    if n < 1:
        raise ValueError("n must be positive")
    weights = np.array([s.weight for s in strata])
    acc = np.array([s.accuracy for s in strata])
    overall = float(weights @ acc)
    spread2 = acc * (1.0 - acc)
    spread = np.sqrt(spread2)
    s_mean = float(weights @ spread)

    gap_rp = float(weights @ (acc - overall) ** 2) / n
    gap_po = float(weights @ (spread - s_mean) ** 2) / n

    v_random = overall * (1.0 - overall) / n
    v_pro = float(weights @ spread2) / n
    v_opt = s_mean**2 / n
    if abs(gap_rp - (v_random - v_pro)) > 1e-12:
        raise ArithmeticError("variance gap identity (random vs pro) violated")
    if abs(gap_po - (v_pro - v_opt)) > 1e-12:
        raise ArithmeticError("variance gap identity (pro vs opt) violated")
    return VarianceGaps(gap_random_minus_pro=gap_rp, gap_pro_minus_opt=gap_po)


def case2_exact_gap(strata: Sequence[StratumTruth], n: int) -> float:
    """Exact finite-population gap V(random) - V(proportional).

    Keeps every N/(N-1) and N_k/(N_k-1) factor; strata must carry sizes
    consistent with their weights (W_k = N_k / N). When all stratum
    accuracies are equal the gap reduces to

        -(A(1-A)/n) * sum N_k (N - N_k) / (N (N-1) (N_k-1))

    and is strictly negative for more than one stratum: proportional
    stratified sampling is then worse than simple random sampling.
    """
    _check_strata(strata)
    if n < 1:
        raise ValueError("n must be positive")
    sizes = [s.size for s in strata]
    if any(size is None for size in sizes):
        raise ValueError("exact stratum sizes required")
    total = int(sum(sizes))
    for s in strata:
        if abs(s.weight - s.size / total) > 1e-9:
            raise ValueError("stratum weights must equal N_k / N")
    overall = population_accuracy(strata)
    v_random = theoretical_variance_random(overall, total, n)
    v_pro = sum(
        s.weight * finite_population_variance(s.accuracy, s.size) for s in strata
    ) / n
    return v_random - v_pro

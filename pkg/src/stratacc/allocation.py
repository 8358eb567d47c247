"""Budget allocation across strata and the adaptive optimal-allocation
sampling procedures.

Integer plans come from largest-remainder rounding of the real-valued
shares, followed by a clamp that lifts any stratum below the per-stratum
minimum while debiting the largest allocations. The optimal share of
stratum k is n * W_k S_k / sum(W_j S_j); since the true spreads S_k are
unknown in practice, two procedures estimate them on the fly:

    opt_a1  pilot of n_ini draws per stratum, then one optimal allocation
            of the remainder from the estimated spreads;
    opt_a2  same pilot, then repeated optimal allocations of small batches
            (n_step at a time), re-estimating spreads after each batch.

Both pool the pilot draws into the final per-stratum estimates, consume
exactly n labels, and fall back to proportional shares whenever every
estimated spread is zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .estimation import (
    EQU,
    OPT,
    PRO,
    EstimateResult,
    StratumStats,
    sample_variance_bernoulli,
)
from .oracle import BudgetedOracle
from .stratification import StrataPartition

DEFAULT_MIN_PER_STRATUM = 2
DEFAULT_N_INI = 5
DEFAULT_N_STEP = 10


@dataclass(frozen=True)
class AllocationPlan:
    """Integer per-stratum label budgets; ``counts`` sums to the total n."""

    counts: tuple[int, ...]
    policy: str
    proportional_fallback: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if any(c < 0 for c in self.counts):
            raise ValueError("allocation counts must be nonnegative")

    @property
    def total(self) -> int:
        return sum(self.counts)


@dataclass
class OptState:
    """Running tallies of an adaptive optimal-allocation procedure."""

    draws: np.ndarray
    successes: np.ndarray
    estimates: np.ndarray
    s2: np.ndarray
    n_rem: int
    n_ini: int
    n_step: int | None = None


def round_allocation(
    real_alloc: Sequence[float],
    n: int,
    min_per_stratum: int = DEFAULT_MIN_PER_STRATUM,
) -> list[int]:
    """Largest-remainder rounding of shares summing to n, then lift any
    stratum below the minimum by debiting the largest allocations.

    Remainder ties and debit ties both resolve toward the lowest index.
    """
    shares = np.asarray(real_alloc, dtype=np.float64)
    k = shares.size
    if k == 0:
        raise ValueError("need at least one stratum")
    if abs(float(shares.sum()) - n) > 1e-9:
        raise ValueError(f"shares sum to {shares.sum()}, expected {n}")
    if n < k * min_per_stratum:
        raise ValueError(
            f"budget {n} cannot give {k} strata {min_per_stratum} draws each"
        )
    counts = np.floor(shares).astype(np.int64)
    extra = n - int(counts.sum())
    if extra < 0:
        raise ValueError("shares exceed the budget")
    order = np.argsort(-(shares - counts), kind="stable")
    counts[order[:extra]] += 1
    # Clamp: raise deficits to the minimum, one unit at a time off the top.
    for i in range(k):
        while counts[i] < min_per_stratum:
            donor = int(np.argmax(counts))
            counts[i] += 1
            counts[donor] -= 1
    return [int(c) for c in counts]


def allocate_proportional(weights: Sequence[float], n: int) -> AllocationPlan:
    """Allocate in proportion to stratum weights: n_k ~ W_k * n."""
    w = np.asarray(weights, dtype=np.float64)
    if n < 2 * w.size:
        raise ValueError(f"budget {n} below the 2-per-stratum floor for {w.size} strata")
    counts = round_allocation(w * n, n)
    return AllocationPlan(counts=tuple(counts), policy=PRO)


def allocate_equal(k: int, n: int) -> AllocationPlan:
    """Split the budget evenly; any remainder goes to the lowest strata."""
    if k < 1:
        raise ValueError("need at least one stratum")
    if n < 2 * k:
        raise ValueError(f"budget {n} below the 2-per-stratum floor for {k} strata")
    base, extra = divmod(n, k)
    counts = [base + 1 if i < extra else base for i in range(k)]
    return AllocationPlan(counts=tuple(counts), policy=EQU)


def _optimal_shares(
    weights: np.ndarray, sds: np.ndarray, n: int
) -> tuple[np.ndarray, bool]:
    mass = weights * sds
    total = float(mass.sum())
    if total <= 0.0:
        return weights / weights.sum() * n, True
    return mass / total * n, False


def allocate_optimal(
    weights: Sequence[float], sds: Sequence[float], n: int
) -> AllocationPlan:
    """Variance-minimising allocation n_k ~ W_k S_k.

    Falls back to proportional shares (flagged on the plan) when every
    spread is zero.
    """
    w = np.asarray(weights, dtype=np.float64)
    s = np.asarray(sds, dtype=np.float64)
    if w.shape != s.shape:
        raise ValueError("weights and spreads must align")
    if s.min() < 0.0:
        raise ValueError("spreads must be nonnegative")
    if n < 2 * w.size:
        raise ValueError(f"budget {n} below the 2-per-stratum floor for {w.size} strata")
    shares, fallback = _optimal_shares(w, s, n)
    counts = round_allocation(shares, n)
    return AllocationPlan(
        counts=tuple(counts), policy=OPT, proportional_fallback=fallback
    )


class _AdaptiveSampler:
    """Shared tallies and drawing logic of the two optimal procedures."""

    def __init__(
        self,
        oracle: BudgetedOracle,
        partition: StrataPartition,
        rng: np.random.Generator,
    ):
        if partition.size != oracle.population_size:
            raise ValueError("partition and oracle cover different datasets")
        self.oracle = oracle
        self.partition = partition
        self.rng = rng
        self.groups = [partition.stratum_indices(j) for j in range(partition.k)]
        self.draws = np.zeros(partition.k, dtype=np.int64)
        self.successes = np.zeros(partition.k, dtype=np.float64)

    def sample(self, k: int, m: int) -> None:
        if m <= 0:
            return
        members = self.groups[k]
        idx = members[self.rng.integers(0, members.size, size=m)]
        bits = self.oracle.query_bits(idx)
        self.draws[k] += m
        self.successes[k] += float(bits.sum())

    def sample_batch(self, counts: Sequence[int]) -> None:
        for k, m in enumerate(counts):
            self.sample(k, int(m))

    def estimates(self) -> np.ndarray:
        return self.successes / self.draws

    def spread_estimates(self) -> tuple[np.ndarray, np.ndarray]:
        """Pooled per-stratum (a_hat_k, s2_k) over everything drawn so far."""
        est = self.estimates()
        s2 = self.draws / (self.draws - 1) * est * (1.0 - est)
        return est, s2

    def result(self) -> EstimateResult:
        est, s2 = self.spread_estimates()
        weights = self.partition.weights
        variance = float(
            np.sum(weights**2 * est * (1.0 - est) / (self.draws - 1))
        )
        stats = tuple(
            StratumStats(n=int(n_k), estimate=float(e), s2=float(v))
            for n_k, e, v in zip(self.draws, est, s2)
        )
        return EstimateResult(
            estimate=float(weights @ est),
            variance_estimate=variance,
            samples_used=int(self.draws.sum()),
            per_stratum=stats,
        )


def _check_adaptive_args(partition: StrataPartition, n: int, n_ini: int) -> None:
    if n_ini < 2:
        raise ValueError("n_ini must be at least 2 so spreads are estimable")
    if n < partition.k * n_ini:
        raise ValueError(
            f"budget {n} below the pilot cost {partition.k} * {n_ini}"
        )


def opt_a1(
    oracle: BudgetedOracle,
    partition: StrataPartition,
    n: int,
    n_ini: int = DEFAULT_N_INI,
    seed: int | np.random.Generator | np.random.SeedSequence | None = None,
) -> EstimateResult:
    """Two-phase optimal allocation.

    Phase 1 labels n_ini instances per stratum and estimates each spread;
    phase 2 allocates the remaining n - K*n_ini optimally in one shot.
    Pilot draws are pooled into the final estimates.
    """
    _check_adaptive_args(partition, n, n_ini)
    sampler = _AdaptiveSampler(oracle, partition, np.random.default_rng(seed))
    sampler.sample_batch([n_ini] * partition.k)
    n_rem = n - partition.k * n_ini
    if n_rem > 0:
        _, s2 = sampler.spread_estimates()
        shares, _ = _optimal_shares(partition.weights, np.sqrt(s2), n_rem)
        sampler.sample_batch(round_allocation(shares, n_rem, min_per_stratum=0))
    return sampler.result()


def opt_a2(
    oracle: BudgetedOracle,
    partition: StrataPartition,
    n: int,
    n_ini: int = DEFAULT_N_INI,
    n_step: int = DEFAULT_N_STEP,
    seed: int | np.random.Generator | np.random.SeedSequence | None = None,
    on_step: Callable[[OptState], None] | None = None,
) -> EstimateResult:
    """Iterative optimal allocation.

    After the pilot phase, repeatedly allocates min(n_step, n_rem) labels
    optimally under the current spread estimates, redraws, and re-estimates
    until the budget is exhausted. ``on_step`` receives a tally snapshot
    after each batch.
    """
    _check_adaptive_args(partition, n, n_ini)
    if n_step < 1:
        raise ValueError("n_step must be positive")
    sampler = _AdaptiveSampler(oracle, partition, np.random.default_rng(seed))
    sampler.sample_batch([n_ini] * partition.k)
    n_rem = n - partition.k * n_ini
    while n_rem > 0:
        n_curr = min(n_step, n_rem)
        est, s2 = sampler.spread_estimates()
        shares, _ = _optimal_shares(partition.weights, np.sqrt(s2), n_curr)
        sampler.sample_batch(round_allocation(shares, n_curr, min_per_stratum=0))
        n_rem -= n_curr
        if on_step is not None:
            est, s2 = sampler.spread_estimates()
            on_step(
                OptState(
                    draws=sampler.draws.copy(),
                    successes=sampler.successes.copy(),
                    estimates=est,
                    s2=s2,
                    n_rem=n_rem,
                    n_ini=n_ini,
                    n_step=n_step,
                )
            )
    return sampler.result()

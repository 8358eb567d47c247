import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stratacc.density import fit_kde
from stratacc.stratification import (
    METHODS,
    assign_by_boundaries,
    stratify,
    stratify_eqsz,
    stratify_eqwd,
    stratify_gmm,
    stratify_kmeans,
    stratify_wtmn,
)
from stratacc.stratification import _lloyd_1d


def check_invariants(part, n):
    assert part.assignment.size == n
    assert part.sizes.sum() == n
    assert part.sizes.min() >= 1
    assert abs(part.weights.sum() - 1.0) <= 1e-12
    counted = np.bincount(part.assignment, minlength=part.k)
    assert np.array_equal(counted, part.sizes)


def test_assign_by_boundaries_basic():
    part = assign_by_boundaries(np.array([0.1, 0.4, 0.6, 0.9]), [0.5])
    assert part.sizes.tolist() == [2, 2]
    assert part.assignment.tolist() == [0, 0, 1, 1]


def test_assign_by_boundaries_merges_empty_top_strata():
    part = assign_by_boundaries(np.array([0.1, 0.2]), [0.5, 0.9])
    assert part.k == 1
    assert part.merged_empty
    assert part.sizes.tolist() == [2]
    assert part.boundaries.size == 0


def test_boundary_tie_goes_to_upper_stratum():
    part = assign_by_boundaries(np.array([0.2, 0.5, 0.8]), [0.5])
    assert part.assignment.tolist() == [0, 1, 1]


def test_merge_keeps_interior_nonempty_strata():
    z = np.array([0.05, 0.06, 0.95, 0.96])
    part = assign_by_boundaries(z, [0.2, 0.5, 0.8])
    assert part.merged_empty
    assert part.k == 2
    assert part.sizes.tolist() == [2, 2]
    assert part.boundaries.size == 1
    assert 0.2 <= part.boundaries[0] <= 0.8


def test_eqwd_boundaries_quarters():
    z = np.linspace(0.0, 1.0, 101)
    part = stratify_eqwd(z, 4)
    assert part.boundaries == pytest.approx([0.25, 0.5, 0.75], abs=1e-15)
    spacing = np.diff(np.concatenate([[0.0], part.boundaries, [1.0]]))
    assert np.all(np.abs(spacing - 0.25) <= 1e-12)


def test_eqwd_range_two_to_six():
    part = stratify_eqwd(np.array([2.0, 3.0, 5.0, 6.0]), 2)
    assert part.boundaries == pytest.approx([4.0])
    assert part.sizes.tolist() == [2, 2]


def test_eqwd_zero_range_rejected():
    with pytest.raises(ValueError, match="zero range"):
        stratify_eqwd(np.full(10, 3.3), 2)


def test_eqsz_exact_quarters():
    rng = np.random.default_rng(0)
    part = stratify_eqsz(rng.uniform(0, 1, 100), 4)
    assert part.sizes.tolist() == [25, 25, 25, 25]


def test_eqsz_remainder_to_low_strata():
    part = stratify_eqsz(np.arange(10.0), 3)
    assert part.sizes.tolist() == [4, 3, 3]
    # sorted order: lowest z values fill stratum 0 first
    assert part.assignment.tolist() == [0, 0, 0, 0, 1, 1, 1, 2, 2, 2]


def test_eqsz_singletons_when_n_equals_k():
    part = stratify_eqsz(np.array([0.3, 0.1, 0.2]), 3)
    assert part.sizes.tolist() == [1, 1, 1]
    assert part.assignment.tolist() == [2, 0, 1]


def test_eqsz_too_few_instances():
    with pytest.raises(ValueError):
        stratify_eqsz(np.array([1.0, 2.0]), 3)


def test_wtmn_equalises_stratum_z_sums():
    part = stratify_wtmn(np.array([1.0, 1.0, 1.0, 1.0, 2.0, 2.0]), 2)
    assert part.sizes.tolist() == [4, 2]
    assert part.assignment.tolist() == [0, 0, 0, 0, 1, 1]


def test_wtmn_exhaustive_cut_oracle():
    # brute force over all cut positions: the cumulative rule picks the cut
    # minimising the imbalance of W_k * mean(z) between the two strata
    z = np.array([1.0, 1.0, 1.0, 1.0, 2.0, 2.0])
    total = z.sum()

    def imbalance(cut):
        lo, hi = z[:cut], z[cut:]
        return abs(lo.sum() / z.size - hi.sum() / z.size)

    best = min(range(1, z.size), key=imbalance)
    part = stratify_wtmn(z, 2)
    assert part.sizes[0] == best


def test_wtmn_constant_z_reduces_to_equal_sizes():
    part = stratify_wtmn(np.full(7, 2.5), 2)
    assert sorted(part.sizes.tolist()) == [3, 4]


def test_wtmn_single_stratum():
    part = stratify_wtmn(np.array([0.5, 1.0, 2.0]), 1)
    assert part.k == 1
    assert part.sizes.tolist() == [3]


def test_wtmn_zero_sum_rejected():
    with pytest.raises(ValueError, match="zero"):
        stratify_wtmn(np.zeros(5), 2)


def test_kmeans_separated_clusters():
    z = np.array([0.1, 0.11, 0.9, 0.92])
    part = stratify_kmeans(z, 2, seed=0)
    assert part.assignment.tolist() == [0, 0, 1, 1]


def test_kmeans_deterministic_under_seed():
    rng = np.random.default_rng(5)
    z = rng.uniform(0, 1, 300)
    a = stratify_kmeans(z, 4, seed=42)
    b = stratify_kmeans(z, 4, seed=42)
    assert np.array_equal(a.assignment, b.assignment)


def test_kmeans_k_equals_distinct_values():
    z = np.array([0.1, 0.1, 0.4, 0.4, 0.4, 0.7, 0.9])
    part = stratify_kmeans(z, 4, seed=1)
    # every distinct value its own stratum: zero within-cluster spread is
    # the global optimum, verified by brute force over all 4-partitions
    for k in range(part.k):
        assert np.unique(z[part.assignment == k]).size == 1

    def wcss(labels):
        return sum(
            ((z[labels == j] - z[labels == j].mean()) ** 2).sum()
            for j in np.unique(labels)
        )

    assert wcss(part.assignment) == pytest.approx(0.0, abs=1e-15)


def test_kmeans_needs_enough_distinct_values():
    with pytest.raises(ValueError, match="distinct"):
        stratify_kmeans(np.array([0.1, 0.1, 0.9, 0.9]), 3, seed=0)


def test_kmeans_objective_never_increases():
    rng = np.random.default_rng(7)
    z = rng.normal(0, 1, 500)
    trace: list[float] = []
    _lloyd_1d(z, 5, np.random.default_rng(11), wcss_trace=trace)
    assert all(b <= a + 1e-9 for a, b in zip(trace, trace[1:]))


def test_gmm_matches_kmeans_on_separated_clusters():
    z = np.array([0.1, 0.11, 0.9, 0.92])
    km = stratify_kmeans(z, 2, seed=3)
    gm = stratify_gmm(z, 2, seed=3)
    assert np.array_equal(km.assignment, gm.assignment)


def test_gmm_deterministic_under_seed():
    rng = np.random.default_rng(9)
    z = np.concatenate([rng.normal(0.2, 0.05, 200), rng.normal(0.8, 0.05, 200)])
    a = stratify_gmm(z, 2, seed=21)
    b = stratify_gmm(z, 2, seed=21)
    assert np.array_equal(a.assignment, b.assignment)


def test_gmm_recovers_mixture_means():
    rng = np.random.default_rng(13)
    z = np.concatenate([rng.normal(0.2, 0.05, 2500), rng.normal(0.8, 0.05, 2500)])
    z = np.clip(z, 0.0, None)
    part = stratify_gmm(z, 2, seed=17)
    means = sorted(z[part.assignment == k].mean() for k in range(part.k))
    assert means[0] == pytest.approx(0.2, abs=0.03)
    assert means[1] == pytest.approx(0.8, abs=0.03)


def test_dispatch_eqwd_equivalence():
    rng = np.random.default_rng(1)
    z = rng.uniform(0, 1, 200)
    assert np.array_equal(
        stratify(z, "eqwd", 4).assignment, stratify_eqwd(z, 4).assignment
    )


def test_dispatch_sqrt_composes_density_boundaries():
    rng = np.random.default_rng(2)
    z = rng.beta(2, 2, 1000)
    model = fit_kde(z)
    from stratacc.density import root_cumulative_boundaries

    direct = assign_by_boundaries(z, root_cumulative_boundaries(model, 5, 0.5))
    via_dispatch = stratify(z, "sqrt", 5, density_model=model)
    assert np.array_equal(direct.assignment, via_dispatch.assignment)


def test_dispatch_unknown_method():
    with pytest.raises(ValueError, match="unknown"):
        stratify(np.array([0.1, 0.9]), "quantile", 2)


def test_dispatch_sqrt_requires_model():
    with pytest.raises(ValueError, match="density model"):
        stratify(np.array([0.1, 0.9]), "sqrt", 2)


def test_dispatch_km_requires_seed():
    with pytest.raises(ValueError, match="seed"):
        stratify(np.array([0.1, 0.9]), "km", 2)


def test_boundary_methods_give_contiguous_intervals():
    rng = np.random.default_rng(3)
    z = rng.normal(0, 1, 400) ** 2
    model = fit_kde(z)
    for method in ("sqrt", "cbrt", "eqwd"):
        part = stratify(z, method, 5, density_model=model)
        order = np.argsort(z, kind="stable")
        labels = part.assignment[order]
        assert np.all(np.diff(labels) >= 0)


@settings(max_examples=30, deadline=None)
@given(
    seed=st.integers(0, 10_000),
    k=st.integers(2, 8),
    method=st.sampled_from(METHODS),
)
def test_partition_invariants_property(seed, k, method):
    rng = np.random.default_rng(seed)
    z = rng.beta(2, 4, 250) + 1e-9
    model = fit_kde(z) if method in ("sqrt", "cbrt") else None
    part = stratify(z, method, k, seed=seed, density_model=model)
    check_invariants(part, z.size)
    assert part.k <= k


def test_all_methods_all_k_on_mixture():
    rng = np.random.default_rng(4)
    z = np.concatenate([rng.normal(0.3, 0.08, 600), rng.normal(0.75, 0.05, 400)])
    z = np.clip(z, 0.0, 1.0)
    model = fit_kde(z)
    for method, k in itertools.product(METHODS, (2, 5, 10)):
        part = stratify(z, method, k, seed=123, density_model=model)
        check_invariants(part, z.size)

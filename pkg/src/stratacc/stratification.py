"""Partitioning the test set into strata from the stratification variable.

Seven methods are supported:

    sqrt, cbrt   equalised cumulative of f(z)**(1/2) or f(z)**(1/3)
    wtmn         cumulative-sum cuts making W_k * mean(z in stratum) constant
    km, gmm      one-dimensional k-means / Gaussian-mixture clustering
    eqsz         equal-count strata after a stable sort by z
    eqwd         equal-width sub-ranges of z

Boundary-based methods use half-open intervals: an instance lying exactly
on a boundary goes to the upper stratum. Any empty stratum is merged into
its nearest nonempty neighbour, shrinking K and flagging the partition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import StratVariable
from .density import (
    CBRT_EXPONENT,
    DensityModel,
    SQRT_EXPONENT,
    root_cumulative_boundaries,
)

SQRT = "sqrt"
CBRT = "cbrt"
WTMN = "wtmn"
KM = "km"
GMM = "gmm"
EQSZ = "eqsz"
EQWD = "eqwd"
METHODS = (SQRT, CBRT, WTMN, KM, GMM, EQSZ, EQWD)

_KMEANS_MAX_ITER = 300
_GMM_MAX_ITER = 500
_GMM_LOGLIK_TOL = 1e-8
_GMM_VAR_FLOOR_SCALE = 1e-6


@dataclass(frozen=True)
class StrataPartition:
    """Disjoint, covering assignment of instances to K strata.

    ``assignment`` is aligned with dataset row order; ``boundaries`` is set
    only for methods that cut z into intervals. ``merged_empty`` warns that
    empty strata were folded away and K is smaller than requested.
    """

    k: int
    assignment: np.ndarray
    sizes: np.ndarray
    weights: np.ndarray
    method: str
    boundaries: np.ndarray | None = None
    merged_empty: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "assignment", np.asarray(self.assignment, dtype=np.int64))
        object.__setattr__(self, "sizes", np.asarray(self.sizes, dtype=np.int64))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.float64))
        if self.k < 1 or self.sizes.size != self.k or self.weights.size != self.k:
            raise ValueError("sizes and weights must hold one entry per stratum")
        if self.sizes.min() < 1:
            raise ValueError("every stratum must hold at least one instance")
        if int(self.sizes.sum()) != self.assignment.size:
            raise ValueError("stratum sizes must sum to the number of instances")
        if self.assignment.min() < 0 or self.assignment.max() >= self.k:
            raise ValueError("assignment indices out of range")
        if abs(float(self.weights.sum()) - 1.0) > 1e-12:
            raise ValueError("stratum weights must sum to one")
        if self.boundaries is not None:
            bounds = np.asarray(self.boundaries, dtype=np.float64)
            object.__setattr__(self, "boundaries", bounds)
            if bounds.size != self.k - 1:
                raise ValueError("expected one boundary fewer than strata")
            if bounds.size > 1 and np.any(np.diff(bounds) <= 0.0):
                raise ValueError("boundaries must be strictly increasing")

    @property
    def size(self) -> int:
        return int(self.assignment.size)

    def stratum_indices(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == k)


def _as_values(z: StratVariable | np.ndarray) -> np.ndarray:
    values = z.values if isinstance(z, StratVariable) else np.asarray(z, dtype=np.float64)
    if values.ndim != 1 or values.size == 0:
        raise ValueError("expected a nonempty 1-D sequence of stratification values")
    return values


def _build(
    values: np.ndarray,
    labels: np.ndarray,
    k: int,
    method: str,
    boundaries: np.ndarray | None,
) -> StrataPartition:
    """Assemble a partition, merging empty strata into their neighbours."""
    sizes = np.bincount(labels, minlength=k)
    merged = bool(np.any(sizes == 0))
    if merged:
        if boundaries is not None:
            boundaries = _merge_empty_intervals(values, boundaries, sizes)
            labels = np.searchsorted(boundaries, values, side="right")
            sizes = np.bincount(labels, minlength=boundaries.size + 1)
            k = boundaries.size + 1
        else:
            keep = np.flatnonzero(sizes > 0)
            labels = np.searchsorted(keep, labels)
            sizes = sizes[keep]
            k = keep.size
    weights = sizes / sizes.sum()
    return StrataPartition(
        k=k,
        assignment=labels,
        sizes=sizes,
        weights=weights,
        method=method,
        boundaries=boundaries,
        merged_empty=merged,
    )


def _merge_empty_intervals(
    values: np.ndarray, boundaries: np.ndarray, sizes: np.ndarray
) -> np.ndarray:
    """Drop boundaries around empty intervals, folding each into the nearer
    neighbour by interval midpoint distance (ties go low)."""
    edges = [float(values.min()), *map(float, boundaries), float(values.max())]
    counts = list(map(int, sizes))
    while 0 in counts:
        i = counts.index(0)
        if i == 0:
            j = 1
        elif i == len(counts) - 1:
            j = i - 1
        else:
            mid = (edges[i] + edges[i + 1]) / 2.0
            left = (edges[i - 1] + edges[i]) / 2.0
            right = (edges[i + 1] + edges[i + 2]) / 2.0
            j = i - 1 if mid - left <= right - mid else i + 1
        lo, hi = min(i, j), max(i, j)
        counts[lo] += counts[hi]
        del counts[hi]
        del edges[hi]  # boundary between lo and hi
    return np.asarray(edges[1:-1], dtype=np.float64)


def assign_by_boundaries(
    z: StratVariable | np.ndarray,
    boundaries: np.ndarray,
    method: str = "custom",
) -> StrataPartition:
    """Assign instances to intervals cut at ``boundaries``.

    Instance i lands in stratum k when boundary[k-1] <= z_i < boundary[k];
    the top stratum is closed on the right.
    """
    values = _as_values(z)
    bounds = np.asarray(boundaries, dtype=np.float64)
    if bounds.ndim != 1:
        raise ValueError("boundaries must be a 1-D sequence")
    if bounds.size > 1 and np.any(np.diff(bounds) <= 0.0):
        raise ValueError("boundaries must be strictly increasing")
    labels = np.searchsorted(bounds, values, side="right")
    return _build(values, labels, bounds.size + 1, method, bounds)


def stratify_eqwd(z: StratVariable | np.ndarray, k: int) -> StrataPartition:
    """Equal-width sub-ranges: boundaries at min(z) + range * i/k."""
    values = _as_values(z)
    if k < 1:
        raise ValueError("k must be at least 1")
    lo, hi = float(values.min()), float(values.max())
    span = hi - lo
    if span <= 0.0:
        raise ValueError("zero range: all stratification values identical")
    boundaries = lo + span * np.arange(1, k) / k
    part = assign_by_boundaries(values, boundaries, method=EQWD)
    return part


def stratify_eqsz(z: StratVariable | np.ndarray, k: int) -> StrataPartition:
    """Equal-count strata in z order; sizes differ by at most one.

    The sort is stable (ties keep original order) and any remainder goes to
    the lowest-index strata.
    """
    values = _as_values(z)
    n = values.size
    if k < 1:
        raise ValueError("k must be at least 1")
    if n < k:
        raise ValueError(f"cannot split {n} instances into {k} equal-size strata")
    order = np.argsort(values, kind="stable")
    base, extra = divmod(n, k)
    sizes = np.full(k, base, dtype=np.int64)
    sizes[:extra] += 1
    labels = np.empty(n, dtype=np.int64)
    labels[order] = np.repeat(np.arange(k), sizes)
    return _build(values, labels, k, EQSZ, None)


def stratify_wtmn(z: StratVariable | np.ndarray, k: int) -> StrataPartition:
    """Cut the z-sorted data where the running sum of z crosses i/k of its
    total, which equalises W_k * mean(z in stratum) up to discreteness."""
    values = _as_values(z)
    if k < 1:
        raise ValueError("k must be at least 1")
    total = float(values.sum())
    if total <= 0.0:
        raise ValueError("stratification values sum to zero")
    order = np.argsort(values, kind="stable")
    running = np.cumsum(values[order])
    thresholds = total * np.arange(1, k) / k
    labels = np.empty(values.size, dtype=np.int64)
    labels[order] = np.searchsorted(thresholds, running, side="left")
    return _build(values, labels, k, WTMN, None)


def _require_distinct(values: np.ndarray, k: int) -> None:
    distinct = np.unique(values).size
    if distinct < k:
        raise ValueError(f"need at least {k} distinct values, found {distinct}")


def _nearest_center_labels(values: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # argmin breaks ties toward the lower (sorted) center
    return np.abs(values[:, None] - centers[None, :]).argmin(axis=1)


def _kmeans_plus_plus(values: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = np.empty(k, dtype=np.float64)
    centers[0] = values[rng.integers(values.size)]
    d2 = (values - centers[0]) ** 2
    for j in range(1, k):
        total = d2.sum()
        centers[j] = values[rng.choice(values.size, p=d2 / total)]
        d2 = np.minimum(d2, (values - centers[j]) ** 2)
    centers.sort()
    return centers


def _lloyd_1d(
    values: np.ndarray,
    k: int,
    rng: np.random.Generator,
    wcss_trace: list[float] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """K-means++ seeding followed by Lloyd iterations to an assignment
    fixpoint (or 300 rounds). Centers are kept in ascending order; an empty
    cluster keeps its previous center."""
    centers = _kmeans_plus_plus(values, k, rng)
    labels = _nearest_center_labels(values, centers)
    for _ in range(_KMEANS_MAX_ITER):
        for j in range(k):
            members = values[labels == j]
            if members.size:
                centers[j] = members.mean()
        centers.sort()
        new_labels = _nearest_center_labels(values, centers)
        if wcss_trace is not None:
            wcss_trace.append(float(((values - centers[new_labels]) ** 2).sum()))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return centers, labels


def stratify_kmeans(
    z: StratVariable | np.ndarray, k: int, seed: int | np.random.Generator
) -> StrataPartition:
    """One-dimensional k-means clustering; strata ordered by cluster center."""
    values = _as_values(z)
    if k < 1:
        raise ValueError("k must be at least 1")
    _require_distinct(values, k)
    rng = np.random.default_rng(seed)
    _, labels = _lloyd_1d(values, k, rng)
    return _build(values, labels, k, KM, None)


def _gmm_em(
    values: np.ndarray, k: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """EM for a 1-D Gaussian mixture seeded from the k-means solution."""
    centers, km_labels = _lloyd_1d(values, k, rng)
    n = values.size
    floor = _GMM_VAR_FLOOR_SCALE * float(np.var(values))
    means = centers.copy()
    variances = np.full(k, floor)
    weights = np.full(k, 1.0 / n)
    for j in range(k):
        members = values[km_labels == j]
        if members.size:
            weights[j] = members.size / n
            variances[j] = max(float(np.var(members)), floor)
    weights /= weights.sum()

    loglik = -np.inf
    for _ in range(_GMM_MAX_ITER):
        log_joint = (
            np.log(np.maximum(weights, 1e-300))
            - 0.5 * np.log(2.0 * np.pi * variances)
            - (values[:, None] - means) ** 2 / (2.0 * variances)
        )
        top = log_joint.max(axis=1, keepdims=True)
        log_norm = top + np.log(np.exp(log_joint - top).sum(axis=1, keepdims=True))
        new_loglik = float(log_norm.sum())
        resp = np.exp(log_joint - log_norm)
        mass = resp.sum(axis=0)
        alive = mass > 1e-12
        weights = mass / n
        means = np.where(alive, (resp * values[:, None]).sum(axis=0) / np.where(alive, mass, 1.0), means)
        second = (resp * (values[:, None] - means) ** 2).sum(axis=0)
        variances = np.where(alive, np.maximum(second / np.where(alive, mass, 1.0), floor), variances)
        if abs(new_loglik - loglik) < _GMM_LOGLIK_TOL:
            loglik = new_loglik
            break
        loglik = new_loglik
    order = np.argsort(means, kind="stable")
    return means[order], variances[order], weights[order]


def stratify_gmm(
    z: StratVariable | np.ndarray, k: int, seed: int | np.random.Generator
) -> StrataPartition:
    """Gaussian-mixture clustering; instances take their maximum-posterior
    component, components ordered by ascending mean. Assignments need not be
    contiguous in z."""
    values = _as_values(z)
    if k < 1:
        raise ValueError("k must be at least 1")
    _require_distinct(values, k)
    rng = np.random.default_rng(seed)
    means, variances, weights = _gmm_em(values, k, rng)
    log_joint = (
        np.log(np.maximum(weights, 1e-300))
        - 0.5 * np.log(2.0 * np.pi * variances)
        - (values[:, None] - means) ** 2 / (2.0 * variances)
    )
    labels = log_joint.argmax(axis=1)
    return _build(values, labels, k, GMM, None)


def stratify(
    z: StratVariable | np.ndarray,
    method: str,
    k: int,
    seed: int | np.random.Generator | None = None,
    density_model: DensityModel | None = None,
) -> StrataPartition:
    """Dispatch to the named stratification method.

    ``density_model`` is required for sqrt/cbrt; ``seed`` is required for
    km/gmm.
    """
    if method not in METHODS:
        raise ValueError(f"unknown stratification method {method!r}")
    if method in (SQRT, CBRT):
        if density_model is None:
            raise ValueError(f"{method} stratification requires a density model")
        exponent = SQRT_EXPONENT if method == SQRT else CBRT_EXPONENT
        boundaries = root_cumulative_boundaries(density_model, k, exponent)
        return assign_by_boundaries(z, boundaries, method=method)
    if method == EQWD:
        return stratify_eqwd(z, k)
    if method == EQSZ:
        return stratify_eqsz(z, k)
    if method == WTMN:
        return stratify_wtmn(z, k)
    if seed is None:
        raise ValueError(f"{method} stratification requires a seed")
    if method == KM:
        return stratify_kmeans(z, k, seed)
    return stratify_gmm(z, k, seed)

"""Monte-Carlo harness: synthetic data, replicated estimation, and reports.

A *cell* is one (method, allocation, K, n) combination. For every cell the
harness runs R independent replicates; each replicate builds a fresh
budget-n oracle for the cell's estimator and a second fresh budget-n
oracle for a simple-random control estimate drawn alongside it. Reported
per cell:

    mae_pct        mean over runs of |a_hat - A| * 100
    mvr            mean variance ratio: by default the ratio of the mean
                   unbiased variance estimates (cell estimator over random
                   control); the mean-of-per-run-ratios variant sits behind
                   ``mvr_mode="mean-of-ratios"``
    empirical_var  variance of the point estimates across runs

Seeding scheme: replicate r of cell c (cells numbered in row order) uses
``SeedSequence((master_seed, c, r))``; its first spawned child drives the
cell estimator and the second the random control. Stratification happens
once per (method, K) with ``SeedSequence((master_seed, method_index, K))``
and never touches labels, so replicates can run in any order or in
parallel without changing the report.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import allocation as alloc
from .dataset import PROBABILISTIC, SCORE_KINDS, ScoredDataset, derive_z
from .density import fit_kde
from .estimation import EQU, PRO, EstimateResult, random_estimate, stratified_estimate, true_accuracy
from .oracle import make_oracle
from .stratification import GMM, KM, METHODS, StrataPartition, stratify

RANDOM = "random"
OPT_A1 = "opt-a1"
OPT_A2 = "opt-a2"
ALLOCATIONS = (PRO, EQU, OPT_A1, OPT_A2, RANDOM)

RATIO_OF_MEANS = "ratio-of-means"
MEAN_OF_RATIOS = "mean-of-ratios"
MVR_MODES = (RATIO_OF_MEANS, MEAN_OF_RATIOS)

# Synthetic probabilistic files use the label codes below rather than 0/1 so
# that the loader's binary positive-class convention does not rewrite the
# scores: the score column already holds the predicted-class probability.
_SYNTH_CORRECT_LABEL = 2
_SYNTH_WRONG_LABEL = 3


@dataclass(frozen=True)
class SyntheticStratum:
    """One generator stratum: weight, accuracy, and its z distribution."""

    weight: float
    accuracy: float
    z_mean: float
    z_sd: float

    def __post_init__(self) -> None:
        if self.weight <= 0.0:
            raise ValueError("stratum weight must be positive")
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError("stratum accuracy must lie in [0, 1]")
        if self.z_sd <= 0.0:
            raise ValueError("z standard deviation must be positive")


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a synthetic scored dataset with known stratum structure."""

    strata: tuple[SyntheticStratum, ...]
    size: int
    score_kind: str = PROBABILISTIC

    def __post_init__(self) -> None:
        if not self.strata:
            raise ValueError("need at least one stratum")
        if self.size < 1:
            raise ValueError("dataset size must be positive")
        if self.score_kind not in SCORE_KINDS:
            raise ValueError(f"score_kind must be one of {SCORE_KINDS}")
        total = sum(s.weight for s in self.strata)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"stratum weights sum to {total}, expected 1")

    @property
    def accuracy(self) -> float:
        sizes = _stratum_sizes(self)
        return float(sum(c for c in _correct_counts(self, sizes))) / self.size


def _stratum_sizes(spec: SyntheticSpec) -> list[int]:
    sizes = [round(s.weight * spec.size) for s in spec.strata]
    sizes[0] += spec.size - sum(sizes)
    if min(sizes) < 1:
        raise ValueError("a stratum rounded to zero instances")
    return sizes


def _correct_counts(spec: SyntheticSpec, sizes: list[int]) -> list[int]:
    return [round(s.accuracy * n_k) for s, n_k in zip(spec.strata, sizes)]


def _truncated_normal(
    rng: np.random.Generator, mean: float, sd: float, size: int, lo: float, hi: float
) -> np.ndarray:
    out = rng.normal(mean, sd, size)
    bad = (out < lo) | (out > hi)
    for _ in range(1000):
        if not bad.any():
            return out
        out[bad] = rng.normal(mean, sd, int(bad.sum()))
        bad = (out < lo) | (out > hi)
    return np.clip(out, lo, hi)  # pathological spec; keep termination


def generate_synthetic(spec: SyntheticSpec, seed: int) -> ScoredDataset:
    """Build a simulation dataset with exact per-stratum accuracies.

    Stratum k receives round(W_k * N) instances (rounding slack lands on
    stratum 0) of which exactly round(A_k * N_k) are predicted correctly;
    correctness positions are shuffled by ``seed``. Probabilistic z values
    are drawn from the stratum's normal law truncated to [0, 1]; margin
    scores take the drawn magnitude with a random sign that doubles as the
    predicted label.
    """
    rng = np.random.default_rng(seed)
    sizes = _stratum_sizes(spec)
    ids = np.arange(1, spec.size + 1, dtype=np.int64)
    scores = np.empty(spec.size, dtype=np.float64)
    predicted = np.empty(spec.size, dtype=np.int64)
    truth = np.empty(spec.size, dtype=np.int64)
    start = 0
    for stratum, n_k, correct in zip(spec.strata, sizes, _correct_counts(spec, sizes)):
        stop = start + n_k
        bits = np.zeros(n_k, dtype=bool)
        bits[:correct] = True
        rng.shuffle(bits)
        if spec.score_kind == PROBABILISTIC:
            z = _truncated_normal(rng, stratum.z_mean, stratum.z_sd, n_k, 0.0, 1.0)
            scores[start:stop] = z
            predicted[start:stop] = _SYNTH_CORRECT_LABEL
            truth[start:stop] = np.where(bits, _SYNTH_CORRECT_LABEL, _SYNTH_WRONG_LABEL)
        else:
            magnitude = np.abs(rng.normal(stratum.z_mean, stratum.z_sd, n_k))
            sign = rng.choice([-1, 1], size=n_k)
            scores[start:stop] = magnitude * sign
            predicted[start:stop] = sign
            truth[start:stop] = np.where(bits, sign, -sign)
        start = stop
    return ScoredDataset(
        ids=ids, scores=scores, predicted=predicted, truth=truth, score_kind=spec.score_kind
    )


def parse_synthetic_spec(path: str | Path) -> SyntheticSpec:
    """Read the line-oriented ``key=value`` spec format.

    Keys: ``N`` (required), ``kind`` (optional, probabilistic/margin) and
    one ``stratum=W,A,z_mean,z_sd`` line per stratum. ``#`` starts a
    comment.
    """
    size: int | None = None
    kind = PROBABILISTIC
    strata: list[SyntheticStratum] = []
    for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"line {line_no}: expected key=value, got {raw!r}")
        key = key.strip()
        value = value.strip()
        if key == "N":
            size = int(value)
        elif key == "kind":
            kind = value
        elif key == "stratum":
            parts = value.split(",")
            if len(parts) != 4:
                raise ValueError(f"line {line_no}: stratum needs W,A,z_mean,z_sd")
            w, a, mean, sd = map(float, parts)
            strata.append(SyntheticStratum(weight=w, accuracy=a, z_mean=mean, z_sd=sd))
        else:
            raise ValueError(f"line {line_no}: unknown key {key!r}")
    if size is None:
        raise ValueError("spec file is missing N=<size>")
    return SyntheticSpec(strata=tuple(strata), size=size, score_kind=kind)


def dataset_true_accuracy(dataset: ScoredDataset) -> float:
    """Whole-population accuracy, obtained through a full-budget oracle so
    that even the harness touches truth only via the oracle."""
    oracle = make_oracle(dataset, dataset.size)
    bits = oracle.query_bits(np.arange(dataset.size))
    return true_accuracy(bits)


@dataclass(frozen=True)
class ExperimentConfig:
    """Grid description for :func:`run_experiment`."""

    dataset: ScoredDataset | None
    methods: tuple[str, ...]
    allocations: tuple[str, ...]
    k_values: tuple[int, ...] = tuple(range(2, 11))
    n_values: tuple[int, ...] = (100,)
    runs: int = 3000
    master_seed: int = 0
    n_ini: int = alloc.DEFAULT_N_INI
    n_step: int = alloc.DEFAULT_N_STEP
    mvr_mode: str = RATIO_OF_MEANS
    jobs: int = 1
    bandwidth: float | None = None
    grid_size: int = 1024

    def __post_init__(self) -> None:
        for method in self.methods:
            if method not in METHODS:
                raise ValueError(f"unknown stratification method {method!r}")
        for allocation in self.allocations:
            if allocation not in ALLOCATIONS:
                raise ValueError(f"unknown allocation {allocation!r}")
        if not self.methods or not self.allocations or not self.k_values or not self.n_values:
            raise ValueError("grid must name at least one cell")
        if self.runs < 2:
            raise ValueError("need at least two runs")
        if self.master_seed < 0:
            raise ValueError("master seed must be nonnegative")
        if self.mvr_mode not in MVR_MODES:
            raise ValueError(f"mvr_mode must be one of {MVR_MODES}")
        if self.jobs < 1:
            raise ValueError("jobs must be positive")
        floor = 2 * max(self.k_values)
        if min(self.n_values) < floor:
            raise ValueError(
                f"smallest n {min(self.n_values)} violates n >= 2K for K={max(self.k_values)}"
            )


@dataclass(frozen=True)
class ReportRow:
    method: str
    allocation: str
    k: int
    n: int
    runs: int
    mae_pct: float
    mvr: float | None
    mean_estimate: float
    empirical_var: float
    excluded_runs: int


_REPORT_COLUMNS = (
    "method,allocation,K,n,runs,mae_pct,mvr,mean_estimate,empirical_var,excluded_runs"
)


@dataclass(frozen=True)
class ExperimentReport:
    rows: tuple[ReportRow, ...]

    def to_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.render_csv(), encoding="utf-8")

    def render_csv(self) -> str:
        lines = [_REPORT_COLUMNS]
        for row in self.rows:
            mvr = "NA" if row.mvr is None else repr(float(row.mvr))
            lines.append(
                f"{row.method},{row.allocation},{row.k},{row.n},{row.runs},"
                f"{float(row.mae_pct)!r},{mvr},{float(row.mean_estimate)!r},"
                f"{float(row.empirical_var)!r},{row.excluded_runs}"
            )
        return "\n".join(lines) + "\n"


@dataclass
class CellStats:
    """Raw per-replicate outcomes of one cell, aligned by replicate index."""

    estimates: np.ndarray
    variances: np.ndarray
    control_estimates: np.ndarray
    control_variances: np.ndarray
    true_accuracy: float

    def mae_pct(self) -> float:
        return float(np.mean(np.abs(self.estimates - self.true_accuracy)) * 100.0)

    def excluded(self, mvr_mode: str = RATIO_OF_MEANS) -> int:
        bad = np.isnan(self.variances)
        if mvr_mode == MEAN_OF_RATIOS:
            bad |= self.control_variances == 0.0
        return int(bad.sum())

    def mvr(self, mvr_mode: str = RATIO_OF_MEANS) -> float | None:
        ok = ~np.isnan(self.variances)
        if mvr_mode == MEAN_OF_RATIOS:
            ok &= self.control_variances > 0.0
        if not ok.any():
            return None
        if mvr_mode == RATIO_OF_MEANS:
            denom = float(self.control_variances[ok].mean())
            if denom == 0.0:
                return None
            return float(self.variances[ok].mean()) / denom
        return float(np.mean(self.variances[ok] / self.control_variances[ok]))

    def summarize(
        self, method: str, allocation: str, k: int, n: int, mvr_mode: str
    ) -> ReportRow:
        return ReportRow(
            method=method,
            allocation=allocation,
            k=k,
            n=n,
            runs=int(self.estimates.size),
            mae_pct=self.mae_pct(),
            mvr=self.mvr(mvr_mode),
            mean_estimate=float(self.estimates.mean()),
            empirical_var=float(self.estimates.var(ddof=1)),
            excluded_runs=self.excluded(mvr_mode),
        )


def _cell_estimate(
    allocation: str,
    dataset: ScoredDataset,
    partition: StrataPartition | None,
    plan: alloc.AllocationPlan | None,
    n: int,
    n_ini: int,
    n_step: int,
    seed: np.random.SeedSequence,
) -> EstimateResult:
    oracle = make_oracle(dataset, n)
    if allocation == RANDOM:
        return random_estimate(oracle, n, seed)
    assert partition is not None
    if allocation in (PRO, EQU):
        assert plan is not None
        return stratified_estimate(oracle, partition, plan, seed)
    if allocation == OPT_A1:
        return alloc.opt_a1(oracle, partition, n, n_ini=n_ini, seed=seed)
    return alloc.opt_a2(oracle, partition, n, n_ini=n_ini, n_step=n_step, seed=seed)


def _replicate_block(
    dataset: ScoredDataset,
    partition: StrataPartition | None,
    allocation: str,
    n: int,
    rep_range: tuple[int, int],
    master_seed: int,
    cell_index: int,
    n_ini: int,
    n_step: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    lo, hi = rep_range
    count = hi - lo
    est = np.empty(count)
    var = np.full(count, np.nan)
    ctrl_est = np.empty(count)
    ctrl_var = np.empty(count)
    plan: alloc.AllocationPlan | None = None
    if partition is not None and allocation == PRO:
        plan = alloc.allocate_proportional(partition.weights, n)
    elif partition is not None and allocation == EQU:
        plan = alloc.allocate_equal(partition.k, n)
    for i, r in enumerate(range(lo, hi)):
        seed_main, seed_ctrl = np.random.SeedSequence(
            (master_seed, cell_index, r)
        ).spawn(2)
        result = _cell_estimate(
            allocation, dataset, partition, plan, n, n_ini, n_step, seed_main
        )
        est[i] = result.estimate
        if result.variance_estimate is not None:
            var[i] = result.variance_estimate
        control = random_estimate(make_oracle(dataset, n), n, seed_ctrl)
        ctrl_est[i] = control.estimate
        ctrl_var[i] = control.variance_estimate
    return est, var, ctrl_est, ctrl_var


def run_cell(
    dataset: ScoredDataset,
    partition: StrataPartition | None,
    allocation: str,
    n: int,
    runs: int,
    master_seed: int,
    cell_index: int = 0,
    n_ini: int = alloc.DEFAULT_N_INI,
    n_step: int = alloc.DEFAULT_N_STEP,
    jobs: int = 1,
    pool: ProcessPoolExecutor | None = None,
) -> CellStats:
    """Run one cell's replicates; aggregation is by replicate index, so the
    result is independent of worker count."""
    if allocation not in ALLOCATIONS:
        raise ValueError(f"unknown allocation {allocation!r}")
    if allocation != RANDOM and partition is None:
        raise ValueError(f"allocation {allocation!r} needs a partition")
    if jobs <= 1 or runs < 2 * jobs:
        est, var, ctrl_est, ctrl_var = _replicate_block(
            dataset, partition, allocation, n, (0, runs), master_seed, cell_index, n_ini, n_step
        )
    else:
        edges = np.linspace(0, runs, jobs + 1).astype(int)
        ranges = [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if a < b]
        own_pool = pool is None
        executor = pool or ProcessPoolExecutor(max_workers=jobs)
        try:
            blocks = list(
                executor.map(
                    _replicate_block_star,
                    [(dataset, partition, allocation, n, rng, master_seed, cell_index, n_ini, n_step) for rng in ranges],
                )
            )
        finally:
            if own_pool:
                executor.shutdown()
        est = np.concatenate([b[0] for b in blocks])
        var = np.concatenate([b[1] for b in blocks])
        ctrl_est = np.concatenate([b[2] for b in blocks])
        ctrl_var = np.concatenate([b[3] for b in blocks])
    return CellStats(
        estimates=est,
        variances=var,
        control_estimates=ctrl_est,
        control_variances=ctrl_var,
        true_accuracy=dataset_true_accuracy(dataset),
    )


def _replicate_block_star(args):  # ProcessPoolExecutor.map needs one argument
    dataset, partition, allocation, n, rep_range, master_seed, cell_index, n_ini, n_step = args
    return _replicate_block(
        dataset, partition, allocation, n, rep_range, master_seed, cell_index, n_ini, n_step
    )


def build_partitions(
    config: ExperimentConfig, dataset: ScoredDataset
) -> dict[tuple[str, int], StrataPartition]:
    """Stratify once per (method, K); clustering seeds derive from the
    master seed and the cell coordinates."""
    z = derive_z(dataset)
    model = None
    if any(m in ("sqrt", "cbrt") for m in config.methods):
        model = fit_kde(z, bandwidth=config.bandwidth, grid_size=config.grid_size)
    partitions: dict[tuple[str, int], StrataPartition] = {}
    for method in config.methods:
        for k in config.k_values:
            seed = None
            if method in (KM, GMM):
                seed = np.random.SeedSequence(
                    (config.master_seed, METHODS.index(method), k)
                )
            partitions[(method, k)] = stratify(
                z, method, k, seed=seed, density_model=model
            )
    return partitions


def run_experiment(config: ExperimentConfig, progress=None) -> ExperimentReport:
    """Execute the full grid; rows appear in (method, allocation, K, n)
    nesting order and cells are numbered in that order for seeding."""
    if config.dataset is None:
        raise ValueError("config needs a dataset")
    dataset = config.dataset
    if not dataset.has_truth:
        raise ValueError("experiments need a simulation dataset with truth")
    partitions = build_partitions(config, dataset)
    total_cells = (
        len(config.methods) * len(config.allocations) * len(config.k_values) * len(config.n_values)
    )
    rows: list[ReportRow] = []
    cell_index = 0
    pool = ProcessPoolExecutor(max_workers=config.jobs) if config.jobs > 1 else None
    try:
        for method in config.methods:
            for allocation in config.allocations:
                for k in config.k_values:
                    for n in config.n_values:
                        if progress is not None:
                            progress(cell_index + 1, total_cells, method, allocation, k, n)
                        partition = None if allocation == RANDOM else partitions[(method, k)]
                        stats = run_cell(
                            dataset,
                            partition,
                            allocation,
                            n,
                            config.runs,
                            config.master_seed,
                            cell_index=cell_index,
                            n_ini=config.n_ini,
                            n_step=config.n_step,
                            jobs=config.jobs,
                            pool=pool,
                        )
                        rows.append(
                            stats.summarize(method, allocation, k, n, config.mvr_mode)
                        )
                        cell_index += 1
    finally:
        if pool is not None:
            pool.shutdown()
    return ExperimentReport(rows=tuple(rows))


def n_for_error_target(
    report: ExperimentReport,
    target_pct: float = 1.0,
    method: str | None = None,
    allocation: str | None = None,
    k: int | None = None,
) -> int | None:
    """Smallest swept n whose MAE meets the target, or None when never met.

    The filtered rows must form a single (method, allocation, K) curve;
    pass the keyword filters to select one from a multi-curve report.
    """
    rows = [
        row
        for row in report.rows
        if (method is None or row.method == method)
        and (allocation is None or row.allocation == allocation)
        and (k is None or row.k == k)
    ]
    if not rows:
        raise ValueError("no rows match the requested curve")
    curves = {(row.method, row.allocation, row.k) for row in rows}
    if len(curves) > 1:
        raise ValueError(f"rows span {len(curves)} curves; add filters")
    for row in sorted(rows, key=lambda r: r.n):
        if row.mae_pct <= target_pct:
            return row.n
    return None


def scale_spec_accuracy(spec: SyntheticSpec, level: float) -> SyntheticSpec:
    """Rescale all stratum accuracies so the overall accuracy equals
    ``level`` while keeping the z structure unchanged."""
    base = sum(s.weight * s.accuracy for s in spec.strata)
    if base <= 0.0:
        raise ValueError("base spec has zero accuracy; cannot rescale")
    factor = level / base
    strata = []
    for s in spec.strata:
        acc = s.accuracy * factor
        if acc > 1.0 + 1e-12:
            raise ValueError(
                f"level {level} pushes a stratum accuracy to {acc:.4f} > 1"
            )
        strata.append(replace(s, accuracy=min(acc, 1.0)))
    return replace(spec, strata=tuple(strata))


@dataclass(frozen=True)
class AccuracyLevelRow:
    accuracy_level: float
    mvr: float | None
    mae_pct: float
    mean_estimate: float


def accuracy_dependence_study(
    base_spec: SyntheticSpec,
    accuracy_levels: Sequence[float],
    config: ExperimentConfig,
) -> list[AccuracyLevelRow]:
    """MVR of the iterative optimal procedure across true-accuracy levels.

    One synthetic dataset is generated per level (same z structure, scaled
    stratum accuracies, data seed ``SeedSequence((master_seed, 1000 + i))``)
    and a single opt-a2 cell from ``config`` runs on each; the config's
    dataset field is ignored and its grid must name exactly one
    (method, K, n) cell.
    """
    if len(accuracy_levels) < 1:
        raise ValueError("need at least one accuracy level")
    if len(config.methods) != 1 or len(config.k_values) != 1 or len(config.n_values) != 1:
        raise ValueError("study config must pin one method, one K and one n")
    method = config.methods[0]
    k = config.k_values[0]
    n = config.n_values[0]
    out: list[AccuracyLevelRow] = []
    for i, level in enumerate(accuracy_levels):
        spec = scale_spec_accuracy(base_spec, level)
        data_seed = np.random.SeedSequence((config.master_seed, 1000 + i)).generate_state(1)[0]
        dataset = generate_synthetic(spec, int(data_seed))
        level_config = replace(
            config, dataset=dataset, allocations=(OPT_A2,), methods=(method,),
            k_values=(k,), n_values=(n,)
        )
        report = run_experiment(level_config)
        row = report.rows[0]
        out.append(
            AccuracyLevelRow(
                accuracy_level=float(level),
                mvr=row.mvr,
                mae_pct=row.mae_pct,
                mean_estimate=row.mean_estimate,
            )
        )
    return out

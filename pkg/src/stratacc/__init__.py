"""Stratified-sampling estimation of classifier accuracy under a fixed
labeling budget.

The pipeline: load classifier scores, derive a stratification variable,
partition the test set into strata, split the labeling budget across them
(proportionally, equally, or variance-optimally via adaptive pilots), and
estimate accuracy from the labels a budgeted oracle reveals. A Monte-Carlo
harness measures the variance reduction against simple random sampling.
"""

from .allocation import (
    AllocationPlan,
    OptState,
    allocate_equal,
    allocate_optimal,
    allocate_proportional,
    opt_a1,
    opt_a2,
    round_allocation,
)
from .dataset import (
    DataFormatError,
    InstanceRecord,
    MARGIN,
    PROBABILISTIC,
    ScoredDataset,
    StratVariable,
    derive_z,
    load_scored_csv,
    write_scored_csv,
)
from .density import (
    DensityModel,
    fit_kde,
    root_cumulative_boundaries,
    silverman_bandwidth,
)
from .estimation import (
    EQU,
    EstimateResult,
    OPT,
    PRO,
    StratumStats,
    StratumTruth,
    VarianceGaps,
    allocation_variance,
    case2_exact_gap,
    finite_population_variance,
    population_accuracy,
    random_estimate,
    sample_variance_bernoulli,
    stratified_estimate,
    theoretical_variance_random,
    theoretical_variance_stratified,
    true_accuracy,
    variance_decomposition,
)
from .harness import (
    ALLOCATIONS,
    AccuracyLevelRow,
    CellStats,
    ExperimentConfig,
    ExperimentReport,
    OPT_A1,
    OPT_A2,
    RANDOM,
    ReportRow,
    SyntheticSpec,
    SyntheticStratum,
    accuracy_dependence_study,
    dataset_true_accuracy,
    generate_synthetic,
    n_for_error_target,
    parse_synthetic_spec,
    run_cell,
    run_experiment,
    scale_spec_accuracy,
)
from .oracle import BudgetError, BudgetedOracle, CorrectnessBit, make_oracle
from .stratification import (
    METHODS,
    StrataPartition,
    assign_by_boundaries,
    stratify,
    stratify_eqsz,
    stratify_eqwd,
    stratify_gmm,
    stratify_kmeans,
    stratify_wtmn,
)

__version__ = "0.1.0"

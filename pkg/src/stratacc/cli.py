"""Command-line front end.

Subcommands:

    synth      write a synthetic simulation CSV from a spec file
    stratify   partition a score file and write id,stratum rows
    estimate   one accuracy estimate under a chosen allocation
    sweep      full Monte-Carlo grid, written as a report CSV

Exit codes: 0 success, 1 usage error, 2 data error. All randomness flows
from the required --seed, so identical invocations produce identical bytes.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import allocation as alloc
from .dataset import (
    DataFormatError,
    PROBABILISTIC,
    SCORE_KINDS,
    derive_z,
    load_scored_csv,
    write_scored_csv,
)
from .density import DEFAULT_GRID_SIZE, fit_kde
from .estimation import EQU, PRO, random_estimate, stratified_estimate
from .harness import (
    ALLOCATIONS,
    MVR_MODES,
    OPT_A1,
    OPT_A2,
    RANDOM,
    RATIO_OF_MEANS,
    ExperimentConfig,
    generate_synthetic,
    parse_synthetic_spec,
    run_experiment,
)
from .oracle import BudgetError, make_oracle
from .stratification import CBRT, METHODS, SQRT, stratify


class _Parser(argparse.ArgumentParser):
    # usage problems exit 1; argparse's default is 2, reserved here for data errors
    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _int_list(text: str) -> list[int]:
    return [int(part) for part in text.split(",") if part]


def _str_list(text: str) -> list[str]:
    return [part for part in text.split(",") if part]


def _build_parser() -> _Parser:
    parser = _Parser(prog="stratacc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate a synthetic simulation CSV")
    synth.add_argument("--spec", required=True, help="key=value spec file")
    synth.add_argument("--seed", type=int, required=True)
    synth.add_argument("--out", required=True)

    def add_data_options(p: argparse.ArgumentParser) -> None:
        p.add_argument("--data", required=True, help="scored CSV file")
        p.add_argument("--score-kind", choices=SCORE_KINDS, default=PROBABILISTIC)
        p.add_argument("--bandwidth", type=float, default=None)
        p.add_argument("--grid-size", type=int, default=DEFAULT_GRID_SIZE)

    strat = sub.add_parser("stratify", help="write an id,stratum partition CSV")
    add_data_options(strat)
    strat.add_argument("--method", choices=METHODS, required=True)
    strat.add_argument("--k", type=int, required=True)
    strat.add_argument("--seed", type=int, required=True)
    strat.add_argument("--out", default=None, help="default: stdout")

    est = sub.add_parser("estimate", help="single estimate on one dataset")
    add_data_options(est)
    est.add_argument("--method", choices=METHODS, default=None)
    est.add_argument("--k", type=int, default=None)
    est.add_argument("--alloc", choices=ALLOCATIONS, required=True)
    est.add_argument("--n", type=int, required=True)
    est.add_argument("--n-ini", type=int, default=alloc.DEFAULT_N_INI)
    est.add_argument("--n-step", type=int, default=alloc.DEFAULT_N_STEP)
    est.add_argument("--seed", type=int, required=True)
    est.add_argument(
        "--no-truth",
        action="store_true",
        help="plan the allocation without touching labels (pro/equ only)",
    )
    est.add_argument("--out", default=None, help="default: stdout")

    sweep = sub.add_parser("sweep", help="Monte-Carlo grid over the dataset")
    add_data_options(sweep)
    sweep.add_argument("--methods", type=_str_list, required=True)
    sweep.add_argument("--alloc", type=_str_list, required=True)
    sweep.add_argument("--k", type=_int_list, required=True)
    sweep.add_argument("--n", type=_int_list, required=True)
    sweep.add_argument("--runs", type=int, default=3000)
    sweep.add_argument("--seed", type=int, required=True)
    sweep.add_argument("--jobs", type=int, default=1)
    sweep.add_argument("--mvr-mode", choices=MVR_MODES, default=RATIO_OF_MEANS)
    sweep.add_argument("--n-ini", type=int, default=alloc.DEFAULT_N_INI)
    sweep.add_argument("--n-step", type=int, default=alloc.DEFAULT_N_STEP)
    sweep.add_argument("--out", required=True)
    return parser


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _partition_for(args: argparse.Namespace, parser: _Parser):
    dataset = load_scored_csv(args.data, args.score_kind)
    z = derive_z(dataset)
    model = None
    if args.method in (SQRT, CBRT):
        model = fit_kde(z, bandwidth=args.bandwidth, grid_size=args.grid_size)
    partition = stratify(z, args.method, args.k, seed=args.seed, density_model=model)
    return dataset, partition


def _cmd_synth(args: argparse.Namespace, parser: _Parser) -> int:
    spec = parse_synthetic_spec(args.spec)
    dataset = generate_synthetic(spec, args.seed)
    write_scored_csv(dataset, args.out)
    return 0


def _cmd_stratify(args: argparse.Namespace, parser: _Parser) -> int:
    if args.k < 2:
        parser.error("--k must be at least 2")
    dataset, partition = _partition_for(args, parser)
    lines = ["id,stratum"]
    lines.extend(
        f"{int(i)},{int(s)}" for i, s in zip(dataset.ids, partition.assignment)
    )
    _emit("\n".join(lines) + "\n", args.out)
    if partition.merged_empty:
        print(
            f"warning: empty strata merged; partition has K={partition.k}",
            file=sys.stderr,
        )
    return 0


def _format_estimate(result) -> str:
    variance = (
        "NA" if result.variance_estimate is None else repr(float(result.variance_estimate))
    )
    return (
        "estimate,variance_estimate,samples_used\n"
        f"{float(result.estimate)!r},{variance},{result.samples_used}\n"
    )


def _cmd_estimate(args: argparse.Namespace, parser: _Parser) -> int:
    needs_partition = args.alloc != RANDOM
    if needs_partition and (args.method is None or args.k is None):
        parser.error(f"--alloc {args.alloc} requires --method and --k")
    if args.no_truth:
        if args.alloc not in (PRO, EQU):
            parser.error("--no-truth planning supports only pro or equ allocation")
        _, partition = _partition_for(args, parser)
        if args.alloc == PRO:
            plan = alloc.allocate_proportional(partition.weights, args.n)
        else:
            plan = alloc.allocate_equal(partition.k, args.n)
        lines = ["stratum,n_k"]
        lines.extend(f"{k},{c}" for k, c in enumerate(plan.counts))
        _emit("\n".join(lines) + "\n", args.out)
        return 0
    if needs_partition:
        dataset, partition = _partition_for(args, parser)
    else:
        dataset = load_scored_csv(args.data, args.score_kind)
        partition = None
    oracle = make_oracle(dataset, args.n)
    if args.alloc == RANDOM:
        result = random_estimate(oracle, args.n, args.seed)
    elif args.alloc == PRO:
        plan = alloc.allocate_proportional(partition.weights, args.n)
        result = stratified_estimate(oracle, partition, plan, args.seed)
    elif args.alloc == EQU:
        plan = alloc.allocate_equal(partition.k, args.n)
        result = stratified_estimate(oracle, partition, plan, args.seed)
    elif args.alloc == OPT_A1:
        result = alloc.opt_a1(oracle, partition, args.n, n_ini=args.n_ini, seed=args.seed)
    else:
        result = alloc.opt_a2(
            oracle, partition, args.n, n_ini=args.n_ini, n_step=args.n_step, seed=args.seed
        )
    _emit(_format_estimate(result), args.out)
    return 0


def _cmd_sweep(args: argparse.Namespace, parser: _Parser) -> int:
    for method in args.methods:
        if method not in METHODS:
            parser.error(f"unknown stratification method {method!r}")
    for allocation in args.alloc:
        if allocation not in ALLOCATIONS:
            parser.error(f"unknown allocation {allocation!r}")
    dataset = load_scored_csv(args.data, args.score_kind)
    config = ExperimentConfig(
        dataset=dataset,
        methods=tuple(args.methods),
        allocations=tuple(args.alloc),
        k_values=tuple(args.k),
        n_values=tuple(args.n),
        runs=args.runs,
        master_seed=args.seed,
        n_ini=args.n_ini,
        n_step=args.n_step,
        mvr_mode=args.mvr_mode,
        jobs=args.jobs,
        bandwidth=args.bandwidth,
        grid_size=args.grid_size,
    )

    def progress(i, total, method, allocation, k, n):
        print(
            f"cell {i}/{total}: method={method} alloc={allocation} K={k} n={n}",
            file=sys.stderr,
        )

    report = run_experiment(config, progress=progress)
    report.to_csv(args.out)
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "stratify": _cmd_stratify,
    "estimate": _cmd_estimate,
    "sweep": _cmd_sweep,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args, parser)
    except SystemExit as exc:  # parser.error inside a command
        return int(exc.code or 0)
    except (DataFormatError, BudgetError, ValueError, OSError) as exc:
        print(f"stratacc: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Budgeted access to true labels.

The oracle is the only component that reads the truth column. It answers
label queries as correctness bits (1 when the prediction matched, 0
otherwise) and enforces a hard budget: once n labels have been served it
refuses further queries. Repeated queries for the same instance each
consume budget, keeping the accounting aligned with sampling with
replacement. Queries are atomic: a query that would overshoot the budget
fails without consuming anything.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import ScoredDataset


class BudgetError(RuntimeError):
    """A query would exceed the labeling budget; carries the remainder."""

    def __init__(self, requested: int, remaining: int):
        super().__init__(
            f"query for {requested} labels exceeds remaining budget {remaining}"
        )
        self.requested = requested
        self.remaining = remaining


@dataclass(frozen=True, slots=True)
class CorrectnessBit:
    """Outcome of one label reveal: a=1 iff predicted equals true label."""

    id: int
    a: int


class BudgetedOracle:
    """Gateway that converts revealed labels into correctness bits.

    One oracle serves one estimation replicate; it is mutable (the consumed
    counter advances) and must not be shared across concurrent replicates.
    """

    def __init__(self, ids: np.ndarray, predicted: np.ndarray, truth: np.ndarray, budget: int):
        if budget < 0:
            raise ValueError("budget must be nonnegative")
        self._ids = ids
        self._predicted = predicted
        self._truth = truth
        self._budget = int(budget)
        self._consumed = 0
        self._id_index: dict[int, int] | None = None

    @property
    def population_size(self) -> int:
        return int(self._ids.size)

    @property
    def budget(self) -> int:
        return self._budget

    @property
    def consumed(self) -> int:
        return self._consumed

    @property
    def remaining(self) -> int:
        return self._budget - self._consumed

    def query_bits(self, indices: np.ndarray | Sequence[int]) -> np.ndarray:
        """Reveal labels at dataset positions; returns a float array of 0/1."""
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= self.population_size):
            raise ValueError("instance index out of range")
        if self._consumed + idx.size > self._budget:
            raise BudgetError(requested=int(idx.size), remaining=self.remaining)
        self._consumed += int(idx.size)
        return (self._predicted[idx] == self._truth[idx]).astype(np.float64)

    def query(self, ids: Sequence[int]) -> list[CorrectnessBit]:
        """Reveal labels by instance id."""
        if self._id_index is None:
            self._id_index = {int(v): i for i, v in enumerate(self._ids)}
        try:
            idx = [self._id_index[int(v)] for v in ids]
        except KeyError as exc:
            raise ValueError(f"unknown instance id {exc.args[0]}") from None
        bits = self.query_bits(np.asarray(idx, dtype=np.int64))
        return [
            CorrectnessBit(id=int(v), a=int(b)) for v, b in zip(ids, bits)
        ]


def make_oracle(dataset: ScoredDataset, budget: int) -> BudgetedOracle:
    """Build an oracle over a simulation dataset; consumed starts at zero."""
    if dataset.truth is None:
        raise ValueError("dataset lacks truth column; cannot build an oracle")
    return BudgetedOracle(dataset.ids, dataset.predicted, dataset.truth, budget)

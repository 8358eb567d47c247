"""Classifier score files and the stratification variable derived from them.

A scored dataset holds one row per test instance: the classifier's raw
score, its predicted label and, in simulation files, the true label. True
labels travel with the dataset only so that a budgeted label oracle can
reveal them one query at a time; estimation code never reads them directly.

CSV contract (UTF-8, comma separated, integer ids and labels):

    id,score,predicted,truth      simulation file
    id,score,predicted            deployment file (no labels available)

Row order defines the instance index used everywhere downstream.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

PROBABILISTIC = "probabilistic"
MARGIN = "margin"
SCORE_KINDS = (PROBABILISTIC, MARGIN)

_SIM_HEADER = ["id", "score", "predicted", "truth"]
_DEPLOY_HEADER = ["id", "score", "predicted"]


class DataFormatError(ValueError):
    """An input file violates the CSV contract."""


@dataclass(frozen=True, slots=True)
class InstanceRecord:
    """One scored test instance; ``true_label`` is None in deployment files."""

    id: int
    raw_score: float
    predicted_label: int
    true_label: int | None = None


@dataclass(eq=False)
class ScoredDataset:
    """Column-oriented store of a score file.

    ``truth`` is sealed by convention: the only legitimate consumer is the
    oracle module, which meters access against a labeling budget. Everything
    else (stratification, allocation, estimation) works off scores and
    predicted labels alone.
    """

    ids: np.ndarray
    scores: np.ndarray
    predicted: np.ndarray
    truth: np.ndarray | None
    score_kind: str

    def __post_init__(self) -> None:
        if self.score_kind not in SCORE_KINDS:
            raise ValueError(f"score_kind must be one of {SCORE_KINDS}")
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.predicted = np.asarray(self.predicted, dtype=np.int64)
        if self.truth is not None:
            self.truth = np.asarray(self.truth, dtype=np.int64)
        lengths = {arr.shape for arr in (self.ids, self.scores, self.predicted)}
        if self.truth is not None:
            lengths.add(self.truth.shape)
        if len(lengths) != 1 or self.ids.ndim != 1:
            raise ValueError("ids, scores, predicted and truth must be aligned 1-D columns")
        if self.ids.size == 0:
            raise DataFormatError("empty dataset")
        if np.unique(self.ids).size != self.ids.size:
            raise ValueError("instance ids must be unique")
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("scores must be finite")
        if self.score_kind == PROBABILISTIC and (
            self.scores.min() < 0.0 or self.scores.max() > 1.0
        ):
            raise ValueError("probabilistic scores must lie in [0, 1]")

    @property
    def size(self) -> int:
        return int(self.ids.size)

    @property
    def has_truth(self) -> bool:
        return self.truth is not None

    def record(self, i: int) -> InstanceRecord:
        truth = int(self.truth[i]) if self.truth is not None else None
        return InstanceRecord(
            id=int(self.ids[i]),
            raw_score=float(self.scores[i]),
            predicted_label=int(self.predicted[i]),
            true_label=truth,
        )

    def __len__(self) -> int:
        return self.size

    def __iter__(self) -> Iterator[InstanceRecord]:
        return (self.record(i) for i in range(self.size))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ScoredDataset):
            return NotImplemented
        if self.score_kind != other.score_kind or self.has_truth != other.has_truth:
            return False
        same = (
            np.array_equal(self.ids, other.ids)
            and np.array_equal(self.scores, other.scores)
            and np.array_equal(self.predicted, other.predicted)
        )
        if same and self.truth is not None:
            same = np.array_equal(self.truth, other.truth)
        return same


@dataclass(frozen=True)
class StratVariable:
    """Per-instance stratification values, aligned with dataset row order."""

    values: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if self.values.ndim != 1 or self.values.size == 0:
            raise ValueError("stratification variable must be a nonempty 1-D sequence")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("stratification values must be finite")
        if self.values.min() < 0.0:
            raise ValueError("stratification values must be nonnegative")

    def __len__(self) -> int:
        return int(self.values.size)


def _parse_int(text: str, line_no: int, column: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise DataFormatError(f"line {line_no}: non-integer {column} {text!r}") from None


def load_scored_csv(path: str | Path, score_kind: str) -> ScoredDataset:
    """Load a score file, validating the CSV contract row by row.

    Violations (wrong header, ragged rows, non-numeric fields, probabilistic
    scores outside [0, 1], duplicate ids) raise :class:`DataFormatError`
    naming the offending line; line 1 is the header.
    """
    if score_kind not in SCORE_KINDS:
        raise ValueError(f"score_kind must be one of {SCORE_KINDS}")
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError("empty dataset") from None
        if header == _SIM_HEADER:
            with_truth = True
        elif header == _DEPLOY_HEADER:
            with_truth = False
        else:
            raise DataFormatError(
                f"line 1: header must be {','.join(_SIM_HEADER)!r} or "
                f"{','.join(_DEPLOY_HEADER)!r}, got {','.join(header)!r}"
            )
        width = 4 if with_truth else 3
        ids: list[int] = []
        scores: list[float] = []
        predicted: list[int] = []
        truth: list[int] = []
        seen: set[int] = set()
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise DataFormatError(
                    f"line {line_no}: expected {width} columns, got {len(row)}"
                )
            rid = _parse_int(row[0], line_no, "id")
            if rid in seen:
                raise DataFormatError(f"line {line_no}: duplicate id {rid}")
            seen.add(rid)
            try:
                score = float(row[1])
            except ValueError:
                raise DataFormatError(
                    f"line {line_no}: non-numeric score {row[1]!r}"
                ) from None
            if not np.isfinite(score):
                raise DataFormatError(f"line {line_no}: non-finite score {row[1]!r}")
            if score_kind == PROBABILISTIC and not 0.0 <= score <= 1.0:
                raise DataFormatError(
                    f"line {line_no}: probabilistic score {score!r} outside [0, 1]"
                )
            ids.append(rid)
            scores.append(score)
            predicted.append(_parse_int(row[2], line_no, "predicted label"))
            if with_truth:
                truth.append(_parse_int(row[3], line_no, "true label"))
    if not ids:
        raise DataFormatError("empty dataset")
    return ScoredDataset(
        ids=np.array(ids, dtype=np.int64),
        scores=np.array(scores, dtype=np.float64),
        predicted=np.array(predicted, dtype=np.int64),
        truth=np.array(truth, dtype=np.int64) if with_truth else None,
        score_kind=score_kind,
    )


def write_scored_csv(dataset: ScoredDataset, path: str | Path) -> None:
    """Write a dataset back to the CSV contract; reloading round-trips."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_SIM_HEADER if dataset.has_truth else _DEPLOY_HEADER)
        for i in range(dataset.size):
            row = [
                int(dataset.ids[i]),
                repr(float(dataset.scores[i])),
                int(dataset.predicted[i]),
            ]
            if dataset.truth is not None:
                row.append(int(dataset.truth[i]))
            writer.writerow(row)


def _is_binary_coded(labels: np.ndarray) -> bool:
    present = set(int(v) for v in np.unique(labels))
    return present <= {0, 1} or present <= {-1, 1}


def derive_z(dataset: ScoredDataset) -> StratVariable:
    """Derive the stratification variable from classifier outputs.

    Margin scores map to their magnitude. Probabilistic scores map to the
    probability of the predicted class: binary-coded files ({0,1} or
    {-1,+1} labels) store the positive-class probability p, folded here to
    max(p, 1-p); any other label alphabet is taken to already store the
    predicted-class probability in the score column.
    """
    if dataset.score_kind == MARGIN:
        return StratVariable(np.abs(dataset.scores))
    if _is_binary_coded(dataset.predicted):
        return StratVariable(np.maximum(dataset.scores, 1.0 - dataset.scores))
    return StratVariable(dataset.scores.copy())

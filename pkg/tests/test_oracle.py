import numpy as np
import pytest

from stratacc.dataset import PROBABILISTIC, ScoredDataset
from stratacc.oracle import BudgetError, make_oracle


def dataset(predicted, truth):
    n = len(predicted)
    return ScoredDataset(
        ids=np.arange(10, 10 + n),
        scores=np.linspace(0.1, 0.9, n),
        predicted=np.asarray(predicted),
        truth=np.asarray(truth) if truth is not None else None,
        score_kind=PROBABILISTIC,
    )


def test_correctness_bit_definition():
    oracle = make_oracle(dataset([1, 0, 1], [1, 1, 0]), budget=3)
    bits = oracle.query([10, 11, 12])
    assert [(b.id, b.a) for b in bits] == [(10, 1), (11, 0), (12, 0)]


def test_budget_accounting():
    oracle = make_oracle(dataset([1] * 6, [1] * 6), budget=5)
    oracle.query([10, 11, 12])
    assert oracle.consumed == 3
    assert oracle.remaining == 2


def test_budget_exceeded_is_atomic():
    oracle = make_oracle(dataset([1] * 6, [1] * 6), budget=5)
    with pytest.raises(BudgetError) as info:
        oracle.query([10, 11, 12, 13, 14, 15])
    assert info.value.remaining == 5
    assert oracle.consumed == 0
    # the failed query left the full budget intact
    assert len(oracle.query([10, 11, 12, 13, 14])) == 5


def test_zero_budget_rejects_any_query():
    oracle = make_oracle(dataset([1], [1]), budget=0)
    with pytest.raises(BudgetError):
        oracle.query([10])


def test_full_budget_allows_complete_labeling():
    oracle = make_oracle(dataset([1, 0], [0, 0]), budget=2)
    bits = oracle.query_bits(np.array([0, 1]))
    assert bits.tolist() == [0.0, 1.0]
    assert oracle.remaining == 0


def test_negative_budget_rejected():
    with pytest.raises(ValueError):
        make_oracle(dataset([1], [1]), budget=-1)


def test_missing_truth_rejected():
    with pytest.raises(ValueError, match="truth"):
        make_oracle(dataset([1], None), budget=1)


def test_unknown_id_rejected():
    oracle = make_oracle(dataset([1], [1]), budget=5)
    with pytest.raises(ValueError, match="unknown"):
        oracle.query([99])
    assert oracle.consumed == 0


def test_repeated_ids_consume_budget_per_draw():
    oracle = make_oracle(dataset([1, 1], [1, 1]), budget=3)
    oracle.query([10, 10, 10])
    assert oracle.consumed == 3
    with pytest.raises(BudgetError):
        oracle.query([10])

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stratacc.dataset import (
    DataFormatError,
    MARGIN,
    PROBABILISTIC,
    ScoredDataset,
    derive_z,
    load_scored_csv,
    write_scored_csv,
)


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def test_load_probabilistic_file(tmp_path):
    path = write_lines(tmp_path / "d.csv", ["id,score,predicted,truth", "1,0.9,1,1", "2,0.2,0,1"])
    ds = load_scored_csv(path, PROBABILISTIC)
    assert ds.size == 2
    assert ds.has_truth
    assert ds.record(0).raw_score == 0.9
    assert ds.record(1).true_label == 1


def test_load_deployment_file_without_truth(tmp_path):
    path = write_lines(tmp_path / "d.csv", ["id,score,predicted", "1,0.9,1"])
    ds = load_scored_csv(path, PROBABILISTIC)
    assert not ds.has_truth
    assert ds.record(0).true_label is None


def test_empty_data_section_rejected(tmp_path):
    path = write_lines(tmp_path / "d.csv", ["id,score,predicted,truth"])
    with pytest.raises(DataFormatError, match="empty dataset"):
        load_scored_csv(path, PROBABILISTIC)


def test_score_out_of_range_names_line(tmp_path):
    path = write_lines(tmp_path / "d.csv", ["id,score,predicted,truth", "1,0.9,1,1", "2,1.7,0,1"])
    with pytest.raises(DataFormatError, match="line 3"):
        load_scored_csv(path, PROBABILISTIC)


def test_margin_scores_may_exceed_unit_interval(tmp_path):
    path = write_lines(tmp_path / "d.csv", ["id,score,predicted,truth", "1,-1.7,-1,1", "2,2.5,1,1"])
    ds = load_scored_csv(path, MARGIN)
    assert ds.size == 2


@pytest.mark.parametrize(
    "row,message",
    [
        ("2,0.5,0", "expected 4 columns"),
        ("2,0.5,0,1,9", "expected 4 columns"),
        ("2,abc,0,1", "non-numeric score"),
        ("1,0.5,0,1", "duplicate id"),
        ("2,0.5,x,1", "non-integer predicted"),
    ],
)
def test_bad_rows_report_line_number(tmp_path, row, message):
    path = write_lines(
        tmp_path / "d.csv", ["id,score,predicted,truth", "1,0.9,1,1", row]
    )
    with pytest.raises(DataFormatError, match=f"line 3.*{message}|{message}"):
        load_scored_csv(path, PROBABILISTIC)


def test_wrong_header_rejected(tmp_path):
    path = write_lines(tmp_path / "d.csv", ["id,prob,predicted,truth", "1,0.9,1,1"])
    with pytest.raises(DataFormatError, match="line 1"):
        load_scored_csv(path, PROBABILISTIC)


def test_round_trip_identity(tmp_path):
    ds = ScoredDataset(
        ids=np.array([3, 1, 2]),
        scores=np.array([0.25, 0.125, 1.0]),
        predicted=np.array([1, 0, 1]),
        truth=np.array([1, 1, 0]),
        score_kind=PROBABILISTIC,
    )
    path = tmp_path / "d.csv"
    write_scored_csv(ds, path)
    assert load_scored_csv(path, PROBABILISTIC) == ds


@settings(max_examples=40, deadline=None)
@given(
    scores=st.lists(
        st.floats(min_value=-50, max_value=50, allow_nan=False), min_size=1, max_size=30
    ),
    labels=st.data(),
)
def test_round_trip_property_margin(tmp_path_factory, scores, labels):
    n = len(scores)
    predicted = labels.draw(st.lists(st.integers(-5, 5), min_size=n, max_size=n))
    truth = labels.draw(st.lists(st.integers(-5, 5), min_size=n, max_size=n))
    ds = ScoredDataset(
        ids=np.arange(n),
        scores=np.array(scores),
        predicted=np.array(predicted),
        truth=np.array(truth),
        score_kind=MARGIN,
    )
    path = tmp_path_factory.mktemp("rt") / "d.csv"
    write_scored_csv(ds, path)
    assert load_scored_csv(path, MARGIN) == ds


def make_dataset(scores, predicted, kind):
    scores = np.asarray(scores, dtype=float)
    return ScoredDataset(
        ids=np.arange(len(scores)),
        scores=scores,
        predicted=np.asarray(predicted),
        truth=None,
        score_kind=kind,
    )


def test_derive_z_margin_magnitude():
    ds = make_dataset([-1.7, 0.4], [-1, 1], MARGIN)
    assert derive_z(ds).values.tolist() == [1.7, 0.4]


def test_derive_z_binary_probability_of_predicted_class():
    # file stores p(positive)=0.3 but the predicted label is the negative class
    ds = make_dataset([0.3], [0], PROBABILISTIC)
    assert derive_z(ds).values.tolist() == [0.7]
    # enumerate the other label case: predicted positive keeps p
    ds = make_dataset([0.3], [1], PROBABILISTIC)
    assert derive_z(ds).values.tolist() == [0.7]  # max(p, 1-p) either way
    ds = make_dataset([0.8], [1], PROBABILISTIC)
    assert derive_z(ds).values.tolist() == [0.8]


def test_derive_z_binary_pm_one_labels():
    ds = make_dataset([0.2, 0.9], [-1, 1], PROBABILISTIC)
    assert derive_z(ds).values.tolist() == [0.8, 0.9]


def test_derive_z_half_score_is_fixed_point():
    for label in (0, 1):
        ds = make_dataset([0.5], [label], PROBABILISTIC)
        assert derive_z(ds).values.tolist() == [0.5]


def test_derive_z_multiclass_passthrough():
    # non-binary label alphabet: score already is the predicted-class probability
    ds = make_dataset([0.3, 0.6], [2, 3], PROBABILISTIC)
    assert derive_z(ds).values.tolist() == [0.3, 0.6]


@settings(max_examples=40, deadline=None)
@given(
    scores=st.lists(st.floats(0.0, 1.0, allow_nan=False), min_size=1, max_size=50),
    data=st.data(),
)
def test_derive_z_binary_probabilistic_at_least_half(scores, data):
    n = len(scores)
    predicted = data.draw(st.lists(st.sampled_from([0, 1]), min_size=n, max_size=n))
    ds = make_dataset(scores, predicted, PROBABILISTIC)
    z = derive_z(ds)
    assert len(z) == n
    assert z.values.min() >= 0.5
    # deterministic and order preserving
    assert np.array_equal(z.values, derive_z(ds).values)

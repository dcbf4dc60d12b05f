import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dakd.config import desk_model
from dakd.models import TeacherModel
from dakd.refinery import (PseudoLabelStore, build_pseudo_labels, min_max_normalize, moving_average,
                           read_pseudo_labels, refine, write_pseudo_labels)

from oracles import loop_min_max, loop_moving_average


def test_moving_average_examples():
    np.testing.assert_allclose(moving_average([0, 0, 3, 0, 0], 3), [0, 1, 1, 1, 0])
    np.testing.assert_allclose(moving_average([3, 0, 0], 3), [2, 1, 0])


@pytest.mark.parametrize("width", [0, 2, -1])
def test_moving_average_rejects_bad_width(width):
    with pytest.raises(ValueError):
        moving_average([1.0, 2.0, 3.0], width)


def test_moving_average_width_longer_than_sequence():
    with pytest.raises(ValueError):
        moving_average([1.0, 2.0], 3)


def test_min_max_examples():
    np.testing.assert_allclose(min_max_normalize([1, 3, 5]), [0, 0.5, 1])
    np.testing.assert_array_equal(min_max_normalize([2, 2, 2]), [0, 0, 0])
    np.testing.assert_array_equal(min_max_normalize([0.2, 0.8]), [0, 1])


def test_loop_oracles_on_random_sequences():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(1, 40))
        x = rng.uniform(size=n) if rng.uniform() < 0.9 else np.full(n, rng.uniform())
        width = int(rng.choice([w for w in (1, 3, 5, 7) if w <= n]))
        np.testing.assert_allclose(moving_average(x, width), loop_moving_average(x.tolist(), width), atol=1e-12)
        out = min_max_normalize(x)
        np.testing.assert_allclose(out, loop_min_max(x.tolist()), atol=1e-12)
        assert np.all((out >= 0) & (out <= 1))
        np.testing.assert_array_equal(moving_average(x, 1), x)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.integers(5, 40), elements=st.floats(-1e3, 1e3)), st.sampled_from([1, 3, 5]))
def test_moving_average_stays_in_range(x, width):
    out = moving_average(x, width)
    assert out.shape == x.shape
    assert out.min() >= x.min() - 1e-9 and out.max() <= x.max() + 1e-9


@settings(max_examples=50, deadline=None)
@given(st.floats(-100, 100), st.integers(1, 30))
def test_constant_preserved(c, n):
    np.testing.assert_allclose(moving_average(np.full(n, c), 1 if n < 3 else 3), c)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.integers(2, 40), elements=st.floats(-1e3, 1e3)))
def test_min_max_attains_endpoints(x):
    out = min_max_normalize(x)
    if x.max() > x.min():
        assert out.min() == 0.0 and out.max() == 1.0


@pytest.mark.parametrize("i", [0, 5, 31])
def test_one_hot_idempotent_with_unit_width(i):
    x = np.zeros(32)
    x[i] = 1.0
    np.testing.assert_array_equal(refine(refine(x, 1), 1), x)


class FixedTeacher:
    """Teacher stub returning preset scores for every anomalous video."""

    def __init__(self, row):
        self.row = np.asarray(row, dtype=float)

    def scores(self, streams):
        return np.tile(self.row, (len(streams[0]), 1))


def test_pseudo_labels_examples(small_data):
    train = small_data.split("train")
    row = np.full(32, 0.1)
    row[2] = 0.9
    store = build_pseudo_labels(FixedTeacher(row), train, width=1)
    for i, y in enumerate(train.labels):
        if y == 0:
            np.testing.assert_array_equal(store.labels[i], np.zeros(32))
        else:
            assert store.labels[i][2] == 1.0 and np.argmax(store.labels[i]) == 2
            assert store.labels[i].sum() == 1.0
    flat = build_pseudo_labels(FixedTeacher(np.full(32, 0.4)), train, width=3)
    np.testing.assert_array_equal(flat.labels, 0.0)


def test_pseudo_labels_from_real_teacher(small_data):
    train = small_data.split("train")
    teacher = TeacherModel.create(desk_model(train.stream_dims), 0)
    store = build_pseudo_labels(teacher, train)
    assert store.labels.shape == (len(train), 32)
    assert np.all((store.labels >= 0) & (store.labels <= 1))
    anom = store.labels[train.labels == 1]
    assert np.all(anom.max(axis=1) == 1.0) and np.all(anom.min(axis=1) == 0.0)


def test_missing_teacher(small_data):
    with pytest.raises(ValueError):
        build_pseudo_labels(None, small_data)


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    store = PseudoLabelStore(["a", "b"], rng.uniform(size=(2, 32)))
    path = tmp_path / "pseudo.csv"
    write_pseudo_labels(store, path, "abc123")
    lines = path.read_text().splitlines()
    assert lines[0] == "# config abc123" and lines[1] == "videoId,segmentIndex,label"
    back = read_pseudo_labels(path)
    assert back.ids == ["a", "b"]
    assert back.labels.tobytes() == store.labels.tobytes()
    np.testing.assert_array_equal(back.for_ids(["b"]), store.labels[[1]])
    with pytest.raises(KeyError):
        back.for_ids(["c"])


def test_store_rejects_out_of_range():
    with pytest.raises(ValueError):
        PseudoLabelStore(["a"], np.array([[1.5]]))


def test_missing_csv(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_pseudo_labels(tmp_path / "nope.csv")

import numpy as np
import pytest
from hypothesis import given, strategies as st

from segloss.errors import ValidationError
from segloss.field import (
    GridShape,
    LabelField,
    ProbField,
    binarize,
    foreground_fraction,
    onehot_encode,
)


def test_grid_shape_counts_elements():
    assert GridShape((4, 5, 6)).element_count == 120
    with pytest.raises(ValidationError):
        GridShape((4,))
    with pytest.raises(ValidationError):
        GridShape((0, 3))


def test_onehot_examples():
    r = onehot_encode([1, 0, 0, 1], 2)
    np.testing.assert_array_equal(r.values[:, 1], [1, 0, 0, 1])
    np.testing.assert_array_equal(r.values[:, 0], [0, 1, 1, 0])

    empty = onehot_encode([0, 0, 0], 2)
    assert empty.values[:, 1].sum() == 0


def test_onehot_rejects_out_of_range_and_names_element():
    with pytest.raises(ValidationError, match="element 0"):
        onehot_encode([2], 2)
    with pytest.raises(ValidationError, match="element 2"):
        onehot_encode([0, 1, -1], 2)


def test_onehot_keeps_grid_shape():
    grid = np.zeros((3, 4), dtype=int)
    grid[1, 2] = 1
    r = onehot_encode(grid, 2)
    assert r.shape.dims == (3, 4)
    assert r.indices()[1 * 4 + 2] == 1


@given(st.lists(st.integers(0, 4), min_size=1, max_size=60), st.integers(5, 7))
def test_onehot_decode_roundtrip(labels, classes):
    r = onehot_encode(labels, classes)
    np.testing.assert_array_equal(r.indices(), labels)
    assert np.all(r.values.sum(axis=1) == 1)


def test_label_field_invariants():
    with pytest.raises(ValidationError):
        LabelField(2, np.array([[1.0, 1.0], [0.0, 1.0]]))
    with pytest.raises(ValidationError):
        LabelField(2, np.array([[0.5, 0.5], [0.0, 1.0]]))


def test_prob_field_rejects_off_simplex_without_renormalizing():
    ProbField(1, [[0.3, 0.7 + 5e-7]])
    with pytest.raises(ValidationError, match="simplex"):
        ProbField(1, [[0.3, 0.7 + 1e-5]])
    with pytest.raises(ValidationError):
        ProbField(1, [[-0.1, 1.1]])


def test_fields_are_read_only():
    r = onehot_encode([0, 1], 2)
    with pytest.raises(ValueError):
        r.values[0, 0] = 5


@pytest.mark.parametrize("labels, expected", [
    ([1] + [0] * 499, 0.002),
    ([0] * 10, 0.0),
    ([1] * 10, 1.0),
])
def test_foreground_fraction(labels, expected):
    assert foreground_fraction(onehot_encode(labels, 2), 1) == pytest.approx(expected, abs=0)


@given(st.lists(st.integers(0, 1), min_size=1, max_size=50), st.randoms())
def test_foreground_fraction_permutation_invariant(labels, rnd):
    r = onehot_encode(labels, 2)
    order = list(range(len(labels)))
    rnd.shuffle(order)
    assert foreground_fraction(r.permuted(order)) == foreground_fraction(r)


@pytest.mark.parametrize("p_fg, expected", [
    ([0.9, 0.1], [1, 0]),
    ([0.5], [1]),
    ([0.49999], [0]),
])
def test_binarize_threshold_is_inclusive(p_fg, expected):
    p = ProbField.from_foreground(len(p_fg), p_fg)
    np.testing.assert_array_equal(binarize(p, 0.5).indices(), expected)


def test_binarize_needs_two_classes():
    p = ProbField(1, [[0.2, 0.3, 0.5]])
    with pytest.raises(ValidationError, match="2 classes"):
        binarize(p, 0.5)


@given(st.lists(st.integers(0, 1), min_size=1, max_size=80))
def test_binarize_recovers_embedded_labels(labels):
    r = onehot_encode(labels, 2)
    np.testing.assert_array_equal(binarize(r.as_probs(), 0.5).values, r.values)

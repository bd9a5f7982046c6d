import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from segloss import losses as L
from segloss.errors import ValidationError
from segloss.field import onehot_encode
from segloss.metrics import (
    dsc,
    gds,
    sensitivity_specificity,
    trace_stats,
)


def lab(xs):
    return onehot_encode(xs, 2)


def test_dsc_examples():
    a = lab([1, 1, 0, 0])
    assert dsc(a, a) == 1.0
    assert dsc(lab([1, 1, 0, 0]), lab([0, 0, 1, 1])) == 0.0
    seg = lab([1, 1, 1, 1, 1, 1, 0, 0, 0, 0])
    ref = lab([1, 1, 1, 0, 0, 0, 1, 0, 0, 0])
    assert dsc(seg, ref) == pytest.approx(0.6, abs=1e-15)


def test_dsc_empty_sets_convention():
    assert dsc(lab([0, 0]), lab([0, 0])) == 1.0


def test_dsc_shape_mismatch():
    with pytest.raises(ValidationError, match="mismatch"):
        dsc(lab([0, 1]), lab([0, 1, 1]))


def test_gds_examples():
    ref = lab([1, 0, 0, 1, 0])
    w = L.gdl_weights(ref)
    assert gds(ref, ref, w) == 1.0
    assert gds(lab([0, 1, 1, 0, 1]), ref, w) == 0.0


def test_sensitivity_specificity_examples():
    ref = lab([1, 0, 1, 0])
    assert tuple(sensitivity_specificity(ref, ref)) == (1.0, 1.0)
    sens, spec = sensitivity_specificity(lab([1, 1, 1, 1]), ref)
    assert (sens, spec) == (1.0, 0.0)
    # tp=3, fn=1, tn=5, fp=1
    seg = lab([1, 1, 1, 0, 0, 0, 0, 0, 0, 1])
    ref = lab([1, 1, 1, 1, 0, 0, 0, 0, 0, 0])
    sens, spec = sensitivity_specificity(seg, ref)
    assert sens == 0.75
    assert spec == pytest.approx(5 / 6, abs=1e-15)


def test_sensitivity_degenerate_flag():
    res = sensitivity_specificity(lab([0, 1]), lab([0, 0]))
    assert res.sensitivity == 1.0 and res.degenerate
    assert not sensitivity_specificity(lab([0, 1]), lab([0, 1])).degenerate


def test_trace_stats_examples():
    st_ = trace_stats([1, 2, 3, 4, 5], 5)
    assert (st_.median, st_.iqr) == (3.0, 2.0)
    assert trace_stats([0.4] * 10, 10).iqr == 0.0


def test_trace_stats_uses_only_the_window():
    values = np.concatenate([np.full(800, -50.0), np.arange(200, dtype=float)])
    s = trace_stats(values, 200)
    assert s.median == 99.5
    assert s.iqr == pytest.approx(np.percentile(np.arange(200), 75) - np.percentile(np.arange(200), 25))


def test_trace_stats_needs_enough_data():
    with pytest.raises(ValidationError, match="at least 200"):
        trace_stats(range(150), 200)


binary = st.lists(st.integers(0, 1), min_size=1, max_size=60)


@given(binary, st.data())
def test_dsc_symmetric(a, data):
    b = data.draw(st.lists(st.integers(0, 1), min_size=len(a), max_size=len(a)))
    assert dsc(lab(a), lab(b)) == dsc(lab(b), lab(a))


@settings(max_examples=100)
@given(binary, st.data())
def test_gds_is_one_minus_gdl(a, data):
    b = data.draw(st.lists(st.integers(0, 1), min_size=len(a), max_size=len(a)))
    seg, ref = lab(a), lab(b)
    w = L.gdl_weights(ref)
    assert gds(seg, ref, w) == pytest.approx(1.0 - L.gdl(seg.as_probs(), ref, w).value,
                                             rel=0, abs=4e-16)


@given(binary, st.data())
def test_dsc_equals_foreground_only_gds(a, data):
    b = data.draw(st.lists(st.integers(0, 1), min_size=len(a), max_size=len(a)))
    seg, ref = lab(a), lab(b)
    if not (sum(a) or sum(b)):
        return  # foreground-only GDS is 0/0 here; DSC uses its empty-set convention
    # weights must be positive, so approach (0, 1) with a vanishing background weight
    w = L.GdlWeights([1e-300, 1.0])
    assert gds(seg, ref, w) == pytest.approx(dsc(seg, ref), rel=1e-12)


@given(st.lists(st.floats(0, 1), min_size=20, max_size=40), st.lists(st.floats(-5, 5), max_size=20))
def test_trace_stats_ignores_prefix(tail, prefix):
    a = trace_stats(tail, 20)
    b = trace_stats(list(prefix) + list(tail), 20)
    assert (a.median, a.iqr) == (b.median, b.iqr)

import numpy as np
import pytest

from segloss.field import ProbField, onehot_encode


def make_pair(p_fg, r_fg):
    r = onehot_encode(np.asarray(r_fg, dtype=int), 2)
    p = ProbField.from_foreground(r.shape, p_fg)
    return p, r


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def pair():
    return make_pair

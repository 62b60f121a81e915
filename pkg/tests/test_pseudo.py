"""Positive/negative pseudo-label selection: oracles and invariants."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from utep.errors import ConfigError
from utep.pseudo import PseudoLabelSet, select_negative, select_positive


def test_positive_selection_oracle():
    g = np.array([[0.9, 0.05, 0.05]])
    np.testing.assert_array_equal(select_positive(g, 0.8), [[1.0, 0.0, 0.0]])


def test_negative_selection_oracle():
    g = np.array([[0.9, 0.05, 0.05]])
    np.testing.assert_array_equal(select_negative(g, 0.1, 0.8),
                                  [[0.0, 1.0, 1.0]])


def test_uniform_below_threshold_selects_nothing():
    g = np.full((2, 4), 0.25)
    assert select_positive(g, 0.5).sum() == 0.0


def test_boundaries_are_inclusive():
    g = np.array([[0.8, 0.1, 0.1]])
    assert select_positive(g, 0.8)[0, 0] == 1.0
    assert select_negative(g, 0.1, 0.8)[0, 1] == 1.0


def test_tiny_gamma_selects_nothing_when_probs_positive():
    g = np.array([[0.5, 0.3, 0.2]])
    assert select_negative(g, 1e-9, 0.9).sum() == 0.0


def test_threshold_validation():
    g = np.full((1, 2), 0.5)
    for bad in (0.0, 1.0, -0.1, 1.1):
        with pytest.raises(ConfigError):
            select_positive(g, bad)
    with pytest.raises(ConfigError):
        select_negative(g, 0.9, 0.9)   # gamma must stay below beta
    with pytest.raises(ConfigError):
        select_negative(g, 0.95, 0.9)


prob_rows = hnp.arrays(np.float64, st.tuples(st.integers(1, 8), st.just(5)),
                       elements=st.floats(0.001, 1.0)).map(
    lambda a: a / a.sum(axis=1, keepdims=True))


@settings(max_examples=120, deadline=None)
@given(g=prob_rows,
       beta=st.floats(0.05, 0.99, exclude_max=False),
       gamma=st.floats(0.001, 0.9))
def test_disjointness_property(g, beta, gamma):
    if gamma >= beta:
        gamma = beta / 2.0
    h = select_positive(g, beta)
    l = select_negative(g, gamma, beta)
    assert np.all(h * l == 0.0)
    assert set(np.unique(h)) <= {0.0, 1.0}
    assert set(np.unique(l)) <= {0.0, 1.0}


@settings(max_examples=120, deadline=None)
@given(g=prob_rows, beta=st.floats(0.1, 0.9))
def test_monotonicity_in_beta(g, beta):
    higher = min(0.99, beta + 0.05)
    h_low = select_positive(g, beta)
    h_high = select_positive(g, higher)
    assert np.all(h_high <= h_low)   # raising beta never adds selections


@settings(max_examples=120, deadline=None)
@given(g=prob_rows, gamma=st.floats(0.01, 0.5))
def test_monotonicity_in_gamma(g, gamma):
    lower = gamma / 2.0
    l_hi = select_negative(g, gamma, 0.95)
    l_lo = select_negative(g, lower, 0.95)
    assert np.all(l_lo <= l_hi)   # lowering gamma never adds selections


def test_at_most_one_positive_when_beta_above_half():
    rng = np.random.default_rng(0)
    g = rng.dirichlet(np.ones(6), size=200)
    h = select_positive(g, 0.55)
    assert np.all(h.sum(axis=1) <= 1.0)


def test_idempotence():
    rng = np.random.default_rng(1)
    g = rng.dirichlet(np.ones(4), size=50)
    a = select_positive(g, 0.7)
    b = select_positive(g, 0.7)
    np.testing.assert_array_equal(a, b)


def test_pseudo_label_set_build_and_rows():
    g = np.array([[0.96, 0.02, 0.02], [0.4, 0.35, 0.25]])
    ps = PseudoLabelSet.build(g, beta=0.95, gamma=0.05)
    np.testing.assert_array_equal(ps.h, [[1, 0, 0], [0, 0, 0]])
    np.testing.assert_array_equal(ps.l, [[0, 1, 1], [0, 0, 0]])
    rows = ps.rows(np.array([1.0, 0.5]))
    assert rows[0][:2] == (0, 0)          # sample id, argmax class
    assert rows[0][3] == 1 and rows[0][4] == 2   # h count, l count
    assert rows[1][3] == 0 and rows[1][4] == 0

import numpy as np
import pytest

from hetknockoffs.filter import evaluate_selection, knockoff_threshold, select


def test_hand_oracle_five_selected():
    # candidates t in {1,..,5}; at t=1: (1 + 1)/5 = 0.4 <= 0.5
    w = np.array([5.0, 4.0, 3.0, 2.0, 1.0, -1.0])
    t = knockoff_threshold(w, q=0.5, offset=1)
    assert t == 1.0
    assert select(w, 0.5, 1).selected == frozenset({0, 1, 2, 3, 4})


def test_hand_oracle_empty_selection():
    # ratios at t in {1,2,3} are all 1 > 0.5
    w = np.array([3.0, 2.0, -1.0, 1.0, -2.0])
    t = knockoff_threshold(w, q=0.5, offset=1)
    assert t == float("inf")
    assert select(w, 0.5, 1).selected == frozenset()


def test_all_positive_offset_zero_selects_all():
    w = np.array([0.3, 2.0, 0.7])
    t = knockoff_threshold(w, q=0.2, offset=0)
    assert t == 0.3
    assert select(w, 0.2, 0).selected == frozenset({0, 1, 2})


def test_all_zero_w_gives_empty_selection():
    result = select(np.zeros(6), q=0.2, offset=1)
    assert result.threshold == float("inf")
    assert result.selected == frozenset()


def test_threshold_is_a_candidate_or_inf():
    rng = np.random.default_rng(3)
    for _ in range(50):
        w = np.round(rng.standard_normal(15), 2)
        t = knockoff_threshold(w, q=0.4, offset=1)
        assert t == float("inf") or t in set(np.abs(w[w != 0.0]))


def test_monotone_in_q():
    rng = np.random.default_rng(1)
    for _ in range(25):
        w = rng.standard_normal(30)
        prev = None
        for q in (0.05, 0.1, 0.2, 0.4, 0.8):
            sel = select(w, q, 1).selected
            if prev is not None:
                assert prev <= sel
            prev = sel


def test_scale_invariance():
    rng = np.random.default_rng(2)
    w = rng.standard_normal(25)
    base = select(w, 0.3, 1).selected
    for c in (0.01, 3.0, 1e6):
        assert select(c * w, 0.3, 1).selected == base


def test_knockoff_plus_is_subset_of_plain():
    rng = np.random.default_rng(4)
    for _ in range(25):
        w = rng.standard_normal(20)
        assert select(w, 0.25, 1).selected <= select(w, 0.25, 0).selected


def test_bad_arguments():
    with pytest.raises(ValueError):
        knockoff_threshold(np.ones(3), q=0.0)
    with pytest.raises(ValueError):
        knockoff_threshold(np.ones(3), q=0.2, offset=2)


def test_evaluate_selection_exact_match():
    assert evaluate_selection({1, 2}, {1, 2}) == (0.0, 1.0)


def test_evaluate_selection_empty():
    assert evaluate_selection(set(), {1, 2}) == (0.0, 0.0)


def test_evaluate_selection_partial():
    assert evaluate_selection({1, 2}, {2, 3}) == (0.5, 0.5)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedsel.bandits.estimators import UcbScore
from fedsel.bandits.regret import RegretTracker, jain_index, record_regret, select_top


def test_select_all_when_k_large():
    assert select_top({"a": 1.0, "b": 2.0}, 5) == ["b", "a"]


def test_select_top_ordering():
    assert set(select_top({"a": 5, "b": 3, "c": 4}, 2)) == {"a", "c"}


def test_ties_go_to_smallest_ids():
    assert select_top({"d": 1, "b": 1, "c": 1, "a": 1}, 2) == ["a", "b"]


def test_select_top_uses_score_value():
    scores = {"a": UcbScore(-10.0, 1.0), "b": UcbScore(-10.0, 3.0)}
    assert select_top(scores, 1) == ["b"]


def test_select_top_empty():
    with pytest.raises(ValueError):
        select_top({}, 1)


def test_optimal_choice_has_zero_regret():
    tr = RegretTracker()
    assert tr.record({"a": -1, "b": -2, "c": -3}, ["a", "b"], 2) == 0.0


def test_worst_choice_regret_is_full_gap():
    tr = record_regret(RegretTracker(), {"a": -1, "b": -2, "c": -3, "d": -4}, ["c", "d"], 2)
    assert tr.cumulative == pytest.approx((-1 - 2) - (-3 - 4))


def test_literal_mode_uses_predictions():
    tr = RegretTracker(literal=True)
    r = tr.record({"a": -1.0, "b": -2.0}, ["a"], 1, predicted_rewards={"a": -0.5})
    assert r == pytest.approx(-0.5)
    with pytest.raises(ValueError):
        tr.record({"a": -1.0}, ["a"], 1)


def test_random_regret_exceeds_oracle():
    rng = np.random.default_rng(0)
    rand, oracle = RegretTracker(), RegretTracker()
    ids = [f"c{i}" for i in range(6)]
    for _ in range(100):
        rewards = dict(zip(ids, -rng.uniform(100, 500, size=6)))
        rand.record(rewards, list(rng.choice(ids, 2, replace=False)), 2)
        oracle.record(rewards, select_top(rewards, 2), 2)
    assert oracle.cumulative == 0.0
    assert rand.cumulative >= oracle.cumulative


@settings(max_examples=200, deadline=None)
@given(st.lists(st.lists(st.floats(-1e4, 0), min_size=4, max_size=4), min_size=1, max_size=20), st.integers(0, 2**31))
def test_pseudo_regret_non_negative_and_cumulative_monotone(rounds, seed):
    rng = np.random.default_rng(seed)
    tr = RegretTracker()
    prev = 0.0
    for vals in rounds:
        rewards = dict(zip("abcd", vals))
        k = int(rng.integers(1, 5))
        chosen = list(rng.choice(list("abcd"), k, replace=False))
        assert tr.record(rewards, chosen, k) >= 0.0
        assert tr.cumulative >= prev
        prev = tr.cumulative


def test_jain_index():
    assert jain_index([5, 5, 5, 5]) == pytest.approx(1.0)
    assert jain_index([4, 0, 0, 0]) == pytest.approx(0.25)
    assert jain_index([]) == 1.0
    assert jain_index([0, 0]) == 1.0

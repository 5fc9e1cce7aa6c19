from __future__ import annotations

import numpy as np
import pytest

from feddct.selection import (
    EmptyRound, compute_thresholds, move_tier, select_from_tier, select_participants, selection_probs,
)
from feddct.tiering import TierTable, tier


def test_move_tier_examples():
    assert move_tier(3, 0.62, 0.60, 5) == 2
    assert move_tier(1, 0.7, 0.7, 5) == 1
    assert move_tier(5, 0.5, 0.6, 5) == 5
    assert move_tier(2, 0.5, 0.6, 5) == 3
    with pytest.raises(ValueError):
        move_tier(0, 0.5, 0.4, 5)


def test_probs_and_lowest_tau():
    assert np.allclose(selection_probs([1, 1, 2]), [0.25, 0.25, 0.5])
    assert np.allclose(selection_probs([0, 0, 0, 0]), 0.25)
    chosen = select_from_tier((10, 11, 12), {10: 1, 11: 2, 12: 1}, 2, np.random.default_rng(0))
    assert chosen == [10, 12]


def test_ties_are_uniform():
    rng = np.random.default_rng(0)
    members = tuple(range(10))
    counts = np.zeros(10)
    for _ in range(10_000):
        counts[select_from_tier(members, {c: 3 for c in members}, 5, rng)] += 1
    assert np.all(np.abs(counts / 10_000 - 0.5) <= 0.02)


def test_cross_tier_size():
    table = tier({c: float(c) for c in range(50)}, 10)
    chosen = select_participants(table, 3, {c: 0 for c in range(50)}, 5, np.random.default_rng(1))
    assert sorted(chosen) == [1, 2, 3]
    assert sum(len(v) for v in chosen.values()) == 15
    for k, cs in chosen.items():
        assert set(cs) <= set(table.members(k))


def test_empty_round():
    table = TierTable(((), ()), {})
    with pytest.raises(EmptyRound):
        select_participants(table, 2, {}, 5, np.random.default_rng(0))


def test_small_tier_takes_everyone():
    table = TierTable(((1, 2), (3,)), {1: 1.0, 2: 2.0, 3: 3.0})
    assert select_participants(table, 2, {1: 0, 2: 0, 3: 0}, 5, np.random.default_rng(0)) == {1: [1, 2], 2: [3]}


def test_thresholds():
    table = TierTable(((0, 1), (2,), (3,), ()), {})
    at = {0: 8.0, 1: 12.0, 2: 30.0, 3: 7.0}
    assert compute_thresholds(table, at, 1.2, 30.0, 4) == pytest.approx([12.0, 30.0, 8.4, 30.0])
    assert len(compute_thresholds(table, at, 1.2, 30.0, 2)) == 2

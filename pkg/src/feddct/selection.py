"""Cross-tier client selection and per-tier timeout thresholds."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .tiering import TierTable


class EmptyRound(RuntimeError):
    pass


@dataclass
class SelectionState:
    num_tiers: int
    tier: int = 1
    prev_accuracy: float = 0.0
    thresholds: list[float] = field(default_factory=list)


def move_tier(t: int, acc: float, prev_acc: float, num_tiers: int) -> int:
    """Step toward faster tiers while accuracy holds, toward slower when it drops."""
    if not 1 <= t <= num_tiers:
        raise ValueError(f"tier {t} outside [1, {num_tiers}]")
    if acc >= prev_acc:
        return max(t - 1, 1)
    return min(t + 1, num_tiers)


def selection_probs(ct: Sequence[int]) -> np.ndarray:
    counts = np.asarray(ct, dtype=float)
    total = counts.sum()
    if total == 0:
        return np.full(len(counts), 1.0 / len(counts)) if len(counts) else counts
    return counts / total


def select_from_tier(
    members: Sequence[int],
    ct: Mapping[int, int],
    tau: int,
    rng: np.random.Generator,
) -> list[int]:
    """The ``tau`` members with the smallest selection probability, random tie-break."""
    if len(members) <= tau:
        return sorted(members)
    probs = selection_probs([ct[c] for c in members])
    jitter = rng.random(len(members))
    order = np.lexsort((jitter, probs))
    return sorted(members[i] for i in order[:tau])


def select_participants(
    table: TierTable,
    t: int,
    ct: Mapping[int, int],
    tau: int,
    rng: np.random.Generator,
) -> dict[int, list[int]]:
    """Participants per tier ``1..t``; empty tiers contribute nothing."""
    if t < 1 or t > table.num_tiers:
        raise ValueError(f"tier pointer {t} outside [1, {table.num_tiers}]")
    chosen = {}
    for k in range(1, t + 1):
        members = table.members(k)
        if members:
            chosen[k] = select_from_tier(members, ct, tau, rng)
    if not chosen:
        raise EmptyRound("no eligible clients in tiers 1..%d" % t)
    return chosen


def compute_thresholds(
    table: TierTable,
    at: Mapping[int, float],
    beta: float,
    omega: float,
    t: int,
) -> list[float]:
    """Timeout per tier ``1..t``: mean average time times ``beta``, capped at ``omega``.

    Empty tiers get ``omega``.
    """
    out = []
    for k in range(1, t + 1):
        members = table.members(k)
        if not members:
            out.append(omega)
            continue
        mean_at = sum(at[c] for c in members) / len(members)
        out.append(min(mean_at * beta, omega))
    return out

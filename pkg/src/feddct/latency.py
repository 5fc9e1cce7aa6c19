"""Per-round client training time: group Gaussian delay plus injected failures."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import SimConfig, derive_stream

MIN_TRAINING_TIME_S = 0.1


class IndivisibleGroups(ValueError):
    pass


class TrainingTime(NamedTuple):
    seconds: float
    base: float
    straggled: bool


def assign_groups(num_clients: int, num_groups: int, rng: np.random.Generator) -> np.ndarray:
    """Random equal-size split of clients into latency groups."""
    if num_groups < 1 or num_clients % num_groups != 0:
        raise IndivisibleGroups(f"{num_clients} clients cannot be split into {num_groups} equal groups")
    return rng.permutation(np.repeat(np.arange(num_groups), num_clients // num_groups))


@dataclass(frozen=True)
class LatencyModel:
    """Draws training times keyed by ``(client, round, attempt)``.

    ``attempt`` separates the draws that share a round: profiling waves use
    round 0 with attempts ``0..kappa-1``; normal training uses attempt 0 and
    re-evaluation after a timeout in round r uses attempts ``1..kappa``.
    Because every draw has its own substream, strategies that query in a
    different order still see identical times.
    """

    seed: int
    groups: np.ndarray
    group_means: tuple[float, ...] = (5.0, 10.0, 15.0, 20.0, 25.0)
    stddev: float = math.sqrt(2.0)
    straggler_prob: float = 0.0
    straggler_range: tuple[float, float] = (30.0, 60.0)

    @classmethod
    def from_config(cls, cfg: SimConfig) -> LatencyModel:
        groups = assign_groups(cfg.num_clients, len(cfg.base_delay_means_s), derive_stream(cfg.seed, "latency", 0))
        return cls(
            seed=cfg.seed,
            groups=groups,
            group_means=tuple(cfg.base_delay_means_s),
            stddev=cfg.base_delay_stddev_s,
            straggler_prob=cfg.mu,
            straggler_range=tuple(cfg.straggler_delay_range_s),
        )

    def draw(self, client_id: int, round: int, attempt: int = 0) -> TrainingTime:
        mean = self.group_means[self.groups[client_id]]
        base_rng = derive_stream(self.seed, "latency", 1, client_id, round, attempt)
        base = max(MIN_TRAINING_TIME_S, float(base_rng.normal(mean, self.stddev)))
        strag_rng = derive_stream(self.seed, "straggler", client_id, round, attempt)
        straggled = bool(strag_rng.random() < self.straggler_prob)
        extra = float(strag_rng.uniform(*self.straggler_range)) if straggled else 0.0
        return TrainingTime(base + extra, base, straggled)

    def sample_training_time(self, client_id: int, round: int, attempt: int = 0) -> float:
        return self.draw(client_id, round, attempt).seconds

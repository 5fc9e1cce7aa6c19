"""Client profiling, tier construction and the straggler re-evaluation lifecycle."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .latency import LatencyModel


class ClientState(str, enum.Enum):
    ACTIVE = "active"
    UNDER_EVALUATION = "under_evaluation"
    EXCLUDED = "excluded"


@dataclass
class ClientProfile:
    client_id: int
    latency_group: int
    at: float = 0.0
    ct: int = 0
    state: ClientState = ClientState.ACTIVE
    eval_remaining: int = 0
    eval_times: list[float] = field(default_factory=list)

    @property
    def active(self) -> bool:
        return self.state is ClientState.ACTIVE


@dataclass(frozen=True)
class TierTable:
    """Clients grouped into tiers, fastest first.

    ``tiers[0]`` is tier 1. ``built_from`` keeps the average times the table
    was sorted by.
    """

    tiers: tuple[tuple[int, ...], ...]
    built_from: Mapping[int, float]

    @property
    def num_tiers(self) -> int:
        return len(self.tiers)

    def members(self, tier: int) -> tuple[int, ...]:
        """Clients of 1-based ``tier``."""
        return self.tiers[tier - 1]

    def tier_of(self) -> dict[int, int]:
        return {c: k + 1 for k, tier in enumerate(self.tiers) for c in tier}


def profile_clients(
    client_ids: Iterable[int],
    kappa: int,
    latency: LatencyModel,
    omega: float,
) -> dict[int, ClientProfile]:
    """Average ``kappa`` profiling draws per client; drop those at or above ``omega``."""
    if kappa < 1:
        raise ValueError("kappa must be >= 1")
    profiles = {}
    for c in client_ids:
        times = [latency.sample_training_time(c, 0, j) for j in range(kappa)]
        at = sum(times) / kappa
        state = ClientState.EXCLUDED if at >= omega else ClientState.ACTIVE
        profiles[c] = ClientProfile(c, int(latency.groups[c]), at=at, ct=0, state=state)
    return profiles


def profiling_duration(client_ids: Iterable[int], kappa: int, latency: LatencyModel) -> float:
    """Virtual time of the profiling phase: each wave waits for its slowest client."""
    ids = list(client_ids)
    return sum(max(latency.sample_training_time(c, 0, j) for c in ids) for j in range(kappa))


def tier(at: Mapping[int, float], m: int, num_tiers: Optional[int] = None) -> TierTable:
    """Sort clients ascending by average time and cut into chunks of ``m``.

    Ties keep client-id order. When the client count is not a multiple of
    ``m`` the last non-empty tier is short; with ``num_tiers`` given, trailing
    tiers may be empty so the tier count never changes.
    """
    if m < 1:
        raise ValueError("m must be positive")
    ordered = sorted(at.items(), key=lambda item: (item[1], item[0]))
    n = len(ordered)
    if num_tiers is None:
        num_tiers = max(1, math.ceil(n / m))
    if n > num_tiers * m:
        raise ValueError(f"{n} clients do not fit into {num_tiers} tiers of {m}")
    tiers: list[list[int]] = [[] for _ in range(num_tiers)]
    for i, (c, _) in enumerate(ordered):
        tiers[i // m].append(c)
    return TierTable(tuple(tuple(t) for t in tiers), dict(at))


def tier_active(profiles: Mapping[int, ClientProfile], m: int, num_tiers: int) -> TierTable:
    return tier({c: p.at for c, p in profiles.items() if p.active}, m, num_tiers)


def update_profile(profile: ClientProfile, t_train: float) -> ClientProfile:
    """Fold one successful round's time into the running average."""
    profile.at = (profile.at * profile.ct + t_train) / (profile.ct + 1)
    profile.ct += 1
    return profile


def begin_reevaluation(profile: ClientProfile, kappa: int) -> ClientProfile:
    profile.state = ClientState.UNDER_EVALUATION
    profile.eval_remaining = kappa
    profile.eval_times = []
    return profile


def record_evaluation(profile: ClientProfile, t_train: float, omega: float, exclude: bool = True) -> ClientProfile:
    """Log one evaluation training; after the last one re-admit the client.

    A finished evaluation averaging at or above ``omega`` excludes the client
    when ``exclude`` is set; otherwise it stays under evaluation with its
    average updated and the caller schedules another pass.
    """
    if profile.state is not ClientState.UNDER_EVALUATION:
        raise ValueError(f"client {profile.client_id} is not under evaluation")
    profile.eval_times.append(t_train)
    profile.eval_remaining -= 1
    if profile.eval_remaining == 0:
        profile.at = sum(profile.eval_times) / len(profile.eval_times)
        profile.eval_times = []
        if profile.at < omega:
            profile.state = ClientState.ACTIVE
        elif exclude:
            profile.state = ClientState.EXCLUDED
    return profile


def evaluation_times(
    latency: LatencyModel, client_id: int, round: int, kappa: int, first_attempt: int = 1,
) -> list[float]:
    """Draws for one evaluation pass of a client that timed out in ``round``."""
    return [latency.sample_training_time(client_id, round, first_attempt + j) for j in range(kappa)]


def is_ascending(table: TierTable) -> bool:
    at = table.built_from
    flat = [at[c] for t in table.tiers for c in t]
    return bool(np.all(np.diff(flat) >= 0)) if len(flat) > 1 else True

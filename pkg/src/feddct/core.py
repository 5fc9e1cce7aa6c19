"""Shared configuration, validation and seeded random substreams."""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Union

import numpy as np


class Strategy(str, enum.Enum):
    FEDDCT = "FedDCT"
    FEDAVG = "FedAvg"
    TIFL = "TiFL"
    FEDASYNC = "FedAsync"


IID = "iid"

STREAM_NAMES = ("partition", "latency", "straggler", "selection", "model_init", "batch_order")


class ConfigError(ValueError):
    """A configuration field violates its constraint."""

    def __init__(self, field: str, reason: str) -> None:
        super().__init__(f"{field}: {reason}")
        self.field = field
        self.reason = reason


class UnknownStream(KeyError):
    pass


@dataclass(frozen=True)
class SimConfig:
    strategy: Strategy = Strategy.FEDDCT
    num_clients: int = 50
    num_tiers: int = 5
    tau: int = 5
    beta: float = 1.2
    kappa: int = 1
    omega_s: float = 30.0
    mu: float = 0.1
    noniid_fraction: Union[float, str] = 0.7
    base_delay_means_s: tuple[float, ...] = (5.0, 10.0, 15.0, 20.0, 25.0)
    base_delay_stddev_s: float = math.sqrt(2.0)
    straggler_delay_range_s: tuple[float, float] = (30.0, 60.0)
    rounds: int = 300
    target_accuracy: float = 0.8
    learning_rate: float = 0.001
    batch_size: int = 10
    local_epochs: int = 1
    seed: int = 0

    @property
    def tier_size(self) -> int:
        """Clients per tier (``m = |C| / M``)."""
        return self.num_clients // self.num_tiers

    @property
    def is_iid(self) -> bool:
        return self.noniid_fraction == IID

    def replace(self, **changes: Any) -> SimConfig:
        return validate(dataclasses.replace(self, **changes))

    def to_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        out["strategy"] = self.strategy.value
        out["base_delay_means_s"] = list(self.base_delay_means_s)
        out["straggler_delay_range_s"] = list(self.straggler_delay_range_s)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def digest(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> SimConfig:
        if not isinstance(raw, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        for key in raw:
            if key not in known:
                raise ConfigError(key, "unknown key")
        kwargs = dict(raw)
        if "strategy" in kwargs:
            try:
                kwargs["strategy"] = Strategy(kwargs["strategy"])
            except ValueError:
                names = ", ".join(s.value for s in Strategy)
                raise ConfigError("strategy", f"must be one of {names}") from None
        for key in ("base_delay_means_s", "straggler_delay_range_s"):
            if key in kwargs:
                if not isinstance(kwargs[key], (list, tuple)):
                    raise ConfigError(key, "must be a list of numbers")
                kwargs[key] = tuple(kwargs[key])
        return validate(cls(**kwargs))


def _is_int(value: Any) -> bool:
    return isinstance(value, (int, np.integer)) and not isinstance(value, bool)


def _is_real(value: Any) -> bool:
    return (isinstance(value, (int, float, np.integer, np.floating))
            and not isinstance(value, bool) and math.isfinite(value))


def _positive_int(cfg: SimConfig, name: str) -> None:
    value = getattr(cfg, name)
    if not _is_int(value) or value < 1:
        raise ConfigError(name, "must be a positive integer")


def validate(cfg: SimConfig) -> SimConfig:
    """Return ``cfg`` unchanged if every constraint holds, else raise ConfigError."""
    if not isinstance(cfg.strategy, Strategy):
        raise ConfigError("strategy", "must be a Strategy")
    for name in ("num_clients", "num_tiers", "tau", "kappa", "rounds", "batch_size", "local_epochs"):
        _positive_int(cfg, name)
    if cfg.num_clients % cfg.num_tiers != 0:
        raise ConfigError("num_clients", f"not divisible by num_tiers={cfg.num_tiers}")
    if cfg.tau > cfg.tier_size:
        raise ConfigError("tau", f"exceeds tier size m={cfg.tier_size}")
    if not _is_real(cfg.beta) or cfg.beta <= 1:
        raise ConfigError("beta", "must be a real number > 1")
    if not _is_real(cfg.omega_s) or cfg.omega_s <= 0:
        raise ConfigError("omega_s", "must be > 0 seconds")
    if not _is_real(cfg.mu) or not 0 <= cfg.mu <= 1:
        raise ConfigError("mu", "must lie in [0, 1]")

    means = cfg.base_delay_means_s
    if len(means) == 0 or not all(_is_real(v) and v > 0 for v in means):
        raise ConfigError("base_delay_means_s", "must be a non-empty list of positive seconds")
    if cfg.num_clients % len(means) != 0:
        raise ConfigError("base_delay_means_s", "num_clients not divisible by number of latency groups")
    if not _is_real(cfg.base_delay_stddev_s) or cfg.base_delay_stddev_s < 0:
        raise ConfigError("base_delay_stddev_s", "must be >= 0")
    rng = cfg.straggler_delay_range_s
    if len(rng) != 2 or not all(_is_real(v) and v >= 0 for v in rng):
        raise ConfigError("straggler_delay_range_s", "must be [lo, hi] with non-negative seconds")
    if rng[0] > rng[1]:
        raise ConfigError("straggler_delay_range_s", "lo exceeds hi")

    frac = cfg.noniid_fraction
    if frac != IID:
        if not _is_real(frac) or not 0 < frac <= 1:
            raise ConfigError("noniid_fraction", 'must be "iid" or a number in (0, 1]')
    if not _is_real(cfg.target_accuracy) or not 0 < cfg.target_accuracy <= 1:
        raise ConfigError("target_accuracy", "must lie in (0, 1]")
    if not _is_real(cfg.learning_rate) or cfg.learning_rate < 0:
        raise ConfigError("learning_rate", "must be >= 0")
    if not _is_int(cfg.seed) or not 0 <= cfg.seed < 2**64:
        raise ConfigError("seed", "must be an unsigned 64-bit integer")
    return cfg


def load_config(path: str | Path) -> SimConfig:
    """Read a JSON config; missing keys take their defaults."""
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<root>", f"invalid JSON: {exc}") from None
    try:
        return SimConfig.from_dict(raw)
    except TypeError as exc:
        raise ConfigError("<root>", str(exc)) from None


def derive_stream(seed: int, name: str, *key: int) -> np.random.Generator:
    """Generator whose sequence depends only on ``(seed, name, *key)``.

    Extra integer keys carve independent substreams, e.g. one per
    ``(client_id, round)`` so that different strategies consuming draws in
    different orders still observe identical values.
    """
    try:
        stream_id = STREAM_NAMES.index(name)
    except ValueError:
        raise UnknownStream(name) from None
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(stream_id, *map(int, key)))
    return np.random.Generator(np.random.PCG64(seq))


@dataclass(frozen=True)
class RngStreams:
    """Named deterministic substreams for one run."""

    seed: int
    names: tuple[str, ...] = field(default=STREAM_NAMES)

    def __getattr__(self, name: str) -> Any:
        # attribute access shortcut: streams.latency(client, round)
        if name in STREAM_NAMES:
            return lambda *key: derive_stream(self.seed, name, *key)
        raise AttributeError(name)

    def get(self, name: str, *key: int) -> np.random.Generator:
        return derive_stream(self.seed, name, *key)

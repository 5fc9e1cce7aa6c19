"""Virtual-time orchestration of FedDCT and the FedAvg, TiFL and FedAsync baselines."""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping, Optional, Sequence

import numpy as np

from . import dataset as ds
from .core import SimConfig, Strategy, derive_stream
from .latency import LatencyModel
from .model import ModelState, aggregate, evaluate, fedasync_merge, init_model, staleness_weight, train_client
from .selection import EmptyRound, compute_thresholds, move_tier, select_participants
from .tiering import (
    ClientProfile,
    ClientState,
    TierTable,
    begin_reevaluation,
    evaluation_times,
    profile_clients,
    profiling_duration,
    record_evaluation,
    tier_active,
    update_profile,
)

logger = logging.getLogger(__name__)

# event kinds, in tie-break order
REEVALUATION = 0
COMPLETION = 1


@dataclass(order=True)
class Event:
    time: float
    kind: int
    client_id: int
    payload: object = field(default=None, compare=False)


class VirtualClock:
    """Simulated seconds plus a time-ordered event queue."""

    def __init__(self, start: float = 0.0) -> None:
        self.now = start
        self._queue: list[Event] = []
        self._last_fired = start

    def advance(self, dt: float) -> float:
        if dt < 0:
            raise ValueError("virtual time cannot go backwards")
        self.now += dt
        return self.now

    def advance_to(self, t: float) -> float:
        # assign rather than add the difference: now + (t - now) can overshoot t
        if t < self.now:
            raise ValueError("virtual time cannot go backwards")
        self.now = t
        return self.now

    def schedule(self, time: float, kind: int, client_id: int, payload: object = None) -> None:
        # Due events are fired lazily, so a handler may chain a follow-up that
        # is already due; it only must not precede what has fired.
        if time < self._last_fired:
            raise ValueError(f"event at {time} precedes already fired events ({self._last_fired})")
        heapq.heappush(self._queue, Event(time, kind, client_id, payload))

    def pop_due(self) -> Iterator[Event]:
        """Yield events with ``time <= now`` in firing order, including ones scheduled meanwhile."""
        while self._queue and self._queue[0].time <= self.now:
            ev = heapq.heappop(self._queue)
            self._last_fired = ev.time
            yield ev

    def pop_next(self) -> Event:
        ev = heapq.heappop(self._queue)
        self.advance_to(ev.time)
        self._last_fired = ev.time
        return ev

    def __len__(self) -> int:
        return len(self._queue)


@dataclass(frozen=True)
class RoundReport:
    round: int
    virtual_time_s: float
    strategy: str
    selected_tier: int
    participants: tuple[int, ...]
    timed_out: tuple[int, ...]
    dmax_per_tier: tuple[float, ...]
    accuracy: float
    round_duration_s: float

    @property
    def completed(self) -> tuple[int, ...]:
        dropped = set(self.timed_out)
        return tuple(c for c in self.participants if c not in dropped)

    @property
    def num_selected(self) -> int:
        return len(self.participants)

    @property
    def num_completed(self) -> int:
        return len(self.participants) - len(self.timed_out)

    @property
    def num_timed_out(self) -> int:
        return len(self.timed_out)


@dataclass(frozen=True)
class SimOptions:
    """Knobs outside the JSON config: data shape and baseline details."""

    num_classes: int = ds.NUM_CLASSES
    num_features: int = ds.NUM_FEATURES
    samples_per_class: int = ds.SAMPLES_PER_CLASS
    test_per_class: int = ds.TEST_PER_CLASS
    class_radius: float = ds.CLASS_RADIUS
    charge_profiling: bool = True
    fedasync_alpha: float = 0.6
    fedasync_report_every: Optional[int] = None
    tifl_credits: Optional[int] = None
    exclude_after_reevaluation: bool = False


@dataclass
class Environment:
    """Everything shared across strategies for one seed."""

    config: SimConfig
    options: SimOptions
    dataset: ds.Dataset
    shards: list[ds.ClientShard]
    latency: LatencyModel
    init: ModelState

    @classmethod
    def build(cls, config: SimConfig, options: Optional[SimOptions] = None) -> Environment:
        opts = options or SimOptions()
        seed = config.seed
        data = ds.generate_synthetic(
            opts.num_classes, opts.num_features, opts.samples_per_class,
            derive_stream(seed, "partition", 0),
            test_per_class=opts.test_per_class, radius=opts.class_radius,
        )
        shards = ds.partition(data, config.num_clients, config.noniid_fraction, derive_stream(seed, "partition", 1))
        latency = LatencyModel.from_config(config)
        init = init_model(opts.num_classes, opts.num_features, derive_stream(seed, "model_init"))
        return cls(config, opts, data, shards, latency, init)

    def train(self, model: ModelState, client_id: int, round: int) -> ModelState:
        cfg = self.config
        shard = self.shards[client_id]
        rng = derive_stream(cfg.seed, "batch_order", client_id, round)
        return train_client(model, shard.x, shard.y, cfg.local_epochs, cfg.batch_size,
                            cfg.learning_rate, rng, client_id=client_id, round_produced=round)

    def aggregate(self, updates: Sequence[ModelState], round: int) -> ModelState:
        ordered = sorted(updates, key=lambda u: u.client_id)
        return aggregate([(u, self.shards[u.client_id].num_samples) for u in ordered], round_produced=round)

    def accuracy(self, model: ModelState) -> float:
        return evaluate(model, self.dataset.x_test, self.dataset.y_test)

    def start_time(self) -> float:
        cfg = self.config
        if not self.options.charge_profiling:
            return 0.0
        return profiling_duration(range(cfg.num_clients), cfg.kappa, self.latency)


@dataclass
class RunResult:
    reports: list[RoundReport]
    model: ModelState
    profiles: dict[int, ClientProfile] = field(default_factory=dict)
    tier_tables: list[TierTable] = field(default_factory=list)


def round_duration(
    times_per_tier: Mapping[int, Sequence[float]],
    dmax: Sequence[float],
    omega: float,
) -> float:
    """Slowest selected client per tier, capped by the tier timeout and ``omega``; max over tiers.

    ``times_per_tier`` is keyed by 1-based tier index; ``dmax[k-1]`` is tier k's timeout.
    """
    if not times_per_tier:
        raise ValueError("no selected tiers")
    return max(min(max(times), dmax[k - 1], omega) for k, times in times_per_tier.items())


def _feddct(env: Environment, keep_tables: bool = False) -> RunResult:
    cfg = env.config
    m, num_tiers = cfg.tier_size, cfg.num_tiers
    clock = VirtualClock(env.start_time())
    profiles = profile_clients(range(cfg.num_clients), cfg.kappa, env.latency, cfg.omega_s)
    model = env.init
    prev_acc = env.accuracy(model)
    t = 1
    reports, tables = [], []

    for r in range(1, cfg.rounds + 1):
        for ev in clock.pop_due():
            p = profiles[ev.client_id]
            round_key, evals = ev.payload
            for st in evals:
                record_evaluation(p, st, cfg.omega_s, exclude=env.options.exclude_after_reevaluation)
            if p.state is ClientState.EXCLUDED:
                logger.debug("round %d: client %d excluded after re-evaluation (at=%.1f)", r, p.client_id, p.at)
            elif p.state is ClientState.UNDER_EVALUATION and p.eval_remaining == 0:
                # another pass; its draws continue the attempt numbering of the same round
                begin_reevaluation(p, cfg.kappa)
                nxt = (round_key[0], round_key[1] + cfg.kappa)
                more = evaluation_times(env.latency, p.client_id, nxt[0], cfg.kappa, first_attempt=nxt[1])
                clock.schedule(ev.time + sum(more), REEVALUATION, p.client_id, (nxt, more))

        table = tier_active(profiles, m, num_tiers)
        if keep_tables:
            tables.append(table)
        ct = {c: p.ct for c, p in profiles.items()}
        try:
            chosen = select_participants(table, t, ct, cfg.tau, derive_stream(cfg.seed, "selection", r))
        except EmptyRound:
            logger.info("round %d: no eligible clients, waiting %.1fs", r, cfg.omega_s)
            clock.advance(cfg.omega_s)
            reports.append(RoundReport(r, clock.now, cfg.strategy.value, t, (), (), (), prev_acc, cfg.omega_s))
            t = move_tier(t, prev_acc, prev_acc, num_tiers)
            continue

        at = {c: p.at for c, p in profiles.items()}
        dmax = compute_thresholds(table, at, cfg.beta, cfg.omega_s, t)
        times = {c: env.latency.sample_training_time(c, r) for k in chosen for c in chosen[k]}
        duration = round_duration({k: [times[c] for c in cs] for k, cs in chosen.items()}, dmax, cfg.omega_s)
        end = clock.now + duration

        completed, timed_out = [], []
        for k, cs in chosen.items():
            for c in cs:
                if times[c] >= dmax[k - 1]:
                    timed_out.append(c)
                    begin_reevaluation(profiles[c], cfg.kappa)
                    evals = evaluation_times(env.latency, c, r, cfg.kappa)
                    clock.schedule(end + sum(evals), REEVALUATION, c, ((r, 1), evals))
                else:
                    completed.append(c)
                    update_profile(profiles[c], times[c])

        if completed:
            updates = [env.train(model, c, r) for c in sorted(completed)]
            model = env.aggregate(updates, r)
            acc = env.accuracy(model)
        else:
            logger.info("round %d: every participant timed out; model carried over", r)
            acc = prev_acc

        clock.advance(duration)
        participants = tuple(sorted(times))
        reports.append(RoundReport(r, clock.now, cfg.strategy.value, t, participants,
                                   tuple(sorted(timed_out)), tuple(dmax), acc, duration))
        t = move_tier(t, acc, prev_acc, num_tiers)
        prev_acc = acc

    return RunResult(reports, model, profiles, tables)


def _fedavg(env: Environment) -> RunResult:
    cfg = env.config
    clock = VirtualClock(env.start_time())
    model = env.init
    reports = []
    for r in range(1, cfg.rounds + 1):
        rng = derive_stream(cfg.seed, "selection", r)
        chosen = sorted(int(c) for c in rng.choice(cfg.num_clients, size=cfg.tau, replace=False))
        times = [env.latency.sample_training_time(c, r) for c in chosen]
        duration = max(times)
        model = env.aggregate([env.train(model, c, r) for c in chosen], r)
        clock.advance(duration)
        reports.append(RoundReport(r, clock.now, cfg.strategy.value, 0, tuple(chosen), (), (),
                                   env.accuracy(model), duration))
    return RunResult(reports, model)


def _tier_accuracy(env: Environment, model: ModelState, table: TierTable) -> list[float]:
    out = []
    for members in table.tiers:
        if not members:
            out.append(1.0)
            continue
        x = np.concatenate([env.shards[c].x for c in members])
        y = np.concatenate([env.shards[c].y for c in members])
        out.append(evaluate(model, x, y))
    return out


def tifl_tier_probs(tier_acc: Sequence[float], eligible: Sequence[int]) -> np.ndarray:
    """Rank-based weights over ``eligible`` tiers: the least accurate tier weighs most."""
    ranked = sorted(eligible, key=lambda k: (tier_acc[k], k))
    weights = np.zeros(len(tier_acc))
    n = len(ranked)
    for rank, k in enumerate(ranked):
        weights[k] = n - rank
    return weights / weights.sum()


def _tifl(env: Environment) -> RunResult:
    cfg = env.config
    clock = VirtualClock(env.start_time())
    profiles = profile_clients(range(cfg.num_clients), cfg.kappa, env.latency, cfg.omega_s)
    table = tier_active(profiles, cfg.tier_size, cfg.num_tiers)
    full_credits = env.options.tifl_credits or max(1, math.ceil(cfg.rounds / cfg.num_tiers))
    credits = [full_credits] * table.num_tiers
    model = env.init
    tier_acc = _tier_accuracy(env, model, table)
    prev_acc = env.accuracy(model)
    reports = []

    for r in range(1, cfg.rounds + 1):
        nonempty = [k for k in range(table.num_tiers) if table.tiers[k]]
        if not nonempty:
            clock.advance(cfg.omega_s)
            reports.append(RoundReport(r, clock.now, cfg.strategy.value, 0, (), (), (), prev_acc, cfg.omega_s))
            continue
        eligible = [k for k in nonempty if credits[k] > 0]
        if not eligible:
            credits = [full_credits] * table.num_tiers
            eligible = nonempty
        rng = derive_stream(cfg.seed, "selection", r)
        k = int(rng.choice(table.num_tiers, p=tifl_tier_probs(tier_acc, eligible)))
        credits[k] -= 1
        members = table.tiers[k]
        if len(members) <= cfg.tau:
            chosen = sorted(members)
        else:
            chosen = sorted(int(c) for c in rng.choice(members, size=cfg.tau, replace=False))

        times = {c: env.latency.sample_training_time(c, r) for c in chosen}
        duration = min(max(times.values()), cfg.omega_s)
        timed_out = [c for c in chosen if times[c] >= cfg.omega_s]
        completed = [c for c in chosen if times[c] < cfg.omega_s]
        if completed:
            model = env.aggregate([env.train(model, c, r) for c in completed], r)
            acc = env.accuracy(model)
            tier_acc = _tier_accuracy(env, model, table)
        else:
            acc = prev_acc
        clock.advance(duration)
        reports.append(RoundReport(r, clock.now, cfg.strategy.value, k + 1, tuple(chosen), tuple(timed_out),
                                   (cfg.omega_s,), acc, duration))
        prev_acc = acc
    return RunResult(reports, model, profiles, [table])


MergeHook = Callable[[int, int, float], None]


def _fedasync(env: Environment, on_merge: Optional[MergeHook] = None) -> RunResult:
    cfg = env.config
    opts = env.options
    every = opts.fedasync_report_every or cfg.tau
    clock = VirtualClock(env.start_time())
    model = env.init
    version = 0
    jobs = {}  # client -> (job index, start version, snapshot)

    def dispatch(c: int, job: int) -> None:
        jobs[c] = (job, version, model)
        clock.schedule(clock.now + env.latency.sample_training_time(c, job), COMPLETION, c)

    for c in range(cfg.num_clients):
        dispatch(c, 1)

    reports = []
    window: list[int] = []
    last_report = clock.now
    while len(reports) < cfg.rounds:
        ev = clock.pop_next()
        c = ev.client_id
        job, start_version, snapshot = jobs[c]
        update = env.train(snapshot, c, job)
        staleness = version - start_version
        model = fedasync_merge(model, update, staleness, opts.fedasync_alpha, round_produced=version + 1)
        version += 1
        if on_merge is not None:
            on_merge(c, staleness, staleness_weight(staleness, opts.fedasync_alpha))
        window.append(c)
        if version % every == 0:
            reports.append(RoundReport(len(reports) + 1, clock.now, cfg.strategy.value, 0, tuple(window), (), (),
                                       env.accuracy(model), clock.now - last_report))
            last_report = clock.now
            window = []
        dispatch(c, job + 1)
    return RunResult(reports, model)


def simulate(
    config: SimConfig,
    options: Optional[SimOptions] = None,
    env: Optional[Environment] = None,
    **kwargs,
) -> RunResult:
    """Run ``config.strategy`` end to end on a freshly built (or given) environment."""
    if env is None:
        env = Environment.build(config, options)
    elif env.config is not config:
        env = Environment(config, env.options, env.dataset, env.shards, env.latency, env.init)
    runners = {
        Strategy.FEDDCT: _feddct,
        Strategy.FEDAVG: _fedavg,
        Strategy.TIFL: _tifl,
        Strategy.FEDASYNC: _fedasync,
    }
    return runners[config.strategy](env, **kwargs)


def run_feddct(config: SimConfig, options: Optional[SimOptions] = None) -> list[RoundReport]:
    return simulate(config.replace(strategy=Strategy.FEDDCT), options).reports


def run_fedavg(config: SimConfig, options: Optional[SimOptions] = None) -> list[RoundReport]:
    return simulate(config.replace(strategy=Strategy.FEDAVG), options).reports


def run_tifl(config: SimConfig, options: Optional[SimOptions] = None) -> list[RoundReport]:
    return simulate(config.replace(strategy=Strategy.TIFL), options).reports


def run_fedasync(config: SimConfig, options: Optional[SimOptions] = None) -> list[RoundReport]:
    return simulate(config.replace(strategy=Strategy.FEDASYNC), options).reports

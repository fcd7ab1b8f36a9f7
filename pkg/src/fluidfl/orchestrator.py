"""Synchronous federated control loop with straggler-adaptive dropout.

Each round: identify stragglers from profiled full-model-equivalent times,
pick a sub-model rate per straggler nearest the inverse of its speedup, train
(non-stragglers always on the full model), aggregate with example-count
weighting, score neuron invariance from the non-straggler deltas, and grow
per-layer drop thresholds while they yield too few candidates. The first
`warmup` rounds train full models everywhere to seed profiles and the initial
thresholds. Round wall-time is the synchronous barrier: the slowest client
plus a fixed server-side calibration cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, Partition
from .dropout import (NeuronMask, extract, kept_count, mask_invariant,
                      mask_ordered, mask_random, merge)
from .errors import ConfigError, MeasurementError, MetricError, RateError
from .invariance import (CalibrationState, grow_threshold, init_threshold,
                         invariant_fraction, median_scores, model_scores,
                         vote_candidates)
from .nn import Model
from .simclient import (ClientReport, ClientSpec, evaluate, local_train,
                        simulate_epoch_time)

STRATEGIES = ("invariant", "random", "ordered", "none")

SLOWEST_ONE = "slowest_one"
SLOWEST_PCT = "slowest_pct"
CLUSTER = "cluster"

# rng stream tags so every draw is keyed by (seed, tag, client, round)
_TRAIN, _TIME, _MASK = 1, 2, 3


@dataclass
class StragglerPolicy:
    kind: str = SLOWEST_ONE
    pct: float = 0.2
    clusters: int = 4

    @classmethod
    def parse(cls, text: str) -> "StragglerPolicy":
        """Parse 'slowest_one', 'slowest_pct:0.2', 'cluster:4' or 'cluster:4:0.3'."""
        parts = text.strip().split(":")
        kind = parts[0]
        if kind == SLOWEST_ONE and len(parts) == 1:
            return cls(SLOWEST_ONE)
        if kind == SLOWEST_PCT and len(parts) == 2:
            pct = float(parts[1])
            if not (0.0 < pct < 1.0):
                raise ConfigError(f"straggler fraction must lie in (0,1): {text}")
            return cls(SLOWEST_PCT, pct=pct)
        if kind == CLUSTER and len(parts) in (2, 3):
            clusters = int(parts[1])
            pct = float(parts[2]) if len(parts) == 3 else 0.2
            if clusters < 1 or not (0.0 < pct < 1.0):
                raise ConfigError(f"bad cluster policy: {text}")
            return cls(CLUSTER, pct=pct, clusters=clusters)
        raise ConfigError(f"unknown straggler policy: {text}")


@dataclass
class ClientProfile:
    id: int
    last_time: float = 0.0
    full_time: float = 0.0   # measured time divided by the rate it ran at
    straggler: bool = False
    rate: float = 1.0
    cluster: int | None = None


@dataclass
class RoundRecord:
    round: int
    times: list[float]
    stragglers: list[int]
    rates: dict[int, float]
    thresholds: list[float]
    accuracy: float
    loss: float
    invariant_fraction: float
    calibration_time: float
    round_time: float
    cumulative_time: float
    scores: list[np.ndarray] = field(repr=False, default_factory=list)


@dataclass
class RunResult:
    records: list[RoundRecord]
    model: Model

    @property
    def final_accuracy(self) -> float:
        return self.records[-1].accuracy

    @property
    def total_time(self) -> float:
        return self.records[-1].cumulative_time


def identify_stragglers(times, policy: StragglerPolicy):
    """Straggler ids plus the target time they should be tuned towards.

    slowest_one flags the slowest client and targets the next slowest;
    slowest_pct flags the slowest ceil(pct * C) and targets the slowest
    remaining client; cluster uses the slowest_pct pool. Ties break by id.
    """
    times = np.asarray(times, dtype=np.float64)
    if times.size < 2:
        raise ConfigError("need at least two clients to identify stragglers")
    if np.any(times <= 0):
        raise MeasurementError("client times must be positive")
    order = np.lexsort((np.arange(times.size), -times))
    if policy.kind == SLOWEST_ONE:
        count = 1
    elif policy.kind in (SLOWEST_PCT, CLUSTER):
        count = min(times.size - 1, math.ceil(policy.pct * times.size))
    else:
        raise ConfigError(f"unknown straggler policy kind {policy.kind!r}")
    stragglers = [int(i) for i in order[:count]]
    t_target = float(times[order[count]])
    return stragglers, t_target


def compute_speedup(t_straggler: float, t_target: float) -> float:
    if t_straggler <= 0 or t_target <= 0:
        raise MeasurementError("times must be positive")
    return t_straggler / t_target


def select_rate(speedup: float, available) -> float:
    """Rate nearest to 1/speedup; ties go to the larger sub-model."""
    rates = sorted(float(r) for r in available)
    if not rates:
        raise ConfigError("available rate set is empty")
    for r in rates:
        if not (0.0 < r <= 1.0):
            raise RateError(f"rate {r} outside (0, 1]")
    target = 1.0 / speedup
    best = rates[0]
    for r in rates[1:]:
        if abs(r - target) <= abs(best - target):
            best = r
    return best


def assign_rates(times, stragglers, t_target: float, rate_set,
                 policy: StragglerPolicy, forced_rate: float | None = None):
    """Per-straggler sub-model rate (and cluster index under the cluster
    policy). Straggler order is slowest-first, as from identify_stragglers."""
    rates: dict[int, float] = {}
    clusters: dict[int, int] = {}
    if forced_rate is not None:
        for c in stragglers:
            rates[c] = forced_rate
        return rates, clusters
    if policy.kind == CLUSTER and stragglers:
        groups = np.array_split(np.array(stragglers), policy.clusters)
        for g, group in enumerate(groups):
            if group.size == 0:
                continue
            slowest = max(float(times[c]) for c in group)
            rate = select_rate(compute_speedup(slowest, t_target), rate_set)
            for c in group:
                rates[int(c)] = rate
                clusters[int(c)] = g
        return rates, clusters
    for c in stragglers:
        rates[c] = select_rate(compute_speedup(float(times[c]), t_target),
                               rate_set)
    return rates, clusters


def weighted_eval(reports: list[ClientReport]):
    """Example-count-weighted mean accuracy and loss over client reports."""
    total = sum(r.eval_count for r in reports)
    if total <= 0:
        raise MetricError("no evaluation examples across clients")
    acc = sum(r.eval_accuracy * r.eval_count for r in reports) / total
    loss = sum(r.eval_loss * r.eval_count for r in reports) / total
    return acc, loss


def calibration_overhead(record: RoundRecord) -> float:
    """Server calibration time as a fraction of the round wall-time."""
    if record.round_time <= 0:
        return 0.0
    return record.calibration_time / record.round_time


@dataclass
class RunSettings:
    strategy: str = "invariant"
    rounds: int = 60
    local_epochs: int = 1
    lr: float = 0.08
    batch_size: int = 16
    seed: int = 0
    rate_set: tuple = (0.5, 0.65, 0.75, 0.85, 0.95, 1.0)
    forced_rate: float | None = None
    policy: StragglerPolicy = field(default_factory=StragglerPolicy)
    warmup: int = 3
    persistence: int = 2
    growth_factor: float = 1.25
    score_delta: float = 1e-8
    cadence: int = 1
    overhead_pct: float = 0.01
    fixed_threshold: float | None = None
    keep_scores: bool = True

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}")
        if self.warmup < 1:
            raise ConfigError("warmup must be >= 1")
        if self.rounds < self.warmup + 1:
            raise ConfigError("rounds must be at least warmup + 1")
        if self.cadence < 1:
            raise ConfigError("cadence must be >= 1")
        for r in self.rate_set:
            if not (0.0 < r <= 1.0):
                raise ConfigError(f"rate {r} outside (0, 1]")
        if self.forced_rate is not None and not (0.0 < self.forced_rate <= 1.0):
            raise ConfigError(f"forced rate {self.forced_rate} outside (0, 1]")


class Simulation:
    """One seeded federated run over a fixed fleet and partition."""

    def __init__(self, model: Model, dataset: Dataset, partition: Partition,
                 specs: list[ClientSpec], settings: RunSettings):
        if len(specs) != partition.clients:
            raise ConfigError("one ClientSpec per partition client required")
        if len(specs) < 2:
            raise ConfigError("need at least two clients")
        self.model = model.copy()
        self.dataset = dataset
        self.partition = partition
        self.specs = specs
        self.settings = settings
        # strategy "none" is the no-dropout baseline: same control loop with
        # every straggler pinned to the full model
        self._rate_override = 1.0 if settings.strategy == "none" else \
            settings.forced_rate
        self.state = CalibrationState.for_model(model)
        if settings.fixed_threshold is not None:
            self.state.thresholds = [float(settings.fixed_threshold)] * len(
                self.state.thresholds)
            self.state.initialized = True
        self.profiles = [ClientProfile(spec.id) for spec in specs]
        self.candidates: list[list[int]] = [[] for _ in self.state.thresholds]
        self.last_medians: list[np.ndarray] | None = None
        self._warmup_scores: list[list[np.ndarray]] = []
        self._stragglers: list[int] = []
        self._rates: dict[int, float] = {}
        self._t_target: float | None = None
        self._cumulative = 0.0

    def _rng(self, tag: int, client: int, rnd: int) -> np.random.Generator:
        return np.random.default_rng([self.settings.seed, tag, client, rnd])

    def _build_mask(self, rate: float, client: int, rnd: int) -> NeuronMask:
        strategy = self.settings.strategy
        if strategy == "random":
            return mask_random(self.model, rate,
                               [self.settings.seed, _MASK, client, rnd])
        if strategy == "ordered":
            return mask_ordered(self.model, rate)
        return mask_invariant(self.model, rate, self.candidates,
                              self.last_medians)

    def _recalibrate(self, rnd: int) -> None:
        times = [p.full_time for p in self.profiles]
        stragglers, t_target = identify_stragglers(times, self.settings.policy)
        rates, clusters = assign_rates(times, stragglers, t_target,
                                       self.settings.rate_set,
                                       self.settings.policy,
                                       self._rate_override)
        self._stragglers, self._t_target, self._rates = stragglers, t_target, rates
        for p in self.profiles:
            p.straggler = p.id in rates
            p.rate = rates.get(p.id, 1.0)
            p.cluster = clusters.get(p.id)

    def run_round(self, rnd: int) -> RoundRecord:
        s = self.settings
        progress = rnd / s.rounds
        if rnd >= s.warmup and (rnd - s.warmup) % s.cadence == 0:
            self._recalibrate(rnd)

        reports: list[ClientReport] = []
        for c, spec in enumerate(self.specs):
            rate = self._rates.get(c, 1.0)
            train_idx = self.partition.train_indices[c]
            if rate >= 1.0:
                start, mask, used_rate = self.model.copy(), None, 1.0
            else:
                mask = self._build_mask(rate, c, rnd)
                start, used_rate = extract(self.model, mask).model, rate
            trained = local_train(start, self.dataset.features[train_idx],
                                  self.dataset.labels[train_idx],
                                  s.local_epochs, s.lr, s.batch_size,
                                  self._rng(_TRAIN, c, rnd))
            client_time = s.local_epochs * simulate_epoch_time(
                spec, used_rate, progress, self._rng(_TIME, c, rnd))
            reports.append(ClientReport(
                id=c, epoch_time=client_time, params=trained, mask=mask,
                train_count=int(train_idx.size)))
            # profile the full-model-equivalent time so the straggler flag
            # does not oscillate once mitigation kicks in
            self.profiles[c].last_time = client_time
            self.profiles[c].full_time = client_time / used_rate

        previous = self.model
        self.model = merge(previous, [(r.params, r.train_count, r.mask)
                                      for r in reports])

        # invariance bookkeeping, from full-model (non-straggler) deltas only
        straggler_set = set(self._stragglers)
        per_client = []
        for r in reports:
            if r.id not in straggler_set and r.mask is None:
                per_client.append(model_scores(previous, r.params, s.score_delta))
        if per_client:
            self.last_medians = median_scores(per_client)
            if rnd < s.warmup and s.fixed_threshold is None:
                self._warmup_scores.append(self.last_medians)
                if rnd == s.warmup - 1:
                    self.state.thresholds = init_threshold(self._warmup_scores)
                    self.state.initialized = True
            if self.state.initialized:
                self.candidates = vote_candidates(per_client, self.state,
                                                  s.persistence)
                if s.fixed_threshold is None:
                    hidden = [layer.out_neurons for layer in self.model.layers[:-1]]
                    min_rate = min(self._rates.values()) if self._rates else 1.0
                    required = [n - kept_count(min_rate, n) for n in hidden]
                    grow_threshold(self.state, required,
                                   [len(c) for c in self.candidates],
                                   s.growth_factor)

        for r in reports:
            idx = self.partition.eval_indices[r.id]
            r.eval_accuracy, r.eval_loss = evaluate(
                self.model, self.dataset.features[idx], self.dataset.labels[idx])
            r.eval_count = int(idx.size)
        accuracy, loss = weighted_eval(reports)

        times = [r.epoch_time for r in reports]
        calibration_time = s.overhead_pct * float(np.mean(times))
        round_time = float(np.max(times)) + calibration_time
        self._cumulative += round_time
        keep = s.keep_scores and self.last_medians is not None
        return RoundRecord(
            round=rnd,
            times=times,
            stragglers=list(self._stragglers),
            rates=dict(self._rates),
            thresholds=list(self.state.thresholds),
            accuracy=accuracy,
            loss=loss,
            invariant_fraction=invariant_fraction(self.last_medians or [],
                                                  self.state.thresholds),
            calibration_time=calibration_time,
            round_time=round_time,
            cumulative_time=self._cumulative,
            scores=list(self.last_medians) if keep else [],
        )

    def run(self) -> RunResult:
        records = [self.run_round(rnd) for rnd in range(self.settings.rounds)]
        return RunResult(records, self.model)

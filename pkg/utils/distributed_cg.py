"""
Distributed continuous greedy over a communication graph.

Each agent keeps a sparse information set {strategy: probability} standing for its local
copy of the membership vector. A round is two barrier-separated phases:

1. ascent: every agent samples K_i sets from its own information set, estimates the
   gradient on its own block, and adds 1/T to its kappa_i best strategies;
2. consensus: agents exchange information sets with their neighbours and keep the
   keywise maximum, once (default) or repeated `consensus_rounds` times.

States are double buffered, so results are identical whatever order agents run in.
"""
import logging
from concurrent.futures import Executor
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .config import get_enumeration_guard, get_tolerance
from .errors import ConfigError, InvariantViolation, ProtocolViolation
from .matroid_graph import AgentPartition, CommGraph, in_polytope
from .oracle_core import ValueOracle, multilinear_exact
from .sampled_gradient import Phase, draw_samples, estimate_gradient, substream

logger = logging.getLogger(__name__)


class InformationSet:
    """Immutable sparse membership vector; zero entries are never stored"""

    __slots__ = ('_entries',)

    def __init__(self, entries: Optional[Mapping[int, float]] = None, tol: Optional[float] = None):
        tol = get_tolerance() if tol is None else tol
        clean = {}
        for p, alpha in (entries or {}).items():
            p, alpha = int(p), float(alpha)
            if p < 1:
                raise ProtocolViolation(f"strategy {p} is not a valid identifier")
            if alpha < 0.0 or alpha > 1.0 + tol:
                raise ProtocolViolation(f"probability {alpha} for strategy {p} outside [0, 1]")
            if alpha > 0.0:
                clean[p] = min(alpha, 1.0)
        self._entries = dict(sorted(clean.items()))

    @classmethod
    def from_vector(cls, x) -> 'InformationSet':
        x = np.asarray(x, dtype=np.float64)
        return cls({int(k) + 1: float(x[k]) for k in np.flatnonzero(x)})

    def to_vector(self, n: int) -> np.ndarray:
        x = np.zeros(n, dtype=np.float64)
        for p, alpha in self._entries.items():
            if p > n:
                raise ProtocolViolation(f"strategy {p} outside 1..{n}")
            x[p - 1] = alpha
        return x

    def get(self, p: int, default: float = 0.0) -> float:
        return self._entries.get(p, default)

    def items(self):
        return self._entries.items()

    def keys(self):
        return self._entries.keys()

    def restricted(self, block: Iterable[int]) -> Dict[int, float]:
        return {p: self._entries[p] for p in block if p in self._entries}

    def block_sum(self, block: Iterable[int]) -> float:
        return float(sum(self._entries.get(p, 0.0) for p in block))

    def __iter__(self) -> Iterator[int]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, p) -> bool:
        return p in self._entries

    def __eq__(self, other) -> bool:
        if not isinstance(other, InformationSet):
            return NotImplemented
        return self._entries == other._entries

    def __hash__(self):
        return hash(tuple(self._entries.items()))

    def __repr__(self) -> str:
        body = ', '.join(f"{p}: {a:.6g}" for p, a in self._entries.items())
        return f"InformationSet({{{body}}})"


def oplus(info: InformationSet, additions: Iterable[Tuple[int, float]], tol: Optional[float] = None) -> InformationSet:
    """Add probability mass: existing entries accumulate, new ones are inserted"""
    tol = get_tolerance() if tol is None else tol
    entries = dict(info.items())
    for p, alpha in additions:
        if alpha <= 0.0:
            raise ProtocolViolation(f"oplus needs positive increments, got {alpha} for strategy {p}")
        value = entries.get(p, 0.0) + alpha
        if value > 1.0 + tol:
            raise ProtocolViolation(f"strategy {p} probability would reach {value}")
        entries[p] = min(value, 1.0)
    return InformationSet(entries, tol=tol)


def max_merge(sets: Sequence[InformationSet]) -> InformationSet:
    """Keywise maximum over a nonempty collection"""
    if not sets:
        raise ProtocolViolation("max_merge needs at least one information set")
    merged: Dict[int, float] = {}
    for info in sets:
        for p, alpha in info.items():
            if alpha > merged.get(p, 0.0):
                merged[p] = alpha
    return InformationSet(merged)


@dataclass(frozen=True)
class RoundConfig:
    """
    T: horizon; samples: one K for all agents or a per-agent sequence; consensus_rounds:
    an int or 'diam' for the graph diameter; seed and trial select the random substreams.
    """
    T: int
    samples: Union[int, Tuple[int, ...]] = 1000
    consensus_rounds: Union[int, str] = 1
    seed: int = 0
    trial: int = 0

    def __post_init__(self):
        if self.T < 1:
            raise ConfigError(f"T must be >= 1, got {self.T}")
        samples = self.samples
        if isinstance(samples, (list, tuple)):
            samples = tuple(int(k) for k in samples)
            if any(k < 1 for k in samples):
                raise ConfigError("every sample count must be >= 1")
            object.__setattr__(self, 'samples', samples)
        elif int(samples) < 1:
            raise ConfigError("sample count must be >= 1")
        rounds = self.consensus_rounds
        if rounds != 'diam' and (not isinstance(rounds, int) or rounds < 1):
            raise ConfigError(f"consensus_rounds must be a positive int or 'diam', got {rounds!r}")

    def samples_for(self, agent: int) -> int:
        if isinstance(self.samples, tuple):
            if not 1 <= agent <= len(self.samples):
                raise ConfigError(f"no sample count configured for agent {agent}")
            return self.samples[agent - 1]
        return int(self.samples)

    def sample_counts(self, agent_count: int) -> Tuple[int, ...]:
        return tuple(self.samples_for(i) for i in range(1, agent_count + 1))

    def rounds_for(self, graph: CommGraph) -> int:
        if self.consensus_rounds == 'diam':
            return max(1, graph.diameter)
        return int(self.consensus_rounds)


@dataclass(frozen=True)
class AgentState:
    agent_id: int
    info_set: InformationSet
    block: range
    budget: int
    seed: int = 0
    trial: int = 0

    def __post_init__(self):
        if self.budget > len(self.block):
            raise ConfigError(f"agent {self.agent_id} budget {self.budget} exceeds block size {len(self.block)}")

    def rng(self, round_index: int) -> np.random.Generator:
        return substream(self.seed, self.trial, self.agent_id, round_index, Phase.SAMPLE)


def select_top(weights: np.ndarray, block: range, budget: int) -> Tuple[int, ...]:
    """kappa largest entries of the block; ties go to the smaller strategy identifier"""
    ranked = sorted(block, key=lambda p: (-weights[p - 1], p))
    return tuple(sorted(ranked[:budget]))


def _ascend(agent: AgentState, f: ValueOracle, cfg: RoundConfig, round_index: int) -> Tuple[InformationSet, Tuple[int, ...]]:
    if not 0 <= round_index < cfg.T:
        raise ConfigError(f"round {round_index} outside 0..{cfg.T - 1}")
    x = agent.info_set.to_vector(f.n)
    batch = draw_samples(x, cfg.samples_for(agent.agent_id), agent.rng(round_index),
                         seed_trace=f"{cfg.seed}/{cfg.trial}/{agent.agent_id}/{round_index}")
    estimate = estimate_gradient(f, x, batch, support=agent.block)
    chosen = select_top(estimate.values, agent.block, agent.budget)
    step = 1.0 / cfg.T
    return oplus(agent.info_set, [(p, step) for p in chosen]), chosen


def local_ascent_step(agent: AgentState, f: ValueOracle, cfg: RoundConfig, round_index: int = 0) -> InformationSet:
    """Propagated information set F_i^-(t+1) after one sampled greedy step"""
    return _ascend(agent, f, cfg, round_index)[0]


def _consensus(states: Mapping[int, InformationSet], graph: CommGraph, rounds: int) -> Tuple[Dict[int, InformationSet], int]:
    if rounds < 1:
        raise ConfigError(f"consensus needs rounds >= 1, got {rounds}")
    current = dict(states)
    if set(current) != set(graph.agents):
        raise ConfigError("need exactly one information set per agent")
    sent = 0
    for _ in range(rounds):
        nxt = {}
        for i in graph.agents:
            neighbourhood = [current[i]] + [current[j] for j in sorted(graph.neighbors(i))]
            nxt[i] = max_merge(neighbourhood)
            sent += len(current[i]) * len(graph.neighbors(i))
        current = nxt
    return current, sent


def consensus_round(states: Mapping[int, InformationSet], graph: CommGraph, rounds: int = 1) -> Dict[int, InformationSet]:
    """Synchronous max-consensus repeated `rounds` times"""
    return _consensus(states, graph, rounds)[0]


def aggregate_vector(states: Mapping[int, InformationSet], partition: AgentPartition,
                     tol: Optional[float] = None) -> np.ndarray:
    """
    x-bar assembled from every agent's own block, checked against the keywise
    maximum over all agents; a mismatch means the protocol broke block ownership.
    """
    tol = get_tolerance() if tol is None else tol
    own = np.zeros(partition.n, dtype=np.float64)
    for agent in partition.agents:
        own[partition.block_slice(agent)] = states[agent].to_vector(partition.n)[partition.block_slice(agent)]
    keywise = max_merge([states[a] for a in partition.agents]).to_vector(partition.n)
    gap = float(np.max(np.abs(own - keywise))) if partition.n else 0.0
    if gap > tol:
        raise InvariantViolation(f"own-block aggregate differs from keywise max by {gap}")
    return own


@dataclass
class RoundTrace:
    round: int
    aggregate: np.ndarray
    block_sums: Tuple[float, ...]
    disagreement: Tuple[float, ...]
    selected: Dict[int, Tuple[int, ...]]
    local_feasible: bool
    entries_sent: int
    value: Optional[float] = None
    local_sets: Dict[int, InformationSet] = field(default_factory=dict, repr=False)

    def summary(self) -> Dict[str, object]:
        return {
            'round': self.round,
            'block_sums': list(self.block_sums),
            'max_disagreement': max(self.disagreement),
            'local_feasible': self.local_feasible,
            'entries_sent': self.entries_sent,
            'value': self.value,
        }


@dataclass
class DistributedRun:
    final_sets: Dict[int, InformationSet]
    partition: AgentPartition
    consensus_rounds: int
    oracle_calls: int
    trace: List[RoundTrace] = field(default_factory=list)

    def aggregate(self) -> np.ndarray:
        return aggregate_vector(self.final_sets, self.partition)


def run_distributed_cg(f: ValueOracle, partition: AgentPartition, graph: CommGraph, cfg: RoundConfig,
                       trace: bool = True, track_value: bool = False,
                       executor: Optional[Executor] = None) -> DistributedRun:
    """
    Run T rounds of ascent + consensus and return the final information sets.

    With `trace`, every round records the aggregate vector, block sums, per-agent
    disagreement, the selections, the message volume and every agent's information
    set; `track_value` also records the exact F(x-bar) when the ground set is small
    enough to enumerate. Agents' ascent steps run on `executor` when one is given.
    """
    if f.n != partition.n:
        raise ConfigError(f"utility has {f.n} strategies, partition has {partition.n}")
    if graph.agent_count != partition.agent_count:
        raise ConfigError(f"graph has {graph.agent_count} agents, partition has {partition.agent_count}")
    tol = get_tolerance()
    rounds = cfg.rounds_for(graph)
    kappa = partition.total_budget
    track_value = track_value and f.n <= get_enumeration_guard()
    start_calls = f.eval_counter
    excluded_calls = 0

    logger.info("distributed run: n=%d agents=%d T=%d consensus_rounds=%d seed=%d trial=%d",
                partition.n, partition.agent_count, cfg.T, rounds, cfg.seed, cfg.trial)

    sets = {i: InformationSet() for i in partition.agents}
    history: List[RoundTrace] = []
    for t in range(cfg.T):
        agents = [AgentState(i, sets[i], partition.block(i), partition.budget(i), cfg.seed, cfg.trial)
                  for i in partition.agents]
        if executor is not None:
            results = list(executor.map(lambda a: _ascend(a, f, cfg, t), agents))
        else:
            results = [_ascend(a, f, cfg, t) for a in agents]
        propagated = {a.agent_id: res[0] for a, res in zip(agents, results)}
        selected = {a.agent_id: res[1] for a, res in zip(agents, results)}
        sets, sent = _consensus(propagated, graph, rounds)

        if trace:
            xbar = aggregate_vector(sets, partition)
            locals_ = {i: sets[i].to_vector(partition.n) for i in partition.agents}
            value = None
            if track_value:
                before = f.eval_counter
                value = multilinear_exact(f, xbar)
                excluded_calls += f.eval_counter - before
            history.append(RoundTrace(
                round=t + 1,
                aggregate=xbar,
                block_sums=tuple(float(xbar[partition.block_slice(i)].sum()) for i in partition.agents),
                disagreement=tuple(float((xbar - locals_[i]).sum()) / kappa for i in partition.agents),
                selected=selected,
                local_feasible=all(in_polytope(partition, v, tol) for v in locals_.values()),
                entries_sent=sent,
                value=value,
                local_sets=dict(sets),
            ))
            logger.debug("round %d: selected=%s entries_sent=%d", t + 1, selected, sent)

    for i in partition.agents:
        own = sets[i].block_sum(partition.block(i))
        if abs(own - partition.budget(i)) > tol:
            raise InvariantViolation(f"agent {i} ends with own-block sum {own}, expected {partition.budget(i)}")

    return DistributedRun(
        final_sets=sets,
        partition=partition,
        consensus_rounds=rounds,
        oracle_calls=f.eval_counter - start_calls - excluded_calls,
        trace=history,
    )


__all__ = [
    'InformationSet', 'oplus', 'max_merge', 'RoundConfig', 'AgentState', 'select_top',
    'local_ascent_step', 'consensus_round', 'aggregate_vector', 'RoundTrace', 'DistributedRun',
    'run_distributed_cg'
]

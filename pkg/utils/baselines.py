"""
Reference solvers: exhaustive brute force, centralized sampled continuous greedy and
the sequential greedy that walks the agents along a visit sequence.
"""
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import get_combination_guard
from .distributed_cg import InformationSet, RoundConfig, oplus, select_top
from .errors import ConfigError, GuardExceededError, InvariantViolation
from .matroid_graph import AgentPartition, CommGraph, is_independent
from .oracle_core import ValueOracle, marginal_gain
from .pipage import round_membership
from .sampled_gradient import Phase, draw_samples, estimate_gradient, substream

logger = logging.getLogger(__name__)

_BATCH_ROWS = 4096


@dataclass(frozen=True)
class VisitSequence:
    """Route of agents for the sequential greedy; revisits are allowed"""
    agents: Tuple[int, ...]
    name: str = ''

    def __post_init__(self):
        agents = tuple(int(a) for a in self.agents)
        if not agents:
            raise ConfigError("visit sequence is empty")
        object.__setattr__(self, 'agents', agents)

    def validate(self, partition: AgentPartition, graph: Optional[CommGraph] = None) -> 'VisitSequence':
        if set(self.agents) != set(partition.agents):
            missing = sorted(set(partition.agents) - set(self.agents))
            raise ConfigError(f"visit sequence {self.label} does not cover agents {missing or 'exactly'}")
        if graph is not None:
            for u, v in zip(self.agents, self.agents[1:]):
                if v not in graph.neighbors(u):
                    raise ConfigError(f"visit sequence {self.label} steps from {u} to non-neighbour {v}")
        return self

    @property
    def label(self) -> str:
        return self.name or '->'.join(str(a) for a in self.agents)


def ring_visit_sequences(agent_count: int) -> Dict[str, VisitSequence]:
    """
    Six routes around a ring: three clockwise starting at agents 1, 2, 3 (a-c) and three
    counter-clockwise starting at N, N-1, N-2 (d-f).
    """
    if agent_count < 3:
        raise ConfigError("ring visit sequences need at least 3 agents")
    n = agent_count

    def clockwise(start):
        return tuple((start - 1 + k) % n + 1 for k in range(n))

    def counter(start):
        return tuple((start - 1 - k) % n + 1 for k in range(n))

    routes = [clockwise(1), clockwise(2), clockwise(3), counter(n), counter(n - 1), counter(n - 2)]
    return {letter: VisitSequence(route, name=f"SEQ({letter})") for letter, route in zip('abcdef', routes)}


def combination_count(partition: AgentPartition) -> int:
    return math.prod(math.comb(size, kappa) for size, kappa in zip(partition.block_sizes, partition.budgets))


def brute_force_opt(f: ValueOracle, partition: AgentPartition,
                    guard: Optional[int] = None) -> Tuple[frozenset, float]:
    """
    Best combination of per-block kappa_i-subsets. Combinations are enumerated in
    lexicographic order and the first maximum wins.
    """
    guard = get_combination_guard() if guard is None else guard
    total = combination_count(partition)
    if total > guard:
        raise GuardExceededError(f"brute force over {total} combinations exceeds the guard {guard}")
    if f.n != partition.n:
        raise ConfigError(f"utility has {f.n} strategies, partition has {partition.n}")

    per_block = [list(itertools.combinations(partition.block(i), partition.budget(i))) for i in partition.agents]
    combos = itertools.product(*per_block)
    best_value, best_set = -math.inf, None
    while True:
        chunk = list(itertools.islice(combos, _BATCH_ROWS))
        if not chunk:
            break
        rows = np.zeros((len(chunk), f.n), dtype=bool)
        for k, combo in enumerate(chunk):
            rows[k, [p - 1 for part in combo for p in part]] = True
        values = f.evaluate_batch(rows)
        k = int(np.argmax(values))
        if values[k] > best_value:
            best_value = float(values[k])
            best_set = frozenset(p for part in chunk[k] for p in part)
    logger.info("brute force: %d combinations, optimum %.6g", total, best_value)
    return best_set, best_value


def sequential_greedy(f: ValueOracle, partition: AgentPartition, seq: VisitSequence,
                      graph: Optional[CommGraph] = None) -> frozenset:
    """
    Agents act in route order; on its first visit each agent adds its kappa_i best
    strategies one at a time by marginal gain over everything chosen so far.
    """
    seq.validate(partition, graph)
    chosen: set = set()
    acted: set = set()
    for agent in seq.agents:
        if agent in acted:
            continue
        acted.add(agent)
        block = partition.block(agent)
        for _ in range(partition.budget(agent)):
            best_p, best_gain = None, -math.inf
            for p in block:
                if p in chosen:
                    continue
                gain = marginal_gain(f, p, chosen)
                if gain > best_gain:
                    best_p, best_gain = p, gain
            chosen.add(best_p)
    result = frozenset(chosen)
    if not is_independent(partition, result):
        raise InvariantViolation(f"sequential greedy produced a dependent set {sorted(result)}")
    return result


@dataclass
class CentralizedRun:
    trajectory: List[np.ndarray]
    final: np.ndarray
    selected: frozenset
    oracle_calls: int
    choices: List[Dict[int, Tuple[int, ...]]] = field(default_factory=list)


def centralized_cg(f: ValueOracle, partition: AgentPartition, cfg: RoundConfig) -> CentralizedRun:
    """
    Single-authority continuous greedy followed by Pipage rounding of every block.

    Block i's gradient in round t is estimated from K_i sets drawn with agent i's sample
    substream, so a distributed run whose consensus reaches every agent each round
    follows the same trajectory.
    """
    if f.n != partition.n:
        raise ConfigError(f"utility has {f.n} strategies, partition has {partition.n}")
    start_calls = f.eval_counter
    step = 1.0 / cfg.T
    state = InformationSet()
    trajectory, choices = [], []
    for t in range(cfg.T):
        x = state.to_vector(f.n)
        chosen = {}
        for i in partition.agents:
            rng = substream(cfg.seed, cfg.trial, i, t, Phase.SAMPLE)
            batch = draw_samples(x, cfg.samples_for(i), rng, seed_trace=f"{cfg.seed}/{cfg.trial}/{i}/{t}")
            estimate = estimate_gradient(f, x, batch, support=partition.block(i))
            chosen[i] = select_top(estimate.values, partition.block(i), partition.budget(i))
        for i in partition.agents:
            state = oplus(state, [(p, step) for p in chosen[i]])
        trajectory.append(state.to_vector(f.n))
        choices.append(chosen)

    final = state.to_vector(f.n)
    calls = f.eval_counter - start_calls
    selected = round_membership(final, partition,
                                lambda i: substream(cfg.seed, cfg.trial, i, 0, Phase.ROUNDING))
    logger.info("centralized continuous greedy: T=%d, %d oracle calls", cfg.T, calls)
    return CentralizedRun(trajectory=trajectory, final=final, selected=selected, oracle_calls=calls, choices=choices)


__all__ = [
    'VisitSequence', 'ring_visit_sequences', 'combination_count', 'brute_force_opt',
    'sequential_greedy', 'CentralizedRun', 'centralized_cg'
]

"""
Partition matroid (set and polytope views) and the agents' communication graph.

Strategies are the integers 1..n, sorted agent-wise: agent 1 owns the first block,
agent 2 the next one, and so on. Agents are numbered 1..N. A membership vector is a
float64 numpy array whose index p-1 holds the probability of strategy p.
"""
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, List, Sequence, Tuple

import networkx as nx
import numpy as np

from .config import get_tolerance
from .errors import ConfigError, GraphError, MembershipRangeError, StrategyRangeError

logger = logging.getLogger(__name__)


def as_membership_vector(values, n: int = None) -> np.ndarray:
    """Validate and copy a membership vector into a float64 array"""
    x = np.array(values, dtype=np.float64)
    if x.ndim != 1:
        raise MembershipRangeError(f"membership vector must be one dimensional, got shape {x.shape}")
    if n is not None and x.shape[0] != n:
        raise MembershipRangeError(f"membership vector has length {x.shape[0]}, expected {n}")
    if not np.all(np.isfinite(x)) or np.any(x < 0.0) or np.any(x > 1.0):
        raise MembershipRangeError("membership vector coordinates must lie in [0, 1]")
    return x


def indicator(subset: Iterable[int], n: int) -> np.ndarray:
    """Indicator vector 1_R of a strategy subset"""
    x = np.zeros(n, dtype=np.float64)
    for p in subset:
        if not 1 <= p <= n:
            raise StrategyRangeError(f"strategy {p} outside 1..{n}")
        x[p - 1] = 1.0
    return x


@dataclass(frozen=True)
class AgentPartition:
    """Per-agent contiguous strategy blocks and their budgets"""
    block_sizes: Tuple[int, ...]
    budgets: Tuple[int, ...]
    blocks: Tuple[range, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.block_sizes)
        budgets = tuple(int(k) for k in self.budgets)
        if not sizes:
            raise ConfigError("partition needs at least one agent")
        if len(sizes) != len(budgets):
            raise ConfigError(f"{len(sizes)} blocks but {len(budgets)} budgets")
        for i, (size, kappa) in enumerate(zip(sizes, budgets), start=1):
            if size < 1:
                raise ConfigError(f"agent {i} has an empty block")
            if not 1 <= kappa <= size:
                raise ConfigError(f"agent {i} budget {kappa} outside 1..{size}")
        blocks = []
        start = 1
        for size in sizes:
            blocks.append(range(start, start + size))
            start += size
        object.__setattr__(self, 'block_sizes', sizes)
        object.__setattr__(self, 'budgets', budgets)
        object.__setattr__(self, 'blocks', tuple(blocks))

    @property
    def n(self) -> int:
        return self.blocks[-1].stop - 1

    @property
    def agent_count(self) -> int:
        return len(self.block_sizes)

    @property
    def agents(self) -> range:
        return range(1, self.agent_count + 1)

    @property
    def total_budget(self) -> int:
        """kappa = sum of all agents' budgets"""
        return sum(self.budgets)

    def block(self, agent: int) -> range:
        self._check_agent(agent)
        return self.blocks[agent - 1]

    def budget(self, agent: int) -> int:
        self._check_agent(agent)
        return self.budgets[agent - 1]

    def agent_of(self, p: int) -> int:
        if not 1 <= p <= self.n:
            raise StrategyRangeError(f"strategy {p} outside 1..{self.n}")
        for i, block in enumerate(self.blocks, start=1):
            if p in block:
                return i
        raise StrategyRangeError(f"strategy {p} not in any block")  # unreachable

    def block_slice(self, agent: int) -> slice:
        block = self.block(agent)
        return slice(block.start - 1, block.stop - 1)

    def _check_agent(self, agent: int):
        if not 1 <= agent <= self.agent_count:
            raise ConfigError(f"agent {agent} outside 1..{self.agent_count}")


def is_independent(partition: AgentPartition, subset: Iterable[int]) -> bool:
    """True iff |R ∩ P_i| <= kappa_i for every agent"""
    counts = [0] * partition.agent_count
    for p in set(subset):
        counts[partition.agent_of(p) - 1] += 1
    return all(c <= k for c, k in zip(counts, partition.budgets))


def in_polytope(partition: AgentPartition, x, tol: float = None) -> bool:
    """Membership in the partition matroid polytope"""
    tol = get_tolerance() if tol is None else tol
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (partition.n,):
        return False
    if np.any(x < -tol) or np.any(x > 1.0 + tol):
        return False
    for agent in partition.agents:
        if x[partition.block_slice(agent)].sum() > partition.budget(agent) + tol:
            return False
    return True


def is_vertex(partition: AgentPartition, x, tol: float = None) -> bool:
    """Integral point of the polytope"""
    tol = get_tolerance() if tol is None else tol
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (partition.n,):
        return False
    integral = np.minimum(np.abs(x), np.abs(1.0 - x)) <= tol
    if not np.all(integral):
        return False
    return in_polytope(partition, np.clip(np.round(x), 0.0, 1.0), tol)


class CommGraph:
    """Undirected connected communication graph over agents 1..N"""

    def __init__(self, agent_count: int, edges: Iterable[Tuple[int, int]] = ()):
        if agent_count < 1:
            raise GraphError("graph needs at least one agent")
        graph = nx.Graph()
        graph.add_nodes_from(range(1, agent_count + 1))
        for u, v in edges:
            u, v = int(u), int(v)
            if u == v:
                raise GraphError(f"self-loop on agent {u}")
            if not (1 <= u <= agent_count and 1 <= v <= agent_count):
                raise GraphError(f"edge ({u}, {v}) references an agent outside 1..{agent_count}")
            graph.add_edge(u, v)
        if not nx.is_connected(graph):
            raise GraphError("communication graph is not connected")
        self._graph = graph
        self.agent_count = agent_count

    @classmethod
    def ring(cls, agent_count: int) -> 'CommGraph':
        if agent_count <= 2:
            return cls.path(agent_count)
        edges = [(i, i % agent_count + 1) for i in range(1, agent_count + 1)]
        return cls(agent_count, edges)

    @classmethod
    def path(cls, agent_count: int) -> 'CommGraph':
        return cls(agent_count, [(i, i + 1) for i in range(1, agent_count)])

    @classmethod
    def complete(cls, agent_count: int) -> 'CommGraph':
        edges = [(i, j) for i in range(1, agent_count + 1) for j in range(i + 1, agent_count + 1)]
        return cls(agent_count, edges)

    @classmethod
    def from_kind(cls, kind: str, agent_count: int, edges: Sequence[Sequence[int]] = None) -> 'CommGraph':
        """Build from a named generator ('ring', 'path', 'complete') or 'custom' edge list"""
        if kind == 'ring':
            return cls.ring(agent_count)
        if kind == 'path':
            return cls.path(agent_count)
        if kind == 'complete':
            return cls.complete(agent_count)
        if kind == 'custom':
            if edges is None:
                raise GraphError("custom graph requires an edge list")
            return cls(agent_count, [tuple(e) for e in edges])
        raise GraphError(f"unknown graph kind {kind!r}")

    @property
    def agents(self) -> range:
        return range(1, self.agent_count + 1)

    @property
    def edges(self) -> List[Tuple[int, int]]:
        return sorted(tuple(sorted(e)) for e in self._graph.edges())

    def neighbors(self, agent: int) -> frozenset:
        if agent not in self._graph:
            raise GraphError(f"agent {agent} not in graph")
        return frozenset(self._graph.neighbors(agent))

    @cached_property
    def diameter(self) -> int:
        """Longest shortest path, by breadth-first search from every node"""
        if self.agent_count == 1:
            return 0
        return max(nx.eccentricity(self._graph).values())

    def relabeled(self, mapping) -> 'CommGraph':
        """Copy with agents renamed through mapping (a permutation of 1..N)"""
        return CommGraph(self.agent_count, [(mapping[u], mapping[v]) for u, v in self.edges])


def neighbors(graph: CommGraph, agent: int) -> frozenset:
    return graph.neighbors(agent)


def diameter(graph: CommGraph) -> int:
    return graph.diameter


__all__ = [
    'AgentPartition', 'CommGraph', 'as_membership_vector', 'indicator', 'is_independent',
    'in_polytope', 'is_vertex', 'neighbors', 'diameter'
]

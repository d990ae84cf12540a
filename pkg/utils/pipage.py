"""
Distributed stochastic Pipage rounding.

Each agent rounds only its own block. Two fractional coordinates exchange probability
mass until at least one of them is integral; the transfer keeps the block sum fixed and
every coordinate's expectation unchanged, so the block ends on exactly kappa_i selected
strategies after at most |P_i| steps.
"""
import logging
from dataclasses import dataclass, replace
from typing import Callable, Dict, Iterable, Mapping, Optional, Tuple, Union

import numpy as np

from .config import get_tolerance
from .errors import InvariantViolation, ProtocolViolation
from .matroid_graph import AgentPartition, as_membership_vector, in_polytope
from .oracle_core import ValueOracle, multilinear_exact

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RoundingState:
    fractional: Tuple[Tuple[int, float], ...]  # (strategy, value) with value strictly in (0, 1), sorted
    selected: frozenset
    block: range
    steps: int = 0

    @classmethod
    def from_values(cls, values: Mapping[int, float], block: range, tol: Optional[float] = None) -> 'RoundingState':
        tol = get_tolerance() if tol is None else tol
        selected, fractional = set(), []
        for p in sorted(values):
            if p not in block:
                raise ProtocolViolation(f"strategy {p} is outside the agent's block {block}")
            y = float(values[p])
            if y < -tol or y > 1.0 + tol:
                raise ProtocolViolation(f"strategy {p} has value {y} outside [0, 1]")
            if y >= 1.0 - tol:
                selected.add(p)
            elif y > tol:
                fractional.append((p, y))
        return cls(fractional=tuple(fractional), selected=frozenset(selected), block=block)

    @property
    def values(self) -> Dict[int, float]:
        return dict(self.fractional)

    @property
    def mass(self) -> float:
        return len(self.selected) + sum(y for _, y in self.fractional)


def pipage_step(state: RoundingState, p: int, q: int, rng: np.random.Generator,
                tol: Optional[float] = None) -> RoundingState:
    """One zero-sum transfer between fractional strategies p and q"""
    tol = get_tolerance() if tol is None else tol
    if p == q:
        raise ProtocolViolation("pipage_step needs two distinct strategies")
    values = state.values
    if p not in values or q not in values:
        raise ProtocolViolation(f"strategies {p} and {q} must both be fractional")
    yp, yq = values[p], values[q]
    delta_p = min(yp, 1.0 - yq)
    delta_q = min(1.0 - yp, yq)
    if rng.random() < delta_q / (delta_p + delta_q):
        yp, yq = yp - delta_p, yq + delta_p
    else:
        yp, yq = yp + delta_q, yq - delta_q

    selected = set(state.selected)
    values[p], values[q] = yp, yq
    for r in (p, q):
        if values[r] >= 1.0 - tol:
            selected.add(r)
            del values[r]
        elif values[r] <= tol:
            del values[r]
    return replace(state, fractional=tuple(sorted(values.items())), selected=frozenset(selected),
                   steps=state.steps + 1)


def round_fractional(values: Mapping[int, float], block: range, budget: int, rng: np.random.Generator,
                     tol: Optional[float] = None) -> frozenset:
    """Round one block to exactly `budget` strategies, pairing the two smallest fractional ids"""
    tol = get_tolerance() if tol is None else tol
    state = RoundingState.from_values(values, block, tol)
    if abs(state.mass - budget) > tol * max(1, len(block)):
        raise ProtocolViolation(f"block mass {state.mass} is not the budget {budget}")
    while len(state.fractional) >= 2:
        (p, _), (q, _) = state.fractional[:2]
        state = pipage_step(state, p, q, rng, tol)
        if state.steps > len(block):
            raise InvariantViolation(f"rounding did not terminate within {len(block)} steps")
    if state.fractional:
        raise InvariantViolation(f"single fractional coordinate {state.fractional[0]} left over")
    if len(state.selected) != budget:
        raise InvariantViolation(f"rounding selected {len(state.selected)} strategies, budget is {budget}")
    return state.selected


def round_block(agent, rng: np.random.Generator) -> frozenset:
    """Round an agent's own block of its final information set"""
    return round_fractional(agent.info_set.restricted(agent.block), agent.block, agent.budget, rng)


RngSource = Union[np.random.Generator, Mapping[int, np.random.Generator], Callable[[int], np.random.Generator]]


def _rng_for(source: RngSource, agent: int) -> np.random.Generator:
    if isinstance(source, np.random.Generator):
        return source
    if callable(source):
        return source(agent)
    return source[agent]


def round_membership(xbar, partition: AgentPartition, rng: RngSource) -> frozenset:
    """Round every agent's block of x-bar and return the union of the selections"""
    xbar = as_membership_vector(xbar, partition.n)
    chosen = set()
    for agent in partition.agents:
        block = partition.block(agent)
        values = {p: float(xbar[p - 1]) for p in block if xbar[p - 1] > 0.0}
        chosen |= round_fractional(values, block, partition.budget(agent), _rng_for(rng, agent))
    return frozenset(chosen)


@dataclass(frozen=True)
class RoundingReport:
    estimate: float
    std_error: float
    exact_value: float
    margin: float
    trials: int
    passed: bool


def rounding_expectation_check(f: ValueOracle, xbar, partition: AgentPartition, trials: int,
                               rng: np.random.Generator, guard: Optional[int] = None) -> RoundingReport:
    """
    Monte Carlo estimate of E[f(rounded set)] next to the exact F(x-bar); passes when
    estimate + 3 standard errors >= F(x-bar).
    """
    tol = get_tolerance()
    if trials < 2:
        raise ProtocolViolation("need at least two rounding trials for a standard error")
    xbar = as_membership_vector(xbar, partition.n)
    if not in_polytope(partition, xbar, tol):
        raise ProtocolViolation("x-bar is not in the matroid polytope")
    exact = multilinear_exact(f, xbar, guard)

    rows = np.zeros((trials, partition.n), dtype=bool)
    for k in range(trials):
        rows[k, [p - 1 for p in round_membership(xbar, partition, rng)]] = True
    samples = f.evaluate_batch(rows)
    estimate = float(samples.mean())
    std_error = float(samples.std(ddof=1) / np.sqrt(trials))
    report = RoundingReport(
        estimate=estimate,
        std_error=std_error,
        exact_value=exact,
        margin=estimate - exact,
        trials=trials,
        passed=estimate + 3.0 * std_error >= exact - tol,
    )
    logger.info("rounding check: E[f]=%.6g +- %.3g vs F=%.6g (%s)", estimate, std_error, exact,
                'pass' if report.passed else 'fail')
    return report


__all__ = [
    'RoundingState', 'pipage_step', 'round_fractional', 'round_block', 'round_membership',
    'RoundingReport', 'rounding_expectation_check'
]

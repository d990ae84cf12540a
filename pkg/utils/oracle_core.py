"""
Value oracle model for monotone submodular set functions.

Provides the oracle base class with a thread-safe call counter, the two utility families
used throughout (2-D sensor coverage and weighted set coverage), and exact reference
computations of the multilinear extension, its derivatives and the total curvature by
full subset enumeration. The exact routines exist for verification and refuse ground sets
larger than the enumeration guard.
"""
import logging
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Dict, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np

from .config import get_enumeration_guard, get_tolerance
from .errors import DistSubmodError, GuardExceededError, StrategyRangeError
from .matroid_graph import as_membership_vector

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GroundSet:
    """Strategies 1..n"""
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise StrategyRangeError(f"ground set needs n >= 1, got {self.n}")

    @property
    def strategies(self) -> range:
        return range(1, self.n + 1)

    def validate_strategy(self, p: int) -> int:
        if not 1 <= p <= self.n:
            raise StrategyRangeError(f"strategy {p} outside 1..{self.n}")
        return p

    def validate_subset(self, subset: Iterable[int]) -> frozenset:
        members = frozenset(subset)
        if members and (min(members) < 1 or max(members) > self.n):
            raise StrategyRangeError(f"subset {sorted(members)} not within 1..{self.n}")
        return members


class ValueOracle(ABC):
    """
    Black-box set function f: 2^P -> R>=0 on strategies 1..n.

    Subclasses implement `_value` on a validated frozenset and may override
    `_batch_value` with a vectorized evaluation of many sets at once. Every set that
    reaches the function counts as one call in `eval_counter`.
    """

    kind: str = ''

    def __init__(self, n: int):
        self.ground = GroundSet(n)
        self._calls = 0
        self._lock = threading.Lock()

    @property
    def n(self) -> int:
        return self.ground.n

    @property
    def eval_counter(self) -> int:
        return self._calls

    def reset_counter(self):
        with self._lock:
            self._calls = 0

    def _count(self, calls: int):
        with self._lock:
            self._calls += calls

    def evaluate(self, subset: Iterable[int]) -> float:
        members = self.ground.validate_subset(subset)
        self._count(1)
        return float(self._value(members))

    __call__ = evaluate

    def evaluate_batch(self, membership: np.ndarray) -> np.ndarray:
        """Evaluate the sets encoded as rows of a boolean K x n matrix"""
        membership = np.asarray(membership, dtype=bool)
        if membership.ndim != 2 or membership.shape[1] != self.n:
            raise StrategyRangeError(f"batch must have shape (K, {self.n}), got {membership.shape}")
        self._count(membership.shape[0])
        return np.asarray(self._batch_value(membership), dtype=np.float64)

    def _batch_value(self, membership: np.ndarray) -> np.ndarray:
        return np.array([self._value(frozenset((np.flatnonzero(row) + 1).tolist())) for row in membership])

    @abstractmethod
    def _value(self, members: frozenset) -> float:
        ...

    @abstractmethod
    def to_document(self) -> Dict[str, Any]:
        """Plain-data form used by the utility instance file format"""

    def __getstate__(self):
        state = self.__dict__.copy()
        state.pop('_lock', None)
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._lock = threading.Lock()


class CoverageUtility(ValueOracle):
    """
    Sensor placement utility f(P) = L({0}) - L(P ∪ {0}).

    L(P) sums, over information sources, the Euclidean distance to the nearest chosen
    site; the virtual element 0 is a fixed depot location that is always available.
    Several strategies may map to the same site, so the value only depends on the set
    of occupied sites and is memoized per occupied-site tuple.
    """

    kind = 'coverage2d'

    def __init__(self, sources, sites, site_of_strategy, depot: Optional[Sequence[float]] = None):
        sources = np.asarray(sources, dtype=np.float64).reshape(-1, 2)
        sites = np.asarray(sites, dtype=np.float64).reshape(-1, 2)
        if isinstance(site_of_strategy, Mapping):
            mapping = [int(site_of_strategy[p]) for p in sorted(site_of_strategy)]
            if sorted(site_of_strategy) != list(range(1, len(mapping) + 1)):
                raise StrategyRangeError("site_of_strategy keys must be the strategies 1..n")
        else:
            mapping = [int(s) for s in site_of_strategy]
        if not mapping:
            raise StrategyRangeError("coverage utility needs at least one strategy")
        if min(mapping) < 0 or max(mapping) >= len(sites):
            raise StrategyRangeError(f"site index outside 0..{len(sites) - 1}")
        if len(sources) == 0:
            raise DistSubmodError("coverage utility needs at least one information source")
        super().__init__(len(mapping))

        if depot is None:
            points = np.vstack([sources, sites])
            depot = (points.min(axis=0) + points.max(axis=0)) / 2.0
        self.sources = sources
        self.sites = sites
        self.depot = np.asarray(depot, dtype=np.float64).reshape(2)
        self.site_of_strategy = tuple(mapping)

        self._depot_distance = np.linalg.norm(sources - self.depot, axis=1)
        self._site_distance = np.linalg.norm(sources[:, None, :] - sites[None, :, :], axis=2)
        self._base_loss = float(self._depot_distance.sum())
        self._strategy_site = np.zeros((self.n, len(sites)), dtype=np.int64)
        self._strategy_site[np.arange(self.n), mapping] = 1
        self._site_cache: Dict[Tuple[int, ...], float] = {(): 0.0}

    def sites_of(self, subset: Iterable[int]) -> frozenset:
        """Occupied site indices (0-based) for a strategy subset"""
        members = self.ground.validate_subset(subset)
        return frozenset(self.site_of_strategy[p - 1] for p in members)

    def _sites_value(self, chosen: Tuple[int, ...]) -> float:
        """Utility of a sorted tuple of occupied site indices"""
        value = self._site_cache.get(chosen)
        if value is None:
            nearest = np.minimum(self._depot_distance, self._site_distance[:, list(chosen)].min(axis=1))
            value = max(0.0, self._base_loss - float(nearest.sum()))
            self._site_cache[chosen] = value
        return value

    def _value(self, members: frozenset) -> float:
        return self._sites_value(tuple(sorted({self.site_of_strategy[p - 1] for p in members})))

    def _batch_value(self, membership: np.ndarray) -> np.ndarray:
        occupied = (membership.astype(np.int64) @ self._strategy_site) > 0
        if occupied.shape[0] == 0:
            return np.zeros(0, dtype=np.float64)
        unique, inverse = np.unique(occupied, axis=0, return_inverse=True)
        values = np.array([self._sites_value(tuple(np.flatnonzero(row).tolist())) for row in unique],
                          dtype=np.float64)
        return values[np.asarray(inverse).reshape(-1)]

    def to_document(self) -> Dict[str, Any]:
        return {
            'kind': self.kind,
            'sources': self.sources.tolist(),
            'sites': self.sites.tolist(),
            'site_of_strategy': list(self.site_of_strategy),
            'depot': self.depot.tolist(),
        }


class WeightedCoverageUtility(ValueOracle):
    """f(R) = total weight of the union of the covers of the strategies in R"""

    kind = 'weighted_coverage'

    def __init__(self, element_weights: Mapping[Any, float], covers):
        if isinstance(covers, Mapping):
            keys = sorted(covers)
            if keys != list(range(1, len(keys) + 1)):
                raise StrategyRangeError("covers keys must be the strategies 1..n")
            cover_list = [covers[p] for p in keys]
        else:
            cover_list = list(covers)
        if not cover_list:
            raise StrategyRangeError("weighted coverage needs at least one strategy")
        super().__init__(len(cover_list))

        self.elements = tuple(sorted(str(e) for e in element_weights))
        index = {e: k for k, e in enumerate(self.elements)}
        weights = {str(e): float(w) for e, w in element_weights.items()}
        if any(w < 0 for w in weights.values()):
            raise DistSubmodError("element weights must be nonnegative")
        self.weights = np.array([weights[e] for e in self.elements], dtype=np.float64)
        self.covers = tuple(frozenset(str(e) for e in cover) for cover in cover_list)
        self._incidence = np.zeros((self.n, len(self.elements)), dtype=np.int64)
        for p, cover in enumerate(self.covers):
            for e in cover:
                if e not in index:
                    raise DistSubmodError(f"strategy {p + 1} covers unknown element {e!r}")
                self._incidence[p, index[e]] = 1

    def _value(self, members: frozenset) -> float:
        row = np.zeros((1, self.n), dtype=bool)
        row[0, [p - 1 for p in members]] = True
        return float(self._batch_value(row)[0])

    def _batch_value(self, membership: np.ndarray) -> np.ndarray:
        covered = (membership.astype(np.int64) @ self._incidence) > 0
        return covered.astype(np.float64) @ self.weights

    def to_document(self) -> Dict[str, Any]:
        return {
            'kind': self.kind,
            'weights': {e: float(w) for e, w in zip(self.elements, self.weights)},
            'covers': [sorted(cover) for cover in self.covers],
        }


def modular_utility(weights: Sequence[float]) -> WeightedCoverageUtility:
    """Additive utility: every strategy covers its own private element"""
    return WeightedCoverageUtility(
        {f"e{p}": w for p, w in enumerate(weights, start=1)},
        [[f"e{p}"] for p in range(1, len(weights) + 1)],
    )


def marginal_gain(f: ValueOracle, p: int, subset: Iterable[int]) -> float:
    """Delta_f(p | S) = f(S ∪ {p}) - f(S)"""
    f.ground.validate_strategy(p)
    members = f.ground.validate_subset(subset)
    if p in members:
        return 0.0
    return f.evaluate(members | {p}) - f.evaluate(members)


# --- exact (enumeration based) reference computations

def _check_guard(n: int, guard: Optional[int]):
    guard = get_enumeration_guard() if guard is None else guard
    if n > guard:
        raise GuardExceededError(f"exact enumeration over 2^{n} subsets exceeds the guard n <= {guard}")


def _all_masks(n: int) -> np.ndarray:
    """Boolean (2^n, n) matrix whose rows are all subsets; row index is the bitmask"""
    rows = np.arange(2 ** n, dtype=np.int64)
    return ((rows[:, None] >> np.arange(n, dtype=np.int64)) & 1).astype(bool)


def _probabilities(masks: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.prod(np.where(masks, x, 1.0 - x), axis=1)


def _value_table(f: ValueOracle, guard: Optional[int] = None) -> np.ndarray:
    _check_guard(f.n, guard)
    return f.evaluate_batch(_all_masks(f.n))


def multilinear_exact(f: ValueOracle, x, guard: Optional[int] = None) -> float:
    """F(x) = sum over R of f(R) prod_{p in R} x_p prod_{p not in R} (1 - x_p)"""
    _check_guard(f.n, guard)
    x = as_membership_vector(x, f.n)
    masks = _all_masks(f.n)
    return float(_probabilities(masks, x) @ f.evaluate_batch(masks))


def _others_masks(n: int, fixed: Sequence[int]) -> np.ndarray:
    """All subsets of the coordinates not in `fixed` (0-based), embedded in n columns"""
    free = [k for k in range(n) if k not in fixed]
    small = _all_masks(len(free))
    masks = np.zeros((small.shape[0], n), dtype=bool)
    masks[:, free] = small
    return masks


def partial_exact(f: ValueOracle, x, p: int, guard: Optional[int] = None) -> float:
    """dF/dx_p = E[f(R_x ∪ {p}) - f(R_x minus {p})]"""
    _check_guard(f.n, guard)
    f.ground.validate_strategy(p)
    x = as_membership_vector(x, f.n)
    k = p - 1
    base = _others_masks(f.n, [k])
    probs = _probabilities(base[:, [i for i in range(f.n) if i != k]], np.delete(x, k))
    with_p = base.copy()
    with_p[:, k] = True
    return float(probs @ (f.evaluate_batch(with_p) - f.evaluate_batch(base)))


def gradient_exact(f: ValueOracle, x, guard: Optional[int] = None) -> np.ndarray:
    return np.array([partial_exact(f, x, p, guard) for p in f.ground.strategies])


def second_partial_exact(f: ValueOracle, x, p: int, q: int, guard: Optional[int] = None) -> float:
    """Mixed second derivative as the four-term expectation over subsets of P minus {p, q}"""
    if p == q:
        raise ValueError("second_partial_exact needs p != q (the diagonal is identically zero)")
    _check_guard(f.n, guard)
    f.ground.validate_strategy(p)
    f.ground.validate_strategy(q)
    x = as_membership_vector(x, f.n)
    kp, kq = p - 1, q - 1
    free = [i for i in range(f.n) if i not in (kp, kq)]
    base = _others_masks(f.n, [kp, kq])
    probs = _probabilities(base[:, free], x[free])
    with_p = base.copy()
    with_p[:, kp] = True
    with_q = base.copy()
    with_q[:, kq] = True
    with_both = with_p.copy()
    with_both[:, kq] = True
    terms = (f.evaluate_batch(with_both) - f.evaluate_batch(with_p)
             - f.evaluate_batch(with_q) + f.evaluate_batch(base))
    return float(probs @ terms)


def total_curvature(f: ValueOracle, ground: Optional[GroundSet] = None, guard: Optional[int] = None,
                    tol: Optional[float] = None) -> float:
    """
    c = 1 - min over p and S not containing p of Delta_f(p|S) / Delta_f(p|∅).

    Strategies whose singleton gain is zero are left out of the minimum; if every
    singleton gain is zero the curvature is undefined and DistSubmodError is raised.
    """
    ground = ground or f.ground
    if ground.n != f.n:
        raise StrategyRangeError(f"ground set of size {ground.n} does not match oracle size {f.n}")
    tol = get_tolerance() if tol is None else tol
    values = _value_table(f, guard)
    index = np.arange(2 ** f.n, dtype=np.int64)
    ratio = np.inf
    for k in range(f.n):
        bit = 1 << k
        singleton = values[bit] - values[0]
        if singleton <= tol:
            continue
        without = index[(index & bit) == 0]
        gains = values[without | bit] - values[without]
        ratio = min(ratio, float(gains.min() / singleton))
    if ratio == np.inf:
        raise DistSubmodError("curvature undefined: every singleton gain is zero")
    return float(min(1.0, max(0.0, 1.0 - ratio)))


def is_monotone(f: ValueOracle, guard: Optional[int] = None, tol: Optional[float] = None) -> bool:
    tol = get_tolerance() if tol is None else tol
    values = _value_table(f, guard)
    index = np.arange(2 ** f.n, dtype=np.int64)
    for k in range(f.n):
        without = index[(index & (1 << k)) == 0]
        if np.any(values[without | (1 << k)] < values[without] - tol):
            return False
    return True


def is_submodular(f: ValueOracle, guard: Optional[int] = None, tol: Optional[float] = None) -> bool:
    """
    Diminishing returns check. Uses the pairwise form f(S+p) + f(S+q) >= f(S+p+q) + f(S)
    for all S and p, q outside S, which is equivalent to the nested-set definition.
    """
    tol = get_tolerance() if tol is None else tol
    values = _value_table(f, guard)
    index = np.arange(2 ** f.n, dtype=np.int64)
    for a in range(f.n):
        for b in range(a + 1, f.n):
            pa, pb = 1 << a, 1 << b
            base = index[(index & (pa | pb)) == 0]
            lhs = values[base | pa] + values[base | pb]
            rhs = values[base | pa | pb] + values[base]
            if np.any(lhs < rhs - tol):
                return False
    return True


__all__ = [
    'GroundSet', 'ValueOracle', 'CoverageUtility', 'WeightedCoverageUtility', 'modular_utility',
    'marginal_gain', 'total_curvature', 'multilinear_exact', 'partial_exact', 'gradient_exact',
    'second_partial_exact', 'is_monotone', 'is_submodular'
]

"""
Monte Carlo estimation of the multilinear-extension gradient, Hoeffding-style
confidence calculators, and the random substream convention.

Random numbers always come from numpy Generators. Every (trial, agent, round, phase)
gets its own stream derived from the master seed through numpy's SeedSequence spawn
keys, so results do not depend on the order in which agents or trials are scheduled.
"""
import logging
import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from .errors import DistSubmodError
from .matroid_graph import as_membership_vector
from .oracle_core import ValueOracle

logger = logging.getLogger(__name__)


class Phase(IntEnum):
    """Last component of a substream key"""
    SAMPLE = 0
    ROUNDING = 1
    SCENARIO = 2
    CHECK = 3


def substream(master_seed: int, trial: int = 0, agent: int = 0, round_index: int = 0,
              phase: Phase = Phase.SAMPLE) -> np.random.Generator:
    """
    Independent generator for one (trial, agent, round, phase) cell.

    The derivation is SeedSequence(master_seed, spawn_key=(trial, agent, round, phase))
    fed into PCG64; any implementation following it reproduces the same streams.
    """
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(int(trial), int(agent), int(round_index), int(phase)))
    return np.random.Generator(np.random.PCG64(seq))


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """K independent random sets drawn from a membership vector"""
    membership: np.ndarray  # (K, n) bool, row k encodes set R^k
    seed_trace: str = ''

    @property
    def sample_count(self) -> int:
        return self.membership.shape[0]

    @property
    def sets(self) -> Tuple[frozenset, ...]:
        return tuple(frozenset((np.flatnonzero(row) + 1).tolist()) for row in self.membership)


@dataclass(frozen=True, eq=False)
class GradientEstimate:
    """Empirical gradient; entries outside `support` are zero and not estimated"""
    values: np.ndarray
    support: Tuple[int, ...]
    sample_count: int

    def __getitem__(self, p: int) -> float:
        if p not in self.support:
            raise KeyError(f"strategy {p} was not estimated")
        return float(self.values[p - 1])


def draw_samples(x, K: int, rng: np.random.Generator, seed_trace: str = '') -> SampleBatch:
    """Each strategy p enters each sample independently with probability x_p"""
    if K < 1:
        raise DistSubmodError(f"sample count must be >= 1, got {K}")
    x = as_membership_vector(x)
    membership = rng.random((K, x.shape[0])) < x
    return SampleBatch(membership=membership, seed_trace=seed_trace)


def estimate_gradient(f: ValueOracle, x, batch: SampleBatch, support: Optional[Iterable[int]] = None) -> GradientEstimate:
    """
    Entry p = (1/K) sum_k [f(R^k ∪ {p}) - f(R^k minus {p})] for p in support.

    Uses exactly 2 K |support| oracle evaluations.
    """
    x = as_membership_vector(x, f.n)
    if batch.membership.shape[1] != f.n:
        raise DistSubmodError(f"batch has {batch.membership.shape[1]} columns, oracle has {f.n} strategies")
    support = tuple(sorted(set(f.ground.strategies if support is None else support)))
    if not support:
        raise DistSubmodError("gradient support is empty")
    for p in support:
        f.ground.validate_strategy(p)

    values = np.zeros(f.n, dtype=np.float64)
    for p in support:
        with_p = batch.membership.copy()
        with_p[:, p - 1] = True
        without_p = batch.membership.copy()
        without_p[:, p - 1] = False
        values[p - 1] = float(np.mean(f.evaluate_batch(with_p) - f.evaluate_batch(without_p)))
    return GradientEstimate(values=values, support=support, sample_count=batch.sample_count)


@dataclass(frozen=True)
class HoeffdingReport:
    threshold: float
    per_coordinate_failure: float
    aggregate_success: float


def hoeffding_confidence(K: int, T: int, f_star_bound: float = 1.0, n: int = 1) -> HoeffdingReport:
    """
    Deviation of a gradient entry beyond f_star_bound / (2T) has probability at most
    2 exp(-K / (8 T^2)); over T rounds and n coordinates the estimates all stay within
    that threshold with probability at least 1 - 2 T n exp(-K / (8 T^2)).

    Values are reported as computed, even when the failure bound exceeds 1.
    """
    if K < 1 or T < 1:
        raise DistSubmodError("K and T must be >= 1")
    if f_star_bound < 0:
        raise DistSubmodError("f_star_bound must be nonnegative")
    failure = 2.0 * math.exp(-K / (8.0 * T * T))
    return HoeffdingReport(
        threshold=f_star_bound / (2.0 * T),
        per_coordinate_failure=failure,
        aggregate_success=1.0 - T * n * failure,
    )


def product_confidence(sample_counts: Sequence[int], block_sizes: Sequence[int], T: int) -> float:
    """(prod_i (1 - 2 exp(-K_i / (8 T^2)))^{|P_i|})^T, with each factor clipped at 0"""
    if len(sample_counts) != len(block_sizes):
        raise DistSubmodError("need one sample count per block")
    log_total = 0.0
    for K, size in zip(sample_counts, block_sizes):
        failure = 2.0 * math.exp(-K / (8.0 * T * T))
        if failure >= 1.0:
            return 0.0
        log_total += size * math.log1p(-failure)
    return math.exp(T * log_total)


def samples_for_confidence(T: int, failure: float) -> int:
    """Smallest K with 2 exp(-K / (8 T^2)) <= failure"""
    if not 0.0 < failure < 2.0:
        raise DistSubmodError("failure probability must lie in (0, 2)")
    return max(1, math.ceil(8.0 * T * T * math.log(2.0 / failure)))


__all__ = [
    'Phase', 'substream', 'SampleBatch', 'GradientEstimate', 'draw_samples', 'estimate_gradient',
    'HoeffdingReport', 'hoeffding_confidence', 'product_confidence', 'samples_for_confidence'
]

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from utils.errors import ConfigError, GraphError, MembershipRangeError, StrategyRangeError
from utils.matroid_graph import (
    AgentPartition, CommGraph, as_membership_vector, diameter, in_polytope, indicator, is_independent,
    is_vertex, neighbors
)


class TestAgentPartition:

    def test_blocks_are_contiguous(self):
        partition = AgentPartition((3, 1, 2), (2, 1, 1))
        assert partition.n == 6
        assert partition.blocks == (range(1, 4), range(4, 5), range(5, 7))
        assert partition.total_budget == 4
        assert [partition.agent_of(p) for p in range(1, 7)] == [1, 1, 1, 2, 3, 3]
        assert partition.block_slice(3) == slice(4, 6)

    @pytest.mark.parametrize('sizes, budgets', [
        ((), ()),
        ((2, 2), (1,)),
        ((2, 0), (1, 1)),
        ((2, 2), (3, 1)),
        ((2, 2), (0, 1)),
    ])
    def test_invalid(self, sizes, budgets):
        with pytest.raises(ConfigError):
            AgentPartition(sizes, budgets)

    def test_unknown_agent_and_strategy(self, three_pairs):
        with pytest.raises(ConfigError):
            three_pairs.block(4)
        with pytest.raises(StrategyRangeError):
            three_pairs.agent_of(7)

    def test_independence(self, three_pairs):
        assert is_independent(three_pairs, {1, 3, 6})
        assert is_independent(three_pairs, set())
        assert not is_independent(three_pairs, {1, 2})


class TestPolytope:

    def test_membership(self, three_pairs):
        assert in_polytope(three_pairs, [0.5, 0.5, 1.0, 0.0, 0.2, 0.3])
        assert not in_polytope(three_pairs, [0.6, 0.5, 1.0, 0.0, 0.2, 0.3])
        assert not in_polytope(three_pairs, [0.5, 0.5])

    def test_vertices(self, three_pairs):
        assert is_vertex(three_pairs, indicator({1, 4}, 6))
        assert not is_vertex(three_pairs, indicator({1, 2}, 6))
        assert not is_vertex(three_pairs, [0.5, 0.5, 0, 0, 0, 0])

    def test_membership_vector_validation(self):
        with pytest.raises(MembershipRangeError):
            as_membership_vector([0.5, 1.2])
        with pytest.raises(MembershipRangeError):
            as_membership_vector([[0.5]])
        with pytest.raises(MembershipRangeError):
            as_membership_vector([0.5, np.nan])
        with pytest.raises(StrategyRangeError):
            indicator({0}, 3)

    @given(st.lists(st.floats(0.0, 1.0, allow_nan=False), min_size=6, max_size=6))
    @settings(max_examples=100)
    def test_scaled_point_is_feasible(self, values):
        # dividing each block by its sum (when above budget) always lands in the polytope
        partition = AgentPartition((2, 2, 2), (1, 1, 1))
        x = np.array(values)
        for agent in partition.agents:
            block = partition.block_slice(agent)
            total = x[block].sum()
            if total > 1.0:
                x[block] = x[block] / total
        assert in_polytope(partition, x)


class TestCommGraph:

    @pytest.mark.parametrize('graph, expected', [
        (CommGraph.ring(5), 2),
        (CommGraph.ring(6), 3),
        (CommGraph.path(4), 3),
        (CommGraph.complete(4), 1),
        (CommGraph(1), 0),
    ])
    def test_diameter(self, graph, expected):
        assert graph.diameter == expected
        assert diameter(graph) == expected

    def test_neighbors(self, ring5):
        assert neighbors(ring5, 1) == frozenset({2, 5})
        assert ring5.neighbors(3) == frozenset({2, 4})
        with pytest.raises(GraphError):
            ring5.neighbors(6)

    def test_small_ring_is_a_path(self):
        assert CommGraph.ring(2).edges == [(1, 2)]

    @pytest.mark.parametrize('edges', [
        [(1, 2)],
        [(1, 1), (1, 2), (2, 3)],
        [(1, 2), (2, 4)],
    ])
    def test_invalid_graphs(self, edges):
        with pytest.raises(GraphError):
            CommGraph(3, edges)

    def test_from_kind(self):
        assert CommGraph.from_kind('custom', 3, [[1, 2], [2, 3]]).diameter == 2
        with pytest.raises(GraphError):
            CommGraph.from_kind('custom', 3)
        with pytest.raises(GraphError):
            CommGraph.from_kind('star', 3)

    @given(st.permutations(list(range(1, 7))))
    @settings(max_examples=30)
    def test_relabeling_keeps_diameter(self, order):
        graph = CommGraph.path(6)
        mapping = dict(zip(range(1, 7), order))
        assert graph.relabeled(mapping).diameter == graph.diameter

import copy
from pathlib import Path

import numpy as np
import pytest

from utils import scenario_io
from utils.errors import ConfigError, GraphError
from utils.experiments import generate_coverage_scenario, generate_sensor_scenario
from utils.oracle_core import ValueOracle
from utils.scenario_io import audit_utility, load_scenario, save_scenario, scenario_from_document, scenario_hash

BASE = {
    'scenario_id': 'tiny',
    'utility': {'kind': 'weighted_coverage', 'weights': {'a': 1.0, 'b': 2.0},
                'covers': [['a'], ['b'], ['a', 'b'], []]},
    'agents': {'block_sizes': [2, 2], 'budgets': [1, 1]},
    'graph': {'kind': 'path'},
    'run': {'T': 5, 'samples': 10, 'consensus_rounds': 'diam', 'seed': 3},
    'trials': 2,
    'solvers': ['DS', 'SEQ(a)'],
    'visit_sequences': {'a': [1, 2]},
}


def _doc(**changes):
    doc = copy.deepcopy(BASE)
    doc.update(changes)
    return doc


class TestDocuments:

    def test_builds_scenario(self):
        scenario = scenario_from_document(_doc())
        assert scenario.partition.n == 4
        assert scenario.run.consensus_rounds == 'diam'
        assert scenario.run.rounds_for(scenario.graph) == 1
        assert scenario.visit_sequences['a'].agents == (1, 2)
        assert scenario.utility.evaluate({3}) == 3.0

    def test_defaults(self):
        doc = _doc()
        for key in ('graph', 'run', 'trials', 'solvers', 'visit_sequences'):
            del doc[key]
        scenario = scenario_from_document(doc)
        assert scenario.run.T == 50
        assert scenario.run.samples == 1000
        assert scenario.solvers == ('DS',)
        assert scenario.graph.agent_count == 2

    def test_hash_is_canonical(self):
        doc = _doc()
        reordered = dict(reversed(list(doc.items())))
        assert scenario_hash(doc) == scenario_hash(reordered)
        assert scenario_hash(doc) != scenario_hash(_doc(trials=3))

    @pytest.mark.parametrize('doc', [
        {k: v for k, v in BASE.items() if k != 'agents'},
        _doc(solvers=['GREEDY']),
        _doc(solvers=['SEQ(z)']),
        _doc(agents={'block_sizes': [2, 1], 'budgets': [1, 1]}),
        _doc(utility={'kind': 'mystery'}),
        _doc(run={'T': 0}),
        _doc(visit_sequences={'a': [1]}),
        _doc(utility={'kind': 'sensor_field', 'sites': 1}),
    ])
    def test_rejected(self, doc):
        with pytest.raises(ConfigError):
            scenario_from_document(doc)

    def test_disconnected_custom_graph(self):
        doc = _doc(agents={'block_sizes': [1, 1, 2], 'budgets': [1, 1, 1]},
                   graph={'kind': 'custom', 'edges': [[1, 2]]}, solvers=['DS'], visit_sequences={})
        with pytest.raises(GraphError):
            scenario_from_document(doc)

    def test_overrides(self):
        scenario = scenario_from_document(_doc())
        changed = scenario.with_overrides(T=7, seed=None, solvers=('DS',), trials=4)
        assert changed.run.T == 7
        assert changed.run.seed == 3
        assert changed.solvers == ('DS',)
        assert changed.trials == 4
        assert changed.scenario_hash != scenario.scenario_hash


class ShrinkingUtility(ValueOracle):
    """f(S) = |S| (3 - |S|): grows, then falls"""

    def _value(self, members):
        return float(len(members) * (3 - len(members)))

    def to_document(self):
        return {'kind': 'shrinking'}


class TestAudit:

    def test_loaded_utility_is_audited_without_spending_calls(self):
        scenario = scenario_from_document(_doc())
        assert scenario.utility.eval_counter == 0

    def test_non_monotone_rejected(self):
        with pytest.raises(ConfigError, match='not monotone'):
            audit_utility(ShrinkingUtility(4))

    def test_failed_audit_stops_loading(self, monkeypatch):
        monkeypatch.setattr(scenario_io, 'is_submodular', lambda f: False)
        with pytest.raises(ConfigError, match='not submodular'):
            scenario_from_document(_doc())

    def test_large_utilities_skip_the_audit(self, monkeypatch):
        monkeypatch.setenv('DISTSUBMOD_ENUM_GUARD', '3')
        monkeypatch.setattr(scenario_io, 'is_monotone', lambda f: False)
        assert scenario_from_document(_doc()).partition.n == 4


class TestSensorField:

    def test_depot_choices(self):
        origin = scenario_from_document(_doc(utility={'kind': 'sensor_field', 'sources': 30, 'sites': 3,
                                                      'depot': 'origin'}))
        assert origin.utility.depot.tolist() == [0.0, 0.0]
        center = scenario_from_document(_doc(utility={'kind': 'sensor_field', 'sources': 30, 'sites': 3,
                                                      'width': 4.0, 'height': 2.0}))
        assert center.utility.depot.tolist() == [2.0, 1.0]

    def test_nested_blocks_share_sites(self):
        scenario = generate_sensor_scenario(0, trials=1)
        assert scenario.utility.site_of_strategy == tuple(list(range(10)) + list(range(5)) + [0, 1, 2, 0, 1, 0, 1])

    def test_field_redrawn_per_trial(self):
        scenario = generate_sensor_scenario(0, trials=2)
        (first, first_seed), (second, second_seed) = scenario.trial_utility(0), scenario.trial_utility(1)
        assert scenario.varies_by_trial
        assert first_seed != second_seed
        assert not np.array_equal(first.sources, second.sources)
        assert np.array_equal(scenario.trial_utility(1)[0].sites, second.sites)
        coverage = generate_coverage_scenario(seed=3)
        assert not coverage.varies_by_trial
        assert coverage.trial_utility(0) == (coverage.utility, None)


class TestFiles:

    def test_round_trip(self, tmp_path):
        scenario = generate_coverage_scenario(seed=3)
        path = tmp_path / 'scenario.yaml'
        save_scenario(scenario, path)
        loaded = load_scenario(path)
        assert loaded.scenario_hash == scenario.scenario_hash
        everything = set(range(1, scenario.partition.n + 1))
        assert loaded.utility.evaluate(everything) == scenario.utility.evaluate(everything)

    def test_generated_sensor_field_stays_compact(self, tmp_path):
        path = tmp_path / 'field.yaml'
        save_scenario(generate_sensor_scenario(5), path)
        assert 'sensor_field' in path.read_text()
        assert load_scenario(path).partition.n == 22

    @pytest.mark.parametrize('text', ['a: [1, 2', '- 1\n- 2\n'])
    def test_bad_files(self, tmp_path, text):
        path = tmp_path / 'bad.yaml'
        path.write_text(text)
        with pytest.raises(ConfigError):
            load_scenario(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_scenario(tmp_path / 'absent.yaml')


@pytest.mark.parametrize('name', ['sensor_field.yaml', 'coverage_small.yaml'])
def test_shipped_scenarios_load(name):
    scenario = load_scenario(Path(__file__).resolve().parent.parent / 'scenarios' / name)
    assert scenario.trials >= 1
    for seq in scenario.visit_sequences.values():
        seq.validate(scenario.partition, scenario.graph)

import copy
import json
import math
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner

from DistSubmod import cli
from utils.baselines import brute_force_opt
from utils.experiments import (
    RESULT_COLUMNS, distinct_sites_covered, generate_coverage_scenario, generate_sensor_scenario,
    improved_bound_factor, run_experiment, sequential_bound_factor, solver_summary, theorem_bound_factor,
    verify_bounds
)
from utils.scenario_io import load_scenario, scenario_from_document, sensor_field

MODULAR = {
    'scenario_id': 'modular-three',
    'utility': {'kind': 'modular', 'weights': [4.0, 1.0, 3.0, 2.0, 5.0, 0.5]},
    'agents': {'block_sizes': [2, 2, 2], 'budgets': [1, 1, 1]},
    'graph': {'kind': 'path'},
    'run': {'T': 20, 'samples': 5, 'seed': 2},
    'trials': 2,
    'solvers': ['DS', 'CG'],
}


class TestBoundFactors:

    def test_zero_curvature_limit(self):
        assert theorem_bound_factor(0.0, 10, 2, 50) == pytest.approx(0.8)
        assert theorem_bound_factor(1e-13, 10, 2, 50) == pytest.approx(0.8)
        assert improved_bound_factor(0.0, 10, 50) == pytest.approx(0.8)

    def test_full_curvature(self):
        expected = (1 - math.exp(-1)) * (1 - (2 * 3 * 1 + 1.5 + 1) * 3 / 100)
        assert theorem_bound_factor(1.0, 3, 1, 100) == pytest.approx(expected)
        assert sequential_bound_factor(1.0) == 0.5

    @pytest.mark.parametrize('c', [0.0, 0.3, 1.0])
    def test_improved_dominates(self, c):
        for d in (1, 2, 4):
            assert theorem_bound_factor(c, 5, d, 200) <= improved_bound_factor(c, 5, 200)

    def test_short_horizon_goes_negative(self):
        assert theorem_bound_factor(1.0, 10, 2, 50) < 0


class TestSensorScenario:

    def test_layout(self):
        scenario = generate_sensor_scenario(0, trials=1)
        assert scenario.partition.n == 22
        assert scenario.partition.total_budget == 10
        assert scenario.graph.diameter == 2
        assert scenario.solvers == ('DS',) + tuple(f"SEQ({k})" for k in 'abcdef')
        assert set(scenario.visit_sequences) == set('abcdef')

    def test_generator_argument(self):
        a = generate_sensor_scenario(np.random.default_rng(3), trials=1)
        b = generate_sensor_scenario(np.random.default_rng(3), trials=1)
        assert a.scenario_hash == b.scenario_hash

    def test_injective_placement_is_optimal(self):
        scenario = generate_sensor_scenario(1, trials=1)
        f = scenario.utility
        # agent 1 takes sites 6..10, agent 2 sites 4 and 5, agents 3..5 sites 3, 1, 2
        injective = {6, 7, 8, 9, 10, 14, 15, 18, 19, 22}
        assert distinct_sites_covered(injective, f) == 10
        _, best = brute_force_opt(f, scenario.partition)
        assert f.evaluate(injective) == best

    def test_shipped_document_matches_generator(self):
        shipped = load_scenario(Path(__file__).resolve().parent.parent / 'scenarios' / 'sensor_field.yaml')
        assert shipped.scenario_hash == generate_sensor_scenario(0).scenario_hash

    def test_sites_metric_only_for_placements(self, ring_of_six):
        assert distinct_sites_covered({1, 2}, ring_of_six) is None

    def test_each_trial_draws_its_own_field(self):
        scenario = generate_sensor_scenario(0, trials=3, T=5, samples=20)
        records = run_experiment(scenario, reference=False)
        sequential = [r for r in records if r.solver == 'SEQ(a)']
        assert len({r.utility_seed for r in sequential}) == 3
        assert len({r.value for r in sequential}) == 3
        for r in sequential:
            assert scenario.trial_utility(r.trial)[1] == r.utility_seed
            replayed = sensor_field(scenario.partition.block_sizes, seed=r.utility_seed)
            assert replayed.evaluate(r.selected) == r.value

    def test_fixed_field_when_per_trial_is_off(self):
        doc = copy.deepcopy(generate_sensor_scenario(0, trials=2, T=3, samples=5).document)
        doc['utility']['per_trial'] = False
        doc['solvers'] = ['SEQ(a)']
        records = run_experiment(scenario_from_document(doc), reference=False)
        assert [r.utility_seed for r in records] == [None, None]
        assert records[0].value == records[1].value

    def test_bounds_judged_against_each_trials_optimum(self):
        scenario = generate_sensor_scenario(0, trials=2, T=3, samples=5).with_overrides(solvers=('SEQ(a)',))
        records = run_experiment(scenario)
        assert all(r.bound_ok for r in records)
        optima = [brute_force_opt(scenario.trial_utility(t)[0], scenario.partition)[1] for t in (0, 1)]
        assert optima[0] != optima[1]
        assert all(r.value <= optima[r.trial] + 1e-9 for r in records)


class TestRunExperiment:

    def test_records_and_csv(self, tmp_path):
        scenario = generate_coverage_scenario(seed=4, trials=2, T=10, samples=20)
        out = tmp_path / 'results.csv'
        records = run_experiment(scenario, out=out)
        assert len(records) == 2 * 4
        assert [(r.trial, r.solver) for r in records[:4]] == [(0, s) for s in scenario.solvers]
        best = {r.trial: r.value for r in records if r.solver == 'BF'}
        for r in records:
            assert r.error is None
            assert r.value <= best[r.trial] + 1e-9
        assert all(r.bound_ok for r in records if r.solver in ('BF', 'SEQ(a)'))
        frame = pd.read_csv(out)
        assert list(frame.columns) == RESULT_COLUMNS
        assert len(frame) == 8

    def test_replay_is_byte_identical(self, tmp_path, monkeypatch):
        monkeypatch.setenv('DISTSUBMOD_RECORD_TIMING', 'false')
        scenario = generate_coverage_scenario(seed=6, trials=2, T=8, samples=15)
        first = tmp_path / 'first.csv'
        second = tmp_path / 'second.csv'
        run_experiment(scenario, out=first)
        run_experiment(scenario, out=second)
        assert first.read_bytes() == second.read_bytes()

    def test_worker_processes_match_serial(self, monkeypatch):
        monkeypatch.setenv('DISTSUBMOD_RECORD_TIMING', 'false')
        scenario = generate_coverage_scenario(seed=7, trials=3, T=6, samples=10, solvers=('DS', 'CG'))
        serial = run_experiment(scenario, reference=False)
        parallel = run_experiment(scenario, reference=False, workers=2)
        assert [r.to_row() for r in serial] == [r.to_row() for r in parallel]

    def test_guard_turns_into_error_record(self, monkeypatch):
        monkeypatch.setenv('DISTSUBMOD_COMBINATION_GUARD', '1')
        scenario = generate_coverage_scenario(seed=4, T=5, samples=10)
        records = run_experiment(scenario)
        by_solver = {r.solver: r for r in records}
        assert by_solver['BF'].error.startswith('GuardExceededError')
        assert by_solver['BF'].value is None
        assert by_solver['DS'].error is None
        assert all(r.bound_ok is None for r in records)

    def test_trace_files(self, tmp_path):
        scenario = generate_coverage_scenario(seed=5, T=4, samples=10)
        run_experiment(scenario, out=tmp_path / 'run.csv', trace=True, reference=False)
        traces = sorted((tmp_path / 'run_traces').glob('*.json'))
        assert len(traces) == 4
        ds = json.loads((tmp_path / 'run_traces' / 'coverage-5_DS_t000.json').read_text())
        assert len(ds['rounds']) == 4
        assert ds['rounds'][-1]['value'] is not None

    def test_summary(self):
        scenario = generate_coverage_scenario(seed=4, trials=2, T=5, samples=10)
        summary = solver_summary(pd.DataFrame([r.to_row() for r in run_experiment(scenario, reference=False)]))
        assert list(summary['solver']) == sorted(scenario.solvers)
        assert summary['runs'].tolist() == [2, 2, 2, 2]


class TestVerifyBounds:

    def test_modular_scenario_passes(self):
        scenario = scenario_from_document(MODULAR)
        records = run_experiment(scenario, reference=False)
        report = verify_bounds(records, scenario)
        assert report.curvature == pytest.approx(0.0, abs=1e-12)
        assert report.optimum == pytest.approx(12.0)
        assert report.theorem_factor == pytest.approx(0.85)
        assert report.passed
        assert len(report.checks) == 2 * 2 + 1
        assert report.to_dict()['pass_rate'] == 1.0

    def test_skipped_when_guard_exceeded(self, monkeypatch):
        monkeypatch.setenv('DISTSUBMOD_COMBINATION_GUARD', '1')
        scenario = scenario_from_document(MODULAR)
        report = verify_bounds(run_experiment(scenario, reference=False), scenario)
        assert report.skipped
        assert not report.passed

    def test_out_of_reach_notice_appears_once(self, monkeypatch):
        monkeypatch.setenv('DISTSUBMOD_ENUM_GUARD', '3')
        scenario = scenario_from_document(MODULAR)
        records = run_experiment(scenario, reference=False)
        assert all(r.fractional_value is None for r in records)
        report = verify_bounds(records, scenario)
        assert report.notice.count("exact F out of reach") == 1
        assert report.curvature == 1.0
        assert [c.quantity for c in report.checks] == ['mean f(rounded)']

    @pytest.mark.slow
    def test_fractional_guarantee_at_desk_scale(self):
        outcomes = []
        for seed in range(10):
            scenario = generate_coverage_scenario(seed=300 + seed, n=10, T=200, samples=5000, solvers=('DS',))
            report = verify_bounds(run_experiment(scenario, reference=False), scenario)
            outcomes.extend(c.passed for c in report.checks if c.quantity == 'F(x(T))')
        assert sum(outcomes) / len(outcomes) >= 0.95


@pytest.mark.slow
def test_sensor_field_comparison():
    scenario = generate_sensor_scenario(0, trials=50)
    frame = pd.DataFrame([r.to_row() for r in run_experiment(scenario, reference=False)])
    sites = frame.groupby('solver')['sites_covered'].mean()
    worst_sequential = sites.drop('DS').min()
    assert sites['DS'] >= 9.0
    assert sites['DS'] > worst_sequential
    assert frame['sites_covered'].max() <= 10
    # every trial is a fresh sensor field
    assert frame.groupby('trial')['utility_seed'].nunique().eq(1).all()
    assert frame['utility_seed'].nunique() == 50


class TestCli:

    def test_generate_run_summarize(self, tmp_path):
        runner = CliRunner()
        scenario_path = tmp_path / 'coverage.yaml'
        results = tmp_path / 'results.csv'

        generated = runner.invoke(cli, ['gen-scenario', '--kind', 'coverage', '--seed', '2',
                                        '--out', str(scenario_path)])
        assert generated.exit_code == 0, generated.output
        assert scenario_path.exists()

        ran = runner.invoke(cli, ['run', '--scenario', str(scenario_path), '--trials', '1', '--T', '5',
                                  '--samples', '10', '--out', str(results)])
        assert ran.exit_code == 0, ran.output
        assert len(pd.read_csv(results)) == 4

        summary = runner.invoke(cli, ['summarize', str(results)])
        assert summary.exit_code == 0, summary.output
        assert 'BF' in summary.output

    def test_solver_selection(self, tmp_path):
        runner = CliRunner()
        scenario_path = tmp_path / 'coverage.yaml'
        results = tmp_path / 'ds.csv'
        runner.invoke(cli, ['gen-scenario', '--kind', 'coverage', '--out', str(scenario_path)])
        ran = runner.invoke(cli, ['run', '--scenario', str(scenario_path), '--solver', 'DS', '--T', '3',
                                  '--samples', '5', '--consensus-rounds', 'diam', '--out', str(results)])
        assert ran.exit_code == 0, ran.output
        assert set(pd.read_csv(results)['solver']) == {'DS'}

    def test_missing_scenario_is_a_config_error(self, tmp_path):
        result = CliRunner().invoke(cli, ['run', '--scenario', str(tmp_path / 'absent.yaml')])
        assert result.exit_code == 1

    def test_bad_consensus_rounds(self):
        result = CliRunner().invoke(cli, ['run', '--consensus-rounds', 'often'])
        assert result.exit_code == 2

    def test_verify_prints_report(self, tmp_path):
        runner = CliRunner()
        scenario_path = tmp_path / 'modular.yaml'
        scenario_path.write_text(json.dumps(MODULAR))
        result = runner.invoke(cli, ['verify', '--scenario', str(scenario_path), '--trials', '1',
                                     '--out', str(tmp_path / 'report.json')])
        assert result.exit_code == 0, result.output
        report = json.loads((tmp_path / 'report.json').read_text())
        assert report['passed'] is True
        assert report['scenario_id'] == 'modular-three'

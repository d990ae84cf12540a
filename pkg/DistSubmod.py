"""
DistSubmod command line: run experiments, verify optimality bounds, generate scenarios
and summarize results files.

Exit codes: 0 success, 1 configuration error, 2 guard exceeded, 3 internal invariant violation.
"""
import functools
import json
import logging
import sys
from pathlib import Path

import click
import pandas as pd

from utils.config import configure_logging, validate_environment
from utils.errors import ConfigError, DistSubmodError
from utils.experiments import (
    generate_coverage_scenario, generate_sensor_scenario, run_experiment, solver_summary, verify_bounds
)
from utils.scenario_io import load_scenario, save_scenario

logger = logging.getLogger('distsubmod')


def _consensus_rounds(ctx, param, value):
    if value is None or value == 'diam':
        return value
    try:
        rounds = int(value)
    except ValueError:
        raise click.BadParameter("must be a positive integer or 'diam'")
    if rounds < 1:
        raise click.BadParameter("must be a positive integer or 'diam'")
    return rounds


def _exit_codes(command):
    """Report library errors on stderr and exit with their code"""
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except DistSubmodError as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(e.exit_code)
    return wrapper


def _scenario(path, seed, **overrides):
    if path:
        scenario = load_scenario(path)
    else:
        scenario = generate_sensor_scenario(seed if seed is not None else 0)
    return scenario.with_overrides(seed=seed, **overrides)


run_options = [
    click.option('--scenario', 'scenario_path', type=click.Path(dir_okay=False),
                 help='Scenario YAML file (default: the five-agent sensor field)'),
    click.option('--trials', type=int, help='Number of trials'),
    click.option('--seed', type=int, help='Master seed'),
    click.option('--T', 'T', type=int, help='Continuous greedy horizon'),
    click.option('--samples', type=int, help='Samples per agent per round'),
    click.option('--consensus-rounds', callback=_consensus_rounds, help="Consensus rounds per step: 1 or 'diam'"),
]


def with_run_options(command):
    for option in reversed(run_options):
        command = option(command)
    return command


@click.group()
@click.option('--log-level', default=None, help='Logging level (default from DISTSUBMOD_LOG_LEVEL)')
def cli(log_level):
    """Distributed submodular maximization experiments"""
    configure_logging(log_level)
    status = validate_environment()
    for warning in status['warnings']:
        logger.warning(warning)
    if not status['valid']:
        raise click.ClickException('; '.join(status['errors']))


@cli.command()
@with_run_options
@click.option('--solver', 'solvers', multiple=True, help='Solver: DS, CG, BF or SEQ(x); repeatable')
@click.option('--out', type=click.Path(dir_okay=False), help='Results CSV (default results/<scenario>.csv)')
@click.option('--trace', type=click.Choice(['on', 'off']), default='off', help='Write per-run trace files')
@click.option('--store/--no-store', default=None, help='Persist records into the results store')
@click.option('--workers', type=int, help='Worker processes for trials')
@_exit_codes
def run(scenario_path, trials, seed, T, samples, consensus_rounds, solvers, out, trace, store, workers):
    """Run every solver on every trial and write the results CSV"""
    scenario = _scenario(scenario_path, seed, trials=trials, T=T, samples=samples,
                         consensus_rounds=consensus_rounds, solvers=tuple(solvers) or None)
    out = Path(out or Path('results') / f"{scenario.scenario_id}.csv")
    records = run_experiment(scenario, out=out, trace=trace == 'on', store=store, workers=workers)
    failed = sum(r.error is not None for r in records)
    click.echo(f"{len(records)} records written to {out}" + (f" ({failed} failed)" if failed else ''))


@cli.command()
@with_run_options
@click.option('--out', type=click.Path(dir_okay=False), help='Write the bound report as JSON')
@_exit_codes
def verify(scenario_path, trials, seed, T, samples, consensus_rounds, out):
    """Check the optimality bounds of distributed and centralized continuous greedy"""
    scenario = _scenario(scenario_path, seed, trials=trials, T=T, samples=samples,
                         consensus_rounds=consensus_rounds, solvers=('DS', 'CG'))
    records = run_experiment(scenario, reference=False, store=False)
    report = verify_bounds(records, scenario)
    payload = json.dumps(report.to_dict(), indent=2, default=str)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(payload, encoding='utf-8')
    click.echo(payload)
    if report.skipped:
        click.echo(f"notice: {report.notice}", err=True)


@cli.command('gen-scenario')
@click.option('--kind', type=click.Choice(['sensor-field', 'coverage']), default='sensor-field')
@click.option('--seed', type=int, default=0, help='Generator seed')
@click.option('--trials', type=int, default=None)
@click.option('--T', 'T', type=int, default=None)
@click.option('--samples', type=int, default=None)
@click.option('--out', type=click.Path(dir_okay=False), required=True, help='Scenario YAML to write')
@_exit_codes
def gen_scenario(kind, seed, trials, T, samples, out):
    """Write a generated scenario as a YAML document"""
    if kind == 'sensor-field':
        scenario = generate_sensor_scenario(seed)
    else:
        scenario = generate_coverage_scenario(seed)
    scenario = scenario.with_overrides(trials=trials, T=T, samples=samples)
    save_scenario(scenario, out)
    click.echo(f"scenario {scenario.scenario_id} ({scenario.partition.n} strategies) written to {out}")


@cli.command()
@click.argument('results', type=click.Path(exists=True, dir_okay=False))
@_exit_codes
def summarize(results):
    """Per-solver means of value and distinct sites covered"""
    try:
        frame = pd.read_csv(results)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ConfigError(f"cannot read results file {results}: {e}")
    missing = {'solver', 'value', 'sites_covered', 'oracle_calls'} - set(frame.columns)
    if missing:
        raise ConfigError(f"results file lacks columns {sorted(missing)}")
    click.echo(solver_summary(frame).to_string(index=False))


if __name__ == '__main__':
    cli()

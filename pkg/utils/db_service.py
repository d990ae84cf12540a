"""
SQLAlchemy-based results store for DistSubmod.
Persists experiment runs and their records; queries come back as pandas DataFrames.
"""
import logging
from typing import Optional, Sequence

import pandas as pd
from sqlalchemy.orm import Session, sessionmaker

from .db_engine import create_db_engine, test_database_connection
from .db_models import ExperimentRun, ResultRow, create_tables
from .errors import ConfigError

logger = logging.getLogger(__name__)

RECORD_COLUMNS = [
    'run_id', 'scenario_id', 'scenario_hash', 'master_seed', 'solver', 'trial', 'seed', 'utility_seed', 'value',
    'fractional_value', 'sites_covered', 'oracle_calls', 'wall_ms', 'bound_ok', 'error', 'created_at'
]


class ResultService:
    """
    Session-per-call service over the results store. Construct with an engine (tests use
    an in-memory SQLite one) or let it build the configured engine.
    """

    def __init__(self, engine=None):
        self.engine = engine or create_db_engine()
        self.SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=self.engine)
        create_tables(self.engine)
        connection_test = test_database_connection(self.engine)
        self.db_available = connection_test['success']
        if not self.db_available:
            logger.warning("results store unavailable: %s", connection_test.get('error', 'unknown error'))

    def get_session(self) -> Session:
        if not self.db_available:
            raise ConfigError("results store is not available")
        return self.SessionLocal()

    def save_run(self, scenario, records: Sequence) -> int:
        """Store one experiment run with all its records and return the run id"""
        run = scenario.run
        session = self.get_session()
        try:
            experiment = ExperimentRun(
                scenario_id=scenario.scenario_id,
                scenario_hash=scenario.scenario_hash,
                master_seed=run.seed,
                trials=scenario.trials,
                settings={
                    'T': run.T,
                    'samples': list(run.samples) if isinstance(run.samples, tuple) else run.samples,
                    'consensus_rounds': run.consensus_rounds,
                    'solvers': list(scenario.solvers),
                },
            )
            for r in records:
                experiment.results.append(ResultRow(
                    solver=r.solver,
                    trial=r.trial,
                    seed=r.seed,
                    utility_seed=r.utility_seed,
                    value=r.value,
                    fractional_value=r.fractional_value,
                    sites_covered=r.sites_covered,
                    oracle_calls=r.oracle_calls,
                    wall_ms=r.wall_ms,
                    bound_ok=r.bound_ok,
                    selected=list(r.selected),
                    error=r.error,
                ))
            session.add(experiment)
            session.commit()
            logger.info("stored run %d for %s with %d records", experiment.id, scenario.scenario_id, len(records))
            return experiment.id
        except Exception:
            session.rollback()
            raise
        finally:
            session.close()

    def get_records(self, scenario_id: Optional[str] = None, run_id: Optional[int] = None) -> pd.DataFrame:
        """Stored records as a DataFrame, optionally filtered by scenario or run"""
        session = self.get_session()
        try:
            query = session.query(ResultRow, ExperimentRun).join(ExperimentRun, ResultRow.run_id == ExperimentRun.id)
            if scenario_id is not None:
                query = query.filter(ExperimentRun.scenario_id == scenario_id)
            if run_id is not None:
                query = query.filter(ExperimentRun.id == run_id)
            query = query.order_by(ExperimentRun.id, ResultRow.trial, ResultRow.id)

            data = []
            for row, experiment in query.all():
                data.append({
                    'run_id': experiment.id,
                    'scenario_id': experiment.scenario_id,
                    'scenario_hash': experiment.scenario_hash,
                    'master_seed': experiment.master_seed,
                    'solver': row.solver,
                    'trial': row.trial,
                    'seed': row.seed,
                    'utility_seed': row.utility_seed,
                    'value': row.value,
                    'fractional_value': row.fractional_value,
                    'sites_covered': row.sites_covered,
                    'oracle_calls': row.oracle_calls,
                    'wall_ms': row.wall_ms,
                    'bound_ok': row.bound_ok,
                    'error': row.error,
                    'created_at': experiment.created_at,
                })
            df = pd.DataFrame(data, columns=RECORD_COLUMNS)
            df['created_at'] = pd.to_datetime(df['created_at'])
            for column in ('value', 'fractional_value', 'sites_covered'):
                df[column] = pd.to_numeric(df[column], errors='coerce')
            return df
        finally:
            session.close()

    def solver_summary(self, scenario_id: str) -> pd.DataFrame:
        """Per-solver means over every stored error-free record of a scenario"""
        df = self.get_records(scenario_id=scenario_id)
        df = df[df['error'].isna()]
        if df.empty:
            return pd.DataFrame(columns=['solver', 'runs', 'mean_value', 'mean_sites_covered'])
        return df.groupby('solver', sort=True).agg(
            runs=('value', 'size'),
            mean_value=('value', 'mean'),
            mean_sites_covered=('sites_covered', 'mean'),
        ).reset_index()


__all__ = ['ResultService', 'RECORD_COLUMNS']

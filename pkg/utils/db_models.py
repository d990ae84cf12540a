"""
SQLAlchemy models for the DistSubmod results store.
Cross-database compatible models that work with both PostgreSQL and SQLite.
"""
from sqlalchemy import JSON, BigInteger, Boolean, Column, DateTime, Float, ForeignKey, Integer, String, Text
from sqlalchemy.orm import declarative_base, relationship
from sqlalchemy.sql import func

Base = declarative_base()


class ExperimentRun(Base):
    """One invocation of run_experiment on a scenario"""
    __tablename__ = 'experiment_runs'

    id = Column(Integer, primary_key=True, autoincrement=True)
    scenario_id = Column(String(255), nullable=False, index=True)
    scenario_hash = Column(String(64), nullable=False)
    master_seed = Column(Integer, nullable=False)
    trials = Column(Integer, nullable=False)
    settings = Column(JSON, nullable=True)  # T, samples, consensus rounds, solvers
    created_at = Column(DateTime, server_default=func.now())

    results = relationship("ResultRow", back_populates="run", cascade="all, delete-orphan")


class ResultRow(Base):
    """One solver on one trial"""
    __tablename__ = 'result_rows'

    id = Column(Integer, primary_key=True, autoincrement=True)
    run_id = Column(Integer, ForeignKey('experiment_runs.id', ondelete='CASCADE'), nullable=False)
    solver = Column(String(50), nullable=False)
    trial = Column(Integer, nullable=False)
    seed = Column(Integer, nullable=False)
    utility_seed = Column(BigInteger, nullable=True)  # per-trial sensor field seed
    value = Column(Float, nullable=True)
    fractional_value = Column(Float, nullable=True)
    sites_covered = Column(Integer, nullable=True)
    oracle_calls = Column(Integer, default=0)
    wall_ms = Column(Float, default=0.0)
    bound_ok = Column(Boolean, nullable=True)
    selected = Column(JSON, nullable=True)
    error = Column(Text, nullable=True)

    run = relationship("ExperimentRun", back_populates="results")


def create_tables(engine):
    """Create all tables in the database"""
    Base.metadata.create_all(engine)


__all__ = ['Base', 'ExperimentRun', 'ResultRow', 'create_tables']

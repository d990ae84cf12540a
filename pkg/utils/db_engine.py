"""
Database engine factory for the DistSubmod results store.
Provides a SQLAlchemy engine that works with both PostgreSQL and SQLite.
"""
import logging
from pathlib import Path
from typing import Optional
from urllib.parse import urlparse

from sqlalchemy import create_engine, text
from sqlalchemy.pool import StaticPool

from .config import get_database_mode, get_database_url

logger = logging.getLogger(__name__)


def create_db_engine(database_url: Optional[str] = None):
    """
    Create SQLAlchemy engine based on configuration, or for an explicit URL.
    Returns engine that works with PostgreSQL or SQLite.
    """
    database_url = database_url or get_database_url()

    if database_url.startswith('postgresql'):
        return create_engine(
            database_url,
            future=True,
            pool_pre_ping=True,
            echo=False
        )

    # SQLite; sqlite:// without a path is an in-memory database
    db_path = database_url.replace('sqlite:///', '', 1) if database_url.startswith('sqlite:///') else ''
    if db_path and db_path != ':memory:':
        Path(db_path).parent.mkdir(parents=True, exist_ok=True)
    return create_engine(
        database_url if database_url.startswith('sqlite') else f"sqlite:///{database_url}",
        future=True,
        echo=False,
        connect_args={
            "check_same_thread": False,
            "timeout": 30  # seconds to wait on a locked database
        },
        poolclass=StaticPool,
        pool_pre_ping=True
    )


def get_database_info():
    """Get information about the current results store (credentials are never exposed)"""
    database_mode = get_database_mode()
    database_url = get_database_url()

    if database_mode == 'postgres':
        parsed = urlparse(database_url)
        return {
            'type': 'PostgreSQL',
            'host': parsed.hostname or 'localhost',
            'port': parsed.port or 5432,
            'database': parsed.path.lstrip('/') if parsed.path else 'unknown'
        }

    db_path = Path(database_url.replace('sqlite:///', ''))
    return {
        'type': 'SQLite',
        'path': str(db_path),
        'exists': db_path.exists(),
        'size': db_path.stat().st_size if db_path.exists() else 0
    }


def test_database_connection(engine=None):
    """Test database connection and return status"""
    try:
        engine = engine or create_db_engine()
        with engine.connect() as conn:
            if engine.dialect.name == 'postgresql':
                result = conn.execute(text("SELECT version()"))
            else:
                result = conn.execute(text("SELECT sqlite_version()"))
            return {
                'success': True,
                'version': result.fetchone()[0],
                'mode': engine.dialect.name,
            }
    except Exception as e:
        logger.warning("results store connection failed: %s", e)
        return {
            'success': False,
            'error': str(e),
            'mode': get_database_mode(),
        }


__all__ = ['create_db_engine', 'get_database_info', 'test_database_connection']

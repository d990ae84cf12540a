"""
Configuration management for DistSubmod.
Reads settings from the environment (optionally a .env file) and provides defaults.
"""
import logging
import os
from functools import lru_cache
from typing import Any, Dict
from pathlib import Path

from .errors import ConfigError


@lru_cache(maxsize=None)
def load_environment() -> bool:
    """Load environment variables from .env file if it exists; only the first call reads the file"""
    try:
        from dotenv import load_dotenv
        env_path = Path('.env')
        if env_path.exists():
            return bool(load_dotenv(env_path))
    except ImportError:
        # python-dotenv not available, continue without it
        pass
    return False


def _int_setting(name: str, default: int, minimum: int = 1) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == '':
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{name} must be an integer, got {raw!r}")
    if value < minimum:
        raise ConfigError(f"{name} must be >= {minimum}, got {value}")
    return value


def _float_setting(name: str, default: float) -> float:
    raw = os.getenv(name)
    if raw is None or raw.strip() == '':
        return default
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(f"{name} must be a number, got {raw!r}")
    if value <= 0:
        raise ConfigError(f"{name} must be positive, got {value}")
    return value


def _flag_setting(name: str, default: bool) -> bool:
    return os.getenv(name, 'true' if default else 'false').lower() in ('1', 'true', 'yes', 'on')


def get_enumeration_guard() -> int:
    """Largest ground set size the exact 2^n routines accept"""
    load_environment()
    return _int_setting('DISTSUBMOD_ENUM_GUARD', 20)


def get_combination_guard() -> int:
    """Largest number of per-block combinations brute force will enumerate"""
    load_environment()
    return _int_setting('DISTSUBMOD_COMBINATION_GUARD', 1_000_000)


def get_tolerance() -> float:
    load_environment()
    return _float_setting('DISTSUBMOD_TOLERANCE', 1e-9)


def get_run_defaults() -> Dict[str, int]:
    """Default horizon and per-agent sample count"""
    load_environment()
    return {
        'T': _int_setting('DISTSUBMOD_DEFAULT_T', 50),
        'samples': _int_setting('DISTSUBMOD_DEFAULT_SAMPLES', 1000),
    }


def get_worker_count() -> int:
    load_environment()
    return _int_setting('DISTSUBMOD_WORKERS', 1)


def record_timing() -> bool:
    """Whether result records carry measured wall time (false keeps result files replayable byte for byte)"""
    load_environment()
    return _flag_setting('DISTSUBMOD_RECORD_TIMING', True)


def store_results() -> bool:
    load_environment()
    return _flag_setting('DISTSUBMOD_STORE_RESULTS', False)


def get_database_mode() -> str:
    """
    Determine which database the results store uses.
    Returns 'postgres' if PostgreSQL is configured, 'sqlite' otherwise.
    """
    load_environment()

    if os.getenv('DATABASE_URL') and _is_postgres_available():
        return 'postgres'

    return 'sqlite'


def _is_postgres_available() -> bool:
    """Check if psycopg2 is available for PostgreSQL connections"""
    try:
        import psycopg2  # noqa: F401
        return True
    except ImportError:
        return False


def get_database_url() -> str:
    """Get the results store URL based on the mode"""
    load_environment()

    if get_database_mode() == 'postgres':
        return os.getenv('DATABASE_URL', '')
    data_dir = Path(os.getenv('DISTSUBMOD_DATA_DIR', 'data'))
    data_dir.mkdir(parents=True, exist_ok=True)
    return f"sqlite:///{data_dir}/distsubmod.db"


def configure_logging(level: str = None):
    """Set up root logging once; level defaults to DISTSUBMOD_LOG_LEVEL"""
    load_environment()
    level_name = (level or os.getenv('DISTSUBMOD_LOG_LEVEL', 'INFO')).upper()
    numeric = logging.getLevelName(level_name)
    if not isinstance(numeric, int):
        raise ConfigError(f"Unknown log level {level_name!r}")
    logging.basicConfig(
        level=numeric,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
    )
    logging.getLogger().setLevel(numeric)


def get_app_config() -> Dict[str, Any]:
    """Get complete application configuration"""
    return {
        'enumeration_guard': get_enumeration_guard(),
        'combination_guard': get_combination_guard(),
        'tolerance': get_tolerance(),
        'run_defaults': get_run_defaults(),
        'workers': get_worker_count(),
        'record_timing': record_timing(),
        'store_results': store_results(),
        'database_mode': get_database_mode(),
        'app_name': os.getenv('APP_NAME', 'DistSubmod'),
        'app_version': os.getenv('APP_VERSION', '0.1.0'),
    }


def validate_environment() -> Dict[str, Any]:
    """Validate the current environment and return status information"""
    status = {
        'valid': True,
        'warnings': [],
        'errors': [],
        'config': None,
    }

    try:
        config = get_app_config()
    except ConfigError as e:
        status['valid'] = False
        status['errors'].append(str(e))
        return status
    status['config'] = config

    if config['enumeration_guard'] > 24:
        status['warnings'].append(
            f"Enumeration guard {config['enumeration_guard']} allows 2^n loops that take hours"
        )

    if os.getenv('DATABASE_URL') and not _is_postgres_available():
        status['warnings'].append("DATABASE_URL set but psycopg2 not installed, results store falls back to SQLite")

    return status


__all__ = [
    'load_environment', 'get_enumeration_guard', 'get_combination_guard', 'get_tolerance',
    'get_run_defaults', 'get_worker_count', 'record_timing', 'store_results',
    'get_database_mode', 'get_database_url', 'configure_logging', 'get_app_config',
    'validate_environment'
]

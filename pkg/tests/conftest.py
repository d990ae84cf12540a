import numpy as np
import pytest

from utils.matroid_graph import AgentPartition, CommGraph
from utils.oracle_core import WeightedCoverageUtility, modular_utility


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False,
                     help='run the long statistical reproductions')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def _isolated_settings(monkeypatch, tmp_path):
    """Keep tests away from a developer's .env and data directory"""
    for name in ('DISTSUBMOD_ENUM_GUARD', 'DISTSUBMOD_COMBINATION_GUARD', 'DISTSUBMOD_TOLERANCE',
                 'DISTSUBMOD_DEFAULT_T', 'DISTSUBMOD_DEFAULT_SAMPLES', 'DISTSUBMOD_WORKERS',
                 'DISTSUBMOD_RECORD_TIMING', 'DISTSUBMOD_STORE_RESULTS', 'DATABASE_URL'):
        monkeypatch.delenv(name, raising=False)
    monkeypatch.setenv('DISTSUBMOD_DATA_DIR', str(tmp_path / 'data'))


@pytest.fixture
def ring_of_six():
    """Six strategies over three agents; strategy p covers elements p and p+1 of a six-cycle"""
    weights = {'a': 3.0, 'b': 1.0, 'c': 2.0, 'd': 1.0, 'e': 2.0, 'f': 1.0}
    covers = [['a', 'b'], ['b', 'c'], ['c', 'd'], ['d', 'e'], ['e', 'f'], ['f', 'a']]
    return WeightedCoverageUtility(weights, covers)


@pytest.fixture
def three_pairs():
    return AgentPartition((2, 2, 2), (1, 1, 1))


@pytest.fixture
def small_modular():
    return modular_utility([4.0, 1.0, 3.0, 2.0, 5.0, 0.5])


@pytest.fixture
def ring5():
    return CommGraph.ring(5)


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)

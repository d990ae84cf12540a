"""
Scenario documents: YAML files validated against a JSON schema, turned into Scenario objects.

A scenario names one utility instance, the agents' blocks and budgets, the communication
graph, the run parameters and the solvers to compare. The field-by-field format is
documented in replit.md.
"""
import hashlib
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import jsonschema
import numpy as np
import yaml

from .baselines import VisitSequence, ring_visit_sequences
from .config import get_enumeration_guard, get_run_defaults
from .distributed_cg import RoundConfig
from .errors import ConfigError
from .matroid_graph import AgentPartition, CommGraph
from .oracle_core import (
    CoverageUtility, ValueOracle, WeightedCoverageUtility, is_monotone, is_submodular, modular_utility
)
from .sampled_gradient import Phase, substream

logger = logging.getLogger(__name__)

SOLVER_PATTERN = re.compile(r'^(DS|CG|BF|SEQ\(([A-Za-z0-9_]+)\))$')

_POINTS = {'type': 'array', 'items': {'type': 'array', 'items': {'type': 'number'}, 'minItems': 2, 'maxItems': 2}}

SCENARIO_SCHEMA: Dict[str, Any] = {
    'type': 'object',
    'required': ['scenario_id', 'utility', 'agents'],
    'properties': {
        'scenario_id': {'type': 'string', 'minLength': 1},
        'utility': {
            'type': 'object',
            'required': ['kind'],
            'properties': {'kind': {'enum': ['coverage2d', 'weighted_coverage', 'modular', 'sensor_field']}},
            'allOf': [
                {'if': {'properties': {'kind': {'const': 'coverage2d'}}},
                 'then': {'required': ['sources', 'sites', 'site_of_strategy'],
                          'properties': {'sources': _POINTS, 'sites': _POINTS,
                                         'site_of_strategy': {'type': 'array', 'items': {'type': 'integer', 'minimum': 0}},
                                         'depot': {'type': 'array', 'items': {'type': 'number'}, 'minItems': 2, 'maxItems': 2}}}},
                {'if': {'properties': {'kind': {'const': 'weighted_coverage'}}},
                 'then': {'required': ['weights', 'covers'],
                          'properties': {'weights': {'type': 'object', 'additionalProperties': {'type': 'number', 'minimum': 0}},
                                         'covers': {'type': 'array', 'items': {'type': 'array', 'items': {'type': 'string'}}}}}},
                {'if': {'properties': {'kind': {'const': 'modular'}}},
                 'then': {'required': ['weights'],
                          'properties': {'weights': {'type': 'array', 'items': {'type': 'number', 'minimum': 0}}}}},
                {'if': {'properties': {'kind': {'const': 'sensor_field'}}},
                 'then': {'properties': {'sources': {'type': 'integer', 'minimum': 1},
                                         'sites': {'type': 'integer', 'minimum': 1},
                                         'width': {'type': 'number', 'exclusiveMinimum': 0},
                                         'height': {'type': 'number', 'exclusiveMinimum': 0},
                                         'seed': {'type': 'integer', 'minimum': 0},
                                         'depot': {'enum': ['center', 'origin', 'centroid']},
                                         'per_trial': {'type': 'boolean'}}}},
            ],
        },
        'agents': {
            'type': 'object',
            'required': ['block_sizes', 'budgets'],
            'properties': {
                'block_sizes': {'type': 'array', 'items': {'type': 'integer', 'minimum': 1}, 'minItems': 1},
                'budgets': {'type': 'array', 'items': {'type': 'integer', 'minimum': 1}, 'minItems': 1},
            },
        },
        'graph': {
            'type': 'object',
            'properties': {
                'kind': {'enum': ['ring', 'path', 'complete', 'custom']},
                'edges': {'type': ['array', 'null'],
                          'items': {'type': 'array', 'items': {'type': 'integer'}, 'minItems': 2, 'maxItems': 2}},
            },
        },
        'run': {
            'type': 'object',
            'properties': {
                'T': {'type': 'integer', 'minimum': 1},
                'samples': {'oneOf': [{'type': 'integer', 'minimum': 1},
                                      {'type': 'array', 'items': {'type': 'integer', 'minimum': 1}}]},
                'consensus_rounds': {'oneOf': [{'type': 'integer', 'minimum': 1}, {'const': 'diam'}]},
                'seed': {'type': 'integer', 'minimum': 0},
            },
        },
        'trials': {'type': 'integer', 'minimum': 1},
        'solvers': {'type': 'array', 'items': {'type': 'string', 'pattern': SOLVER_PATTERN.pattern}},
        'visit_sequences': {'oneOf': [
            {'const': 'ring'},
            {'type': 'object', 'additionalProperties': {'type': 'array', 'items': {'type': 'integer', 'minimum': 1}}},
        ]},
    },
}


@dataclass
class Scenario:
    """Everything needed to replay an experiment; `document` is its serialized form"""
    scenario_id: str
    utility: ValueOracle
    partition: AgentPartition
    graph: CommGraph
    run: RoundConfig
    trials: int = 1
    solvers: Tuple[str, ...] = ('DS',)
    visit_sequences: Dict[str, VisitSequence] = field(default_factory=dict)
    document: Dict[str, Any] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.utility.n != self.partition.n:
            raise ConfigError(f"utility has {self.utility.n} strategies but the blocks cover {self.partition.n}")
        if self.graph.agent_count != self.partition.agent_count:
            raise ConfigError(f"graph has {self.graph.agent_count} agents, partition has {self.partition.agent_count}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if isinstance(self.run.samples, tuple) and len(self.run.samples) != self.partition.agent_count:
            raise ConfigError("need one sample count per agent")
        self.solvers = tuple(self.solvers)
        for name in self.solvers:
            match = SOLVER_PATTERN.match(name)
            if not match:
                raise ConfigError(f"unknown solver {name!r}")
            if match.group(2) and match.group(2) not in self.visit_sequences:
                raise ConfigError(f"solver {name} refers to an undefined visit sequence")
        for seq in self.visit_sequences.values():
            seq.validate(self.partition, self.graph)
        if not self.document:
            self.document = scenario_to_document(self)

    @property
    def scenario_hash(self) -> str:
        return scenario_hash(self.document)

    @property
    def varies_by_trial(self) -> bool:
        """True when every trial draws its own sensor field"""
        utility_doc = self.document.get('utility') or {}
        return utility_doc.get('kind') == 'sensor_field' and utility_doc.get('per_trial', True)

    def trial_utility(self, trial: int) -> Tuple[ValueOracle, Optional[int]]:
        """
        Utility for one trial and the field seed it was drawn with. Sensor fields are
        redrawn per trial from the (trial, scenario) substream of the field seed; every
        other utility is shared by all trials and comes back with seed None.
        """
        if not self.varies_by_trial:
            return self.utility, None
        params = {k: v for k, v in self.document['utility'].items() if k not in ('kind', 'per_trial')}
        field_seed = int(substream(params.get('seed', 0), trial, 0, 0, Phase.SCENARIO).integers(2 ** 32))
        params['seed'] = field_seed
        return sensor_field(self.partition.block_sizes, **params), field_seed

    def with_overrides(self, **changes) -> 'Scenario':
        """Copy with run parameters, trials or solvers replaced"""
        run_keys = {'T', 'samples', 'consensus_rounds', 'seed'}
        run_changes = {k: v for k, v in changes.items() if k in run_keys and v is not None}
        other = {k: v for k, v in changes.items() if k not in run_keys and v is not None}
        doc = json.loads(json.dumps(self.document))
        doc.setdefault('run', {}).update({k: (list(v) if isinstance(v, tuple) else v) for k, v in run_changes.items()})
        for key, value in other.items():
            doc[key] = list(value) if isinstance(value, tuple) else value
        return scenario_from_document(doc)


def scenario_hash(document: Dict[str, Any]) -> str:
    """sha256 of the canonical JSON form of a scenario document"""
    canonical = json.dumps(document, sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def sensor_field(block_sizes, sources: int = 2000, sites: int = 10, width: float = 1.0, height: float = 1.0,
                 seed: int = 0, depot: str = 'center') -> CoverageUtility:
    """
    Sources and candidate sites uniform in a width x height field. Agent i's block maps
    onto the first |P_i| sites, so blocks are nested and several agents may compete for
    the same site.
    """
    if max(block_sizes) > sites:
        raise ConfigError(f"a block of size {max(block_sizes)} needs more than {sites} sites")
    rng = substream(seed, 0, 0, 0, Phase.SCENARIO)
    scale = np.array([width, height], dtype=np.float64)
    source_points = rng.random((sources, 2)) * scale
    site_points = rng.random((sites, 2)) * scale
    if depot == 'center':
        depot_point = scale / 2.0
    elif depot == 'origin':
        depot_point = np.zeros(2)
    elif depot == 'centroid':
        depot_point = source_points.mean(axis=0)
    else:
        raise ConfigError(f"unknown depot {depot!r}")
    mapping = [b for size in block_sizes for b in range(size)]
    return CoverageUtility(source_points, site_points, mapping, depot=depot_point)


def utility_from_document(doc: Dict[str, Any], block_sizes=None) -> ValueOracle:
    kind = doc.get('kind')
    if kind == 'coverage2d':
        return CoverageUtility(doc['sources'], doc['sites'], doc['site_of_strategy'], depot=doc.get('depot'))
    if kind == 'weighted_coverage':
        return WeightedCoverageUtility(doc['weights'], doc['covers'])
    if kind == 'modular':
        return modular_utility(doc['weights'])
    if kind == 'sensor_field':
        if block_sizes is None:
            raise ConfigError("sensor_field utility needs the agents' block sizes")
        params = {k: v for k, v in doc.items() if k not in ('kind', 'per_trial')}
        return sensor_field(block_sizes, **params)
    raise ConfigError(f"unknown utility kind {kind!r}")


def audit_utility(utility: ValueOracle):
    """
    Exhaustive monotonicity and submodularity check for utilities small enough to
    enumerate; larger ones are accepted as they are. The audit's evaluations do not
    count towards the oracle call counter.
    """
    if utility.n > get_enumeration_guard():
        return
    if not is_monotone(utility):
        raise ConfigError(f"{utility.kind or type(utility).__name__} utility is not monotone")
    if not is_submodular(utility):
        raise ConfigError(f"{utility.kind or type(utility).__name__} utility is not submodular")
    utility.reset_counter()


def _visit_sequences(entry, partition: AgentPartition) -> Dict[str, VisitSequence]:
    if entry is None:
        return {}
    if entry == 'ring':
        return ring_visit_sequences(partition.agent_count)
    return {key: VisitSequence(tuple(route), name=f"SEQ({key})") for key, route in entry.items()}


def scenario_from_document(doc: Dict[str, Any]) -> Scenario:
    """Validate a scenario document and build the Scenario it describes"""
    try:
        jsonschema.validate(instance=doc, schema=SCENARIO_SCHEMA)
    except jsonschema.ValidationError as e:
        location = '/'.join(str(p) for p in e.absolute_path) or '<root>'
        raise ConfigError(f"scenario document invalid at {location}: {e.message}")

    defaults = get_run_defaults()
    agents = doc['agents']
    partition = AgentPartition(tuple(agents['block_sizes']), tuple(agents['budgets']))
    graph_doc = doc.get('graph') or {}
    graph = CommGraph.from_kind(graph_doc.get('kind', 'ring'), partition.agent_count, graph_doc.get('edges'))
    run_doc = doc.get('run') or {}
    samples = run_doc.get('samples', defaults['samples'])
    run = RoundConfig(
        T=run_doc.get('T', defaults['T']),
        samples=tuple(samples) if isinstance(samples, list) else samples,
        consensus_rounds=run_doc.get('consensus_rounds', 1),
        seed=run_doc.get('seed', 0),
    )
    utility = utility_from_document(doc['utility'], partition.block_sizes)
    audit_utility(utility)
    return Scenario(
        scenario_id=doc['scenario_id'],
        utility=utility,
        partition=partition,
        graph=graph,
        run=run,
        trials=doc.get('trials', 1),
        solvers=tuple(doc.get('solvers', ['DS'])),
        visit_sequences=_visit_sequences(doc.get('visit_sequences'), partition),
        document=doc,
    )


def scenario_to_document(scenario: Scenario) -> Dict[str, Any]:
    run = scenario.run
    return {
        'scenario_id': scenario.scenario_id,
        'utility': scenario.utility.to_document(),
        'agents': {'block_sizes': list(scenario.partition.block_sizes), 'budgets': list(scenario.partition.budgets)},
        'graph': {'kind': 'custom', 'edges': [list(e) for e in scenario.graph.edges]},
        'run': {
            'T': run.T,
            'samples': list(run.samples) if isinstance(run.samples, tuple) else run.samples,
            'consensus_rounds': run.consensus_rounds,
            'seed': run.seed,
        },
        'trials': scenario.trials,
        'solvers': list(scenario.solvers),
        'visit_sequences': {k: list(v.agents) for k, v in scenario.visit_sequences.items()},
    }


def load_scenario(path: Union[str, Path]) -> Scenario:
    path = Path(path)
    try:
        with path.open('r', encoding='utf-8') as fh:
            doc = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"scenario file {path} not found")
    except yaml.YAMLError as e:
        raise ConfigError(f"scenario file {path} is not valid YAML: {e}")
    if not isinstance(doc, dict):
        raise ConfigError(f"scenario file {path} does not hold a mapping")
    scenario = scenario_from_document(doc)
    logger.info("loaded scenario %s from %s (n=%d, agents=%d)", scenario.scenario_id, path,
                scenario.partition.n, scenario.partition.agent_count)
    return scenario


def save_scenario(scenario: Scenario, path: Union[str, Path], document: Optional[Dict[str, Any]] = None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', encoding='utf-8') as fh:
        yaml.safe_dump(document or scenario.document, fh, sort_keys=False, default_flow_style=None)


__all__ = [
    'SCENARIO_SCHEMA', 'SOLVER_PATTERN', 'Scenario', 'scenario_hash', 'sensor_field', 'utility_from_document',
    'audit_utility', 'scenario_from_document', 'scenario_to_document', 'load_scenario', 'save_scenario'
]

"""
Scenario Configuration
Load YAML scenario files into validated ScenarioSpec objects, with per-scenario presets and sweeps
"""

import itertools
import logging
import os
from dataclasses import asdict, fields
from pathlib import Path
from typing import Dict, List, Optional

import yaml
from dotenv import load_dotenv

from episodic_memory import MemoryConfig
from exploration import ExplorationConfig
from world_sim import AgentConfig, OracleSettings, ScenarioSpec

logger = logging.getLogger(__name__)

DEFAULT_OUTPUT_DIR = 'results'

# Short names accepted under `memory:` next to the field names
MEMORY_ALIASES = {
    'C': 'place_size',
    'W': 'yaw_window',
    'R': 'update_frequency',
    'K': 'top_k',
    'c': 'merge_score',
    'h': 'task_threshold',
}

# Keys that may hold a list; each combination becomes one scenario
SWEEP_KEYS = ('task_a', 'task_b', 'memory_task', 'variant', 'policy', 'stream')

TOP_LEVEL_KEYS = {
    'scenario': str, 'map_side': int, 'seed': int, 'variant': str, 'policy': str, 'stream': str,
    'task_a': str, 'task_b': str, 'memory_task': str, 'budget': int, 'task_cap': int,
    'move_ticks': int, 'fov_radius': int, 'fov_half_angle': (int, float),
}
SECTIONS = {
    'memory': MemoryConfig,
    'explore': ExplorationConfig,
    'agent': AgentConfig,
    'oracle': OracleSettings,
}

# Memory presets per scenario kind
SCENARIO_PRESETS = {
    'aba_sparse': {'search_buffer': True},
    'random_plains': {'search_buffer': True},
    'long_instruction': {'capacity': 20_000, 'search_buffer': True},
    'long_navigation': {'capacity': 20_000},
    'memory_task': {'capacity': 2_000},
    'exploration_only': {},
}


class ScenarioConfigError(ValueError):
    """Invalid scenario file; key_path is the dotted path of the offending key."""

    def __init__(self, key_path: str, message: str):
        super().__init__(f"{key_path}: {message}" if key_path else message)
        self.key_path = key_path


def load_settings() -> Dict[str, object]:
    """Environment overrides (.env is read if present)."""
    load_dotenv()
    jobs = os.getenv('PLACEMEM_JOBS', '1')
    try:
        jobs = max(1, int(jobs))
    except ValueError:
        raise ScenarioConfigError('PLACEMEM_JOBS', f"expected an integer, got '{jobs}'")
    return {
        'output_dir': os.getenv('PLACEMEM_OUTPUT_DIR', DEFAULT_OUTPUT_DIR),
        'jobs': jobs,
    }


def _field_types(cls) -> Dict[str, type]:
    types = {}
    for f in fields(cls):
        default = f.default
        if isinstance(default, bool):
            types[f.name] = bool
        elif isinstance(default, float):
            types[f.name] = (int, float)
        elif isinstance(default, int):
            types[f.name] = int
        elif isinstance(default, str):
            types[f.name] = str
        else:
            types[f.name] = object
    return types


def _check_type(key_path: str, value, expected):
    if value is None:
        raise ScenarioConfigError(key_path, "value must not be empty")
    if expected is object:
        return
    if expected is int or expected == (int, float):
        if isinstance(value, bool) or not isinstance(value, expected):
            raise ScenarioConfigError(key_path, f"expected a number, got {value!r}")
    elif not isinstance(value, expected):
        raise ScenarioConfigError(key_path, f"expected {expected.__name__}, got {value!r}")


def _build_section(name: str, cls, values: dict, preset: Optional[dict] = None):
    if not isinstance(values, dict):
        raise ScenarioConfigError(name, f"expected a mapping, got {type(values).__name__}")
    types = _field_types(cls)
    kwargs = dict(preset or {})
    reverse = {}
    for key, value in values.items():
        field_name = MEMORY_ALIASES.get(key, key) if cls is MemoryConfig else key
        if field_name not in types:
            raise ScenarioConfigError(f"{name}.{key}", "unknown key")
        _check_type(f"{name}.{key}", value, types[field_name])
        kwargs[field_name] = value
        reverse[field_name] = key
    try:
        return cls(**kwargs)
    except ValueError as exc:
        field_name = str(exc).split()[0]
        raise ScenarioConfigError(f"{name}.{reverse.get(field_name, field_name)}", str(exc)) from exc


def spec_from_document(doc: dict) -> ScenarioSpec:
    """
    Build one ScenarioSpec from a parsed scenario document (no list-valued keys).

    Raises:
        ScenarioConfigError: unknown keys, wrong types or invalid values, with the key path
    """
    if not isinstance(doc, dict):
        raise ScenarioConfigError('', f"scenario document must be a mapping, got {type(doc).__name__}")
    top = {}
    sections = {}
    memory_doc = dict(doc.get('memory') or {})
    if 'variant' in memory_doc:
        if 'variant' in doc and doc['variant'] != memory_doc['variant']:
            raise ScenarioConfigError('memory.variant', "conflicts with top-level variant")
        top['variant'] = memory_doc.pop('variant')
    for key, value in doc.items():
        if key in SECTIONS:
            continue
        if key not in TOP_LEVEL_KEYS:
            raise ScenarioConfigError(key, "unknown key")
        _check_type(key, value, TOP_LEVEL_KEYS[key])
        top[key] = value

    scenario = top.get('scenario', 'aba_sparse')
    preset = SCENARIO_PRESETS.get(scenario, {})
    sections['memory'] = _build_section('memory', MemoryConfig, memory_doc, preset)
    if 'explore' in doc:
        side = top.get('map_side') or (200 if str(scenario).startswith('long_') else 100)
        base = asdict(ExplorationConfig.for_world(side))
        if 'fov_radius' in top:
            base['fov_radius'] = top['fov_radius']
        sections['explore'] = _build_section('explore', ExplorationConfig, doc['explore'] or {}, base)
    for name in ('agent', 'oracle'):
        if name in doc:
            sections[name] = _build_section(name, SECTIONS[name], doc[name] or {})

    try:
        return ScenarioSpec(**top, **sections)
    except ValueError as exc:
        key = str(exc).split()[0]
        raise ScenarioConfigError(key if key in TOP_LEVEL_KEYS else '', str(exc)) from exc


def expand_document(doc: dict) -> List[dict]:
    """One document per combination of list-valued sweep keys, in file order."""
    if not isinstance(doc, dict):
        raise ScenarioConfigError('', f"scenario document must be a mapping, got {type(doc).__name__}")
    sweeps = [(k, doc[k]) for k in SWEEP_KEYS if isinstance(doc.get(k), list)]
    for key, values in sweeps:
        if not values:
            raise ScenarioConfigError(key, "sweep list must not be empty")
    if not sweeps:
        return [doc]
    names = [k for k, _ in sweeps]
    out = []
    for combo in itertools.product(*(v for _, v in sweeps)):
        expanded = dict(doc)
        expanded.update(zip(names, combo))
        out.append(expanded)
    return out


def load_scenarios(path) -> List[ScenarioSpec]:
    """
    Read a YAML scenario file.

    The file holds one document or a list of documents; list-valued sweep keys
    (task_a, task_b, variant, ...) expand into one scenario per combination.
    """
    path = Path(path)
    if not path.exists():
        raise ScenarioConfigError('', f"scenario file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ScenarioConfigError('', f"cannot parse {path}: {exc}") from exc
    docs = data if isinstance(data, list) else [data]
    specs = []
    for i, doc in enumerate(docs):
        try:
            for expanded in expand_document(doc):
                specs.append(spec_from_document(expanded))
        except ScenarioConfigError as exc:
            if len(docs) == 1:
                raise
            path_key = f"[{i}].{exc.key_path}" if exc.key_path else f"[{i}]"
            raise ScenarioConfigError(path_key, str(exc).split(': ', 1)[-1]) from exc
    logger.info("Loaded %d scenario(s) from %s", len(specs), path)
    return specs


def spec_to_document(spec: ScenarioSpec) -> dict:
    """Plain document that spec_from_document turns back into an equal spec."""
    doc = {
        'scenario': spec.scenario,
        'map_side': spec.map_side,
        'seed': spec.seed,
        'variant': spec.variant,
        'policy': spec.policy,
        'stream': spec.stream,
        'task_a': spec.task_a,
        'task_b': spec.task_b,
        'memory_task': spec.memory_task,
        'budget': spec.budget,
        'move_ticks': spec.move_ticks,
        'fov_radius': spec.fov_radius,
        'fov_half_angle': spec.fov_half_angle,
        'memory': asdict(spec.memory),
        'explore': asdict(spec.explore),
        'agent': asdict(spec.agent),
        'oracle': asdict(spec.oracle),
    }
    if spec.task_cap is not None:
        doc['task_cap'] = spec.task_cap
    return doc


def with_seed(spec: ScenarioSpec, seed: int) -> ScenarioSpec:
    """Copy of spec for another episode seed (the oracle keeps its own seed)."""
    doc = spec_to_document(spec)
    doc['seed'] = seed
    return spec_from_document(doc)


def with_variant(spec: ScenarioSpec, variant: str) -> ScenarioSpec:
    doc = spec_to_document(spec)
    doc['variant'] = variant
    return spec_from_document(doc)

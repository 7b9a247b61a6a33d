"""Чтение сценария из INI файла и вычисление его хэша."""
import configparser
import hashlib
import json
import logging
import math
from typing import Any, Dict, Tuple, Type

from pydantic import BaseModel, ValidationError

from app.errors import ScenarioError
from app.models.geo import DegradationRule, LinkParams, NodeSpec
from app.models.scenario import ConsensusConfig, FailureConfig, PartitionConfig, PPOConfig, RunConfig, Scenario
from app.models.task import WorkloadConfig


logger = logging.getLogger('scenario_file')

TUPLE_KEYS = frozenset({'seeds', 'sweep_rates', 'hidden_sizes', 'crash_window_ms', 'turnout_interval_min',
                        'grid_fractions', 'grid_delays_ms'})

SCENARIO_KEYS = {'id': 'scenario_id', 'mu_e': 'mu_e', 'mu_t': 'mu_t'}
TOPOLOGY_KEYS = frozenset({'rmu_count', 'turnout_count', 'spacing_m', 'topology_seed'})
GRID_KEYS = {'grid_fractions': 'fractions', 'grid_delays_ms': 'delays_ms', 'grid_seed': 'seed'}

SECTIONS: Dict[str, Tuple[str, Type[BaseModel]]] = {
    'link': ('link', LinkParams),
    'workload': ('workload', WorkloadConfig),
    'partition': ('partition', PartitionConfig),
    'ppo': ('ppo', PPOConfig),
    'consensus': ('consensus', ConsensusConfig),
    'failure': ('failure', FailureConfig),
    'run': ('run', RunConfig),
}


def _value(text: str, as_tuple: bool = False) -> Any:
    text = text.strip()
    if as_tuple:
        return tuple(_value(part) for part in text.split(',') if part.strip())
    lowered = text.lower()
    if lowered in ('', 'none'):
        return None
    if lowered in ('inf', '+inf', 'infinity'):
        return math.inf
    return text


def _fields(section: configparser.SectionProxy, model: Type[BaseModel],
            exclude: frozenset = frozenset()) -> Dict[str, Any]:
    allowed = set(model.model_fields) - exclude
    data = {}
    for key, raw in section.items():
        if key not in allowed:
            raise ScenarioError(f'Unknown key "{key}" in section [{section.name}]')
        data[key] = _value(raw, key in TUPLE_KEYS)
    return data


def _node(node_id: str, section: configparser.SectionProxy) -> Dict[str, Any]:
    data: Dict[str, Any] = {'node_id': node_id}
    position = {}
    for key, raw in section.items():
        if key in ('lat', 'lon'):
            position[key] = _value(raw)
        elif key in NodeSpec.model_fields and key not in ('node_id', 'position'):
            data[key] = _value(raw)
        else:
            raise ScenarioError(f'Unknown key "{key}" in section [{section.name}]')
    data['position'] = position
    return data


def _template(section: configparser.SectionProxy) -> Dict[str, Dict[str, Any]]:
    mapping: Dict[str, Dict[str, Any]] = {'template_flops': {}, 'template_memory_mb': {}}
    for key, raw in section.items():
        prefix, _, name = key.partition('.')
        target = {'flops': 'template_flops', 'memory_mb': 'template_memory_mb'}.get(prefix)
        if target is None or not name:
            raise ScenarioError(f'Unknown key "{key}" in section [template], expected flops.<name> '
                                f'or memory_mb.<name>')
        mapping[target][name] = _value(raw)
    return mapping


def parse_scenario(text: str, source: str = '<string>') -> Scenario:
    """
    Разобрать текст сценария в формате INI.

    Args:
        text (str): Содержимое файла
        source (str): Имя источника для сообщений об ошибках

    Raises:
        ScenarioError: Синтаксическая ошибка, неизвестная секция или ключ, недопустимые значения

    Returns:
        Scenario: Полностью проверенный сценарий
    """

    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # type: ignore
    try:
        parser.read_string(text, source=source)
    except configparser.Error as err:
        raise ScenarioError(f'{source}: {err}') from err

    data: Dict[str, Any] = {}
    topology: Dict[str, Any] = {'nodes': []}
    for name in parser.sections():
        section = parser[name]
        if name == 'scenario':
            for key, raw in section.items():
                if key in SCENARIO_KEYS:
                    data[SCENARIO_KEYS[key]] = _value(raw)
                elif key in TOPOLOGY_KEYS:
                    topology[key] = _value(raw)
                else:
                    raise ScenarioError(f'Unknown key "{key}" in section [scenario]')
        elif name.startswith('node:'):
            topology['nodes'].append(_node(name[len('node:'):], section))
        elif name == 'degradation':
            rule, grid = {}, {}
            for key, raw in section.items():
                if key in GRID_KEYS:
                    grid[GRID_KEYS[key]] = _value(raw, key in TUPLE_KEYS)
                elif key in DegradationRule.model_fields:
                    rule[key] = _value(raw)
                else:
                    raise ScenarioError(f'Unknown key "{key}" in section [degradation]')
            data['degradation'] = rule
            data['degradation_grid'] = grid
        elif name == 'template':
            data.setdefault('workload', {}).update(_template(section))
        elif name in SECTIONS:
            target, model = SECTIONS[name]
            exclude = frozenset({'template_flops', 'template_memory_mb'}) if name == 'workload' else frozenset()
            if name == 'link':
                topology['link'] = _fields(section, model)
            else:
                data.setdefault(target, {}).update(_fields(section, model, exclude))
        else:
            raise ScenarioError(f'{source}: unknown section [{name}]')
    data['topology'] = topology

    try:
        scenario = Scenario.model_validate(data)
    except ValidationError as err:
        raise ScenarioError(f'{source}: {err}') from err
    logger.info(f'Loaded scenario "{scenario.scenario_id}" from {source}')
    return scenario


def load_scenario(path: str) -> Scenario:
    """
    Прочитать сценарий из файла.

    Raises:
        ScenarioError: Файл не прочитан или содержит ошибку
    """

    try:
        with open(path, 'rt', encoding='utf8') as file:
            text = file.read()
    except OSError as err:
        raise ScenarioError(f'Cannot read scenario {path}: {err}') from err
    return parse_scenario(text, path)


def scenario_hash(scenario: Scenario) -> str:
    """SHA-256 канонического JSON представления сценария."""
    canonical = json.dumps(scenario.model_dump(), sort_keys=True, separators=(',', ':'), default=str)
    return hashlib.sha256(canonical.encode('utf8')).hexdigest()

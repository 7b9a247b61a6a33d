"""Разбиение графа задачи на конвейеры по функции сродства."""
import math
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.errors import InvalidInputError, InvariantError
from app.models.scenario import PartitionConfig
from app.models.task import ResourceProfile
from app.workload import TaskGraph


logger = logging.getLogger('partition')


@dataclass(frozen=True)
class Pipeline:
    """Конвейер: упорядоченная группа подзадач, исполняемая на одном узле."""

    pipeline_id: int
    members: Tuple[int, ...]
    aggregate_profile: ResourceProfile
    peak_profile: ResourceProfile


@dataclass
class PartitionReport:
    """Результат проверки разбиения."""

    n_pipelines: int
    cross_edges: int
    chain_edges: List[Tuple[int, int]] = field(default_factory=list)


@dataclass
class AffinityStep:
    """Решение жадного алгоритма для одной подзадачи."""

    subtask_id: int
    scores: List[float]
    chosen: int


def resource_vectors(graph: TaskGraph) -> Dict[int, np.ndarray]:
    """
    Векторы ресурсов подзадач, нормированные на покомпонентный максимум по графу.

    Returns:
        Dict[int, np.ndarray]: Вектор (cpu, memory, asic) для каждой подзадачи
    """

    raw = {sid: np.array([s.profile.cpu_gflops, s.profile.memory_mb, float(s.profile.needs_asic)])
           for sid, s in graph.subtasks.items()}
    scale = np.max(np.stack(list(raw.values())), axis=0)
    scale[scale == 0] = 1.0
    return {sid: vector / scale for sid, vector in raw.items()}


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Косинус угла между векторами, 0 при нулевой норме."""
    norm = float(np.linalg.norm(a) * np.linalg.norm(b))
    if norm == 0.0:
        return 0.0
    return float(np.dot(a, b) / norm)


def affinity(subtask_id: int, pipeline_idx: int, graph: TaskGraph, groups: Sequence[Sequence[int]],
             vectors: Dict[int, np.ndarray], seeding_bonus: float) -> float:
    """
    Сродство подзадачи к конвейеру.

    Произведение суммы косинусов профилей с членами конвейера и суммы ln(1 + длина пути)
    от членов остальных конвейеров к подзадаче. Если остальные конвейеры пусты,
    второй множитель равен 1. Для пустого конвейера возвращается seeding_bonus.

    Args:
        subtask_id (int): Распределяемая подзадача
        pipeline_idx (int): Индекс конвейера-кандидата
        graph (TaskGraph): Граф задачи
        groups (Sequence[Sequence[int]]): Текущее разбиение
        vectors (Dict[int, np.ndarray]): Векторы ресурсов
        seeding_bonus (float): Сродство пустого конвейера

    Returns:
        float: Значение функции сродства
    """

    members = groups[pipeline_idx]
    if not members:
        return seeding_bonus
    similarity = sum(cosine(vectors[subtask_id], vectors[k]) for k in members)
    others = [k for j, group in enumerate(groups) if j != pipeline_idx for k in group]
    if not others:
        return similarity
    dependency = 0.0
    for other in others:
        length = graph.path_length(other, subtask_id)
        if length is not None:
            dependency += math.log1p(length)
    return similarity * dependency


def _pipelines(graph: TaskGraph, groups: Sequence[Sequence[int]]) -> List[Pipeline]:
    position = {sid: i for i, sid in enumerate(graph.order)}
    result = []
    for members in (g for g in groups if g):
        ordered = tuple(sorted(members, key=position.__getitem__))
        profiles = [graph.subtasks[m].profile for m in ordered]
        result.append(Pipeline(pipeline_id=len(result), members=ordered,
                               aggregate_profile=ResourceProfile.total(profiles),
                               peak_profile=ResourceProfile.peak(profiles)))
    return result


def greedy_partition(graph: TaskGraph, granularity: int,
                     seeding_bonus: float) -> Tuple[List[Pipeline], List[AffinityStep]]:
    """
    Жадное разбиение: подзадачи в топологическом порядке назначаются в конвейер
    с максимальным сродством, при равенстве выбирается меньший индекс.

    Returns:
        Tuple[List[Pipeline], List[AffinityStep]]: Конвейеры и журнал решений
    """

    vectors = resource_vectors(graph)
    groups: List[List[int]] = [[] for _ in range(granularity)]
    steps = []
    for subtask_id in graph.order:
        scores = [affinity(subtask_id, j, graph, groups, vectors, seeding_bonus) for j in range(granularity)]
        chosen = int(np.argmax(scores))
        groups[chosen].append(subtask_id)
        steps.append(AffinityStep(subtask_id, scores, chosen))
    return _pipelines(graph, groups), steps


def partition(graph: TaskGraph, cfg: PartitionConfig) -> List[Pipeline]:
    """
    Разбить граф задачи на конвейеры.

    Raises:
        InvalidInputError: Гранулярность больше числа подзадач

    Returns:
        List[Pipeline]: Конвейеры
    """

    if cfg.mode == 'serial':
        return _pipelines(graph, [graph.order])
    if cfg.mode == 'full_parallel':
        return _pipelines(graph, [[sid] for sid in graph.order])
    if cfg.granularity_g > len(graph):
        raise InvalidInputError(f'Granularity {cfg.granularity_g} exceeds {len(graph)} subtasks')
    pipelines, _ = greedy_partition(graph, cfg.granularity_g, cfg.seeding_bonus)
    return pipelines


def validate_partition(pipelines: Sequence[Pipeline], graph: TaskGraph) -> PartitionReport:
    """
    Проверить, что конвейеры покрывают граф без пересечений и упорядочены топологически.

    Raises:
        InvariantError: Описание нарушения

    Returns:
        PartitionReport: Число конвейеров и межконвейерных ребер
    """

    owner: Dict[int, int] = {}
    for pipeline in pipelines:
        for member in pipeline.members:
            if member in owner:
                raise InvariantError(f'Subtask {member} is in pipelines {owner[member]} and {pipeline.pipeline_id}')
            if member not in graph:
                raise InvariantError(f'Subtask {member} is not part of task {graph.task_id}')
            owner[member] = pipeline.pipeline_id
    missing = set(graph.subtasks) - set(owner)
    if missing:
        raise InvariantError(f'Subtasks {sorted(missing)} are not assigned to any pipeline')
    position = {sid: i for i, sid in enumerate(graph.order)}
    chain = []
    for pipeline in pipelines:
        ranks = [position[m] for m in pipeline.members]
        if ranks != sorted(ranks):
            raise InvariantError(f'Pipeline {pipeline.pipeline_id} breaks topological order: {pipeline.members}')
        chain.extend(zip(pipeline.members, pipeline.members[1:]))
    cross = sum(1 for a, b in graph.edges if owner[a] != owner[b])
    return PartitionReport(n_pipelines=len(pipelines), cross_edges=cross, chain_edges=chain)


def dump_partition(pipelines: Sequence[Pipeline]) -> Dict[str, List[int]]:
    """Описание разбиения для JSON: id конвейера -> упорядоченные подзадачи."""
    return {str(p.pipeline_id): list(p.members) for p in pipelines}


class PartitionCache:
    """Кэш разбиений для графов с одинаковой структурой (шаблонный режим)."""

    def __init__(self, cfg: PartitionConfig):
        self.cfg = cfg
        self._cache: Dict[tuple, List[Pipeline]] = {}

    def get(self, graph: TaskGraph, signature: Optional[tuple] = None) -> List[Pipeline]:
        """Разбиение графа, повторно используется для одинаковой сигнатуры."""
        if signature is None:
            pipelines = partition(graph, self.cfg)
            validate_partition(pipelines, graph)
            return pipelines
        if signature not in self._cache:
            pipelines = partition(graph, self.cfg)
            validate_partition(pipelines, graph)
            logger.debug(f'Partition for {signature[0]}: {dump_partition(pipelines)}')
            self._cache[signature] = pipelines
        return self._cache[signature]

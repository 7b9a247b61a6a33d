"""Графы подзадач, шаблон диагностического конвейера и генераторы нагрузки."""
import math
import logging
from functools import cached_property
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from app.errors import InvalidInputError
from app.models.task import (TEMPLATE_EDGES, TEMPLATE_NODES, ResourceProfile, Subtask,
                             WorkloadConfig)


class TaskGraph:
    """
    Неизменяемый DAG подзадач одной вычислительной задачи.

    Args:
        task_id (int): Идентификатор задачи
        subtasks (Iterable[Subtask]): Подзадачи
        edges (Iterable[Tuple[int, int]]): Зависимости (предшественник, потомок)

    Raises:
        InvalidInputError: Ребро ссылается на неизвестную подзадачу или граф содержит цикл
    """

    def __init__(self, task_id: int, subtasks: Iterable[Subtask], edges: Iterable[Tuple[int, int]]):
        self.task_id = task_id
        self._graph = nx.DiGraph()
        items = sorted(subtasks, key=lambda s: s.subtask_id)
        self._graph.add_nodes_from(s.subtask_id for s in items)
        for src, dst in sorted(set(edges)):
            if src not in self._graph or dst not in self._graph:
                raise InvalidInputError(f'Edge ({src}, {dst}) references an unknown subtask')
            self._graph.add_edge(src, dst)
        if not nx.is_directed_acyclic_graph(self._graph):
            raise InvalidInputError(f'Task graph {task_id} contains a cycle')
        self.subtasks: Dict[int, Subtask] = {
            s.subtask_id: s.model_copy(update={'predecessors': frozenset(self._graph.predecessors(s.subtask_id))})
            for s in items
        }

    def __repr__(self) -> str:
        return f'{self.__class__.__name__}(task_id={self.task_id}, subtasks={len(self)}, edges={len(self.edges)})'

    def __len__(self) -> int:
        return len(self.subtasks)

    def __contains__(self, subtask_id: int) -> bool:
        return subtask_id in self.subtasks

    @cached_property
    def edges(self) -> List[Tuple[int, int]]:
        """Отсортированный список зависимостей."""
        return sorted(self._graph.edges())

    @cached_property
    def order(self) -> List[int]:
        """Топологический порядок, равные по порядку подзадачи упорядочены по возрастанию id."""
        return list(nx.lexicographical_topological_sort(self._graph))

    @cached_property
    def sinks(self) -> List[int]:
        """Подзадачи без потомков."""
        return [n for n in self.order if self._graph.out_degree(n) == 0]

    def predecessors(self, subtask_id: int) -> List[int]:
        """Непосредственные предшественники подзадачи."""
        return sorted(self._graph.predecessors(self._check(subtask_id)))

    def successors(self, subtask_id: int) -> List[int]:
        """Непосредственные потомки подзадачи."""
        return sorted(self._graph.successors(self._check(subtask_id)))

    def path_length(self, src: int, dst: int) -> Optional[int]:
        """Длина кратчайшего направленного пути или None."""
        self._check(src)
        self._check(dst)
        return self._path_lengths.get(src, {}).get(dst)

    @cached_property
    def _path_lengths(self) -> Dict[int, Dict[int, int]]:
        return dict(nx.all_pairs_shortest_path_length(self._graph))

    @cached_property
    def remaining_depth(self) -> Dict[int, int]:
        """Длина самого длинного пути (в ребрах) от подзадачи до стока."""
        depth: Dict[int, int] = {}
        for node in reversed(self.order):
            depth[node] = max((depth[s] + 1 for s in self._graph.successors(node)), default=0)
        return depth

    def _check(self, subtask_id: int) -> int:
        if subtask_id not in self.subtasks:
            raise InvalidInputError(f'Unknown subtask {subtask_id} in task {self.task_id}')
        return subtask_id

    def to_payload(self) -> Dict[str, Any]:
        """Описание графа для журнала событий."""
        return {
            'task_id': self.task_id,
            'subtasks': [s.model_dump(mode='json', exclude={'predecessors', 'state'})
                         for s in self.subtasks.values()],
            'edges': [list(edge) for edge in self.edges],
        }

    @classmethod
    def from_payload(cls, payload: Dict[str, Any]) -> 'TaskGraph':
        """Восстановление графа из журнала событий."""
        subtasks = [Subtask.model_validate(item) for item in payload['subtasks']]
        return cls(payload['task_id'], subtasks, [tuple(edge) for edge in payload['edges']])


def topological_order(graph: TaskGraph) -> List[int]:
    """Топологический порядок подзадач с разрешением равенства по id."""
    return list(graph.order)


def path_length(graph: TaskGraph, src: int, dst: int) -> Optional[int]:
    """
    Длина кратчайшего направленного пути между подзадачами.

    Raises:
        InvalidInputError: Неизвестный идентификатор подзадачи

    Returns:
        Optional[int]: Число ребер или None если пути нет
    """

    return graph.path_length(src, dst)


def instantiate_template(cfg: WorkloadConfig, task_id: int = 0, birth_time_ms: float = 0.0) -> TaskGraph:
    """
    Построить граф диагностического конвейера из восьми компонентов.

    Три сегментатора независимы, арбитр зависит от всех трех, три классификатора
    зависят от арбитра, слияние зависит от классификаторов.

    Args:
        cfg (WorkloadConfig): Конфигурация нагрузки (переопределения FLOPs и памяти)
        task_id (int, optional): Идентификатор задачи
        birth_time_ms (float, optional): Время появления задачи

    Returns:
        TaskGraph: Граф задачи
    """

    index = {name: i for i, (name, _, _) in enumerate(TEMPLATE_NODES)}
    subtasks = []
    for name, flops, memory in TEMPLATE_NODES:
        flops = cfg.template_flops.get(name, flops)
        memory = cfg.template_memory_mb.get(name, memory)
        subtasks.append(Subtask(subtask_id=index[name], name=name, workload_gflop=flops,
                                profile=ResourceProfile(cpu_gflops=flops, memory_mb=memory),
                                payload_bits=cfg.payload_bits, birth_time_ms=birth_time_ms))
    edges = [(index[a], index[b]) for a, b in TEMPLATE_EDGES]
    return TaskGraph(task_id, subtasks, edges)


class ZipfFlops:
    """
    Усеченное распределение Ципфа над целыми значениями [flops_min, flops_max].

    Вероятность значения пропорциональна rank^(-s), где rank = value - flops_min + 1.
    """

    def __init__(self, flops_min: int = 2, flops_max: int = 10, s: float = 1.1):
        self.values = np.arange(flops_min, flops_max + 1, dtype=float)
        weights = np.arange(1, len(self.values) + 1, dtype=float) ** (-s)
        self.probs = weights / weights.sum()

    def sample(self, rng: np.random.Generator, size: Optional[int] = None):
        """Выборка значений GFLOP."""
        return rng.choice(self.values, size=size, p=self.probs)


def generate_random_dag(cfg: WorkloadConfig, n_subtasks: int, rng: np.random.Generator,
                        task_id: int = 0, birth_time_ms: float = 0.0) -> TaskGraph:
    """
    Случайный DAG: ребро i -> j (i < j) существует с вероятностью dep_probability.

    Args:
        cfg (WorkloadConfig): Конфигурация нагрузки
        n_subtasks (int): Количество подзадач
        rng (np.random.Generator): Генератор случайных чисел
        task_id (int, optional): Идентификатор задачи
        birth_time_ms (float, optional): Время появления задачи

    Raises:
        InvalidInputError: n_subtasks < 1

    Returns:
        TaskGraph: Граф задачи
    """

    if n_subtasks < 1:
        raise InvalidInputError(f'n_subtasks must be positive, got {n_subtasks}')
    flops = ZipfFlops(cfg.flops_min, cfg.flops_max, cfg.zipf_s).sample(rng, size=n_subtasks)
    subtasks = [Subtask(subtask_id=i, name=f'op{i}', workload_gflop=float(flops[i]),
                        profile=ResourceProfile(cpu_gflops=float(flops[i]), memory_mb=cfg.memory_mb),
                        payload_bits=cfg.payload_bits, birth_time_ms=birth_time_ms)
                for i in range(n_subtasks)]
    edges = []
    for i in range(n_subtasks):
        for j in range(i + 1, n_subtasks):
            if rng.random() < cfg.dep_probability:
                edges.append((i, j))
    return TaskGraph(task_id, subtasks, edges)


class WorkloadGenerator:
    """Генератор графов задач согласно режиму нагрузки."""

    def __init__(self, cfg: WorkloadConfig, rng: np.random.Generator):
        self.cfg = cfg
        self._rng = rng

    def next_graph(self, task_id: int, birth_time_ms: float) -> TaskGraph:
        """Граф очередной задачи."""
        if self.cfg.template_mode == 'template':
            return instantiate_template(self.cfg, task_id, birth_time_ms)
        return generate_random_dag(self.cfg, self.cfg.random_dag_size, self._rng, task_id, birth_time_ms)


class ArrivalProcess:
    """
    Поток поступления задач.

    В режиме 'poisson' интервалы экспоненциальны с заданной интенсивностью, источник
    выбирается равномерно среди стрелочных переводов. В режиме 'turnout' каждый перевод
    срабатывает с интервалом 10-30 минут.

    Args:
        cfg (WorkloadConfig): Конфигурация нагрузки
        origins (Sequence[str]): RMU, к которым привязаны стрелочные переводы
        turnout_count (int): Количество стрелочных переводов
        rng (np.random.Generator): Генератор случайных чисел
    """

    def __init__(self, cfg: WorkloadConfig, origins: Sequence[str], turnout_count: int,
                 rng: np.random.Generator):
        if not origins:
            raise InvalidInputError('At least one RMU is required as a task origin')
        self.cfg = cfg
        self._rng = rng
        self._turnout_rmu = [origins[i % len(origins)] for i in range(turnout_count)]
        self._now_ms = 0.0
        self._next_turnout: List[float] = []
        if cfg.arrival_mode == 'turnout':
            low, high = cfg.turnout_interval_min
            self._next_turnout = [float(rng.uniform(0.0, high)) * 60_000.0 for _ in range(turnout_count)]
            self._interval_ms = (low * 60_000.0, high * 60_000.0)
        logging.getLogger('workload').debug(f'Arrival process {cfg.arrival_mode} over {turnout_count} turnouts')

    def next_arrival(self) -> Tuple[float, str]:
        """
        Следующее поступление задачи.

        Returns:
            Tuple[float, str]: Время поступления (мс) и RMU источника
        """

        if self.cfg.arrival_mode == 'poisson':
            self._now_ms += float(self._rng.exponential(1000.0 / self.cfg.request_rate_per_s))
            turnout = int(self._rng.integers(len(self._turnout_rmu)))
            return self._now_ms, self._turnout_rmu[turnout]
        turnout = int(np.argmin(self._next_turnout))
        when = self._next_turnout[turnout]
        self._next_turnout[turnout] = when + float(self._rng.uniform(*self._interval_ms))
        return when, self._turnout_rmu[turnout]


def expected_edges(n_subtasks: int, dep_probability: float) -> float:
    """Ожидаемое число ребер случайного DAG."""
    return dep_probability * math.comb(n_subtasks, 2)

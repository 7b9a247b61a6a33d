import math
from collections import deque

import numpy as np
import pytest

from app.errors import InvalidInputError, InvariantError
from app.models.scenario import PartitionConfig
from app.models.task import ResourceProfile, WorkloadConfig
from app.partition import (PartitionCache, Pipeline, affinity, cosine, dump_partition, greedy_partition, partition,
                           resource_vectors, validate_partition)
from app.workload import TaskGraph, generate_random_dag


def bfs_length(graph: TaskGraph, src: int, dst: int):
    """Длина кратчайшего направленного пути обходом в ширину."""
    seen = {src: 0}
    queue = deque([src])
    while queue:
        node = queue.popleft()
        if node == dst:
            return seen[node]
        for nxt in graph.successors(node):
            if nxt not in seen:
                seen[nxt] = seen[node] + 1
                queue.append(nxt)
    return None


def reference_groups(graph: TaskGraph, granularity: int, bonus: float):
    """Независимое воспроизведение жадного разбиения по функции сродства."""

    raw = {sid: [s.profile.cpu_gflops, s.profile.memory_mb, float(s.profile.needs_asic)]
           for sid, s in graph.subtasks.items()}
    scale = [max(v[i] for v in raw.values()) or 1.0 for i in range(3)]
    vec = {sid: [v[i] / scale[i] for i in range(3)] for sid, v in raw.items()}

    def cos(a, b):
        na = math.sqrt(sum(x * x for x in a))
        nb = math.sqrt(sum(x * x for x in b))
        return 0.0 if na * nb == 0 else sum(x * y for x, y in zip(a, b)) / (na * nb)

    groups = [[] for _ in range(granularity)]
    for sid in graph.order:
        best, best_score = 0, None
        for j, members in enumerate(groups):
            if not members:
                score = bonus
            else:
                score = sum(cos(vec[sid], vec[k]) for k in members)
                others = [k for i, g in enumerate(groups) if i != j for k in g]
                if others:
                    dep = 0.0
                    for k in others:
                        length = bfs_length(graph, k, sid)
                        if length is not None:
                            dep += math.log1p(length)
                    score *= dep
            if best_score is None or score > best_score:
                best, best_score = j, score
        groups[best].append(sid)
    return [tuple(g) for g in groups if g]


@pytest.mark.parametrize('bonus', [0.5, 2.0])
@pytest.mark.parametrize('granularity', [1, 2, 3, 4])
def test_greedy_matches_reference_on_template(template_graph: TaskGraph, granularity: int, bonus: float):
    """
    Проверка жадного разбиения шаблона против независимого воспроизведения.
    """

    pipelines, steps = greedy_partition(template_graph, granularity, bonus)
    assert [p.members for p in pipelines] == reference_groups(template_graph, granularity, bonus)
    assert [s.subtask_id for s in steps] == template_graph.order
    assert all(len(s.scores) == granularity for s in steps)


@pytest.mark.parametrize('seed', range(200))
def test_greedy_matches_reference_on_random_dags(seed: int):
    """
    Проверка жадного разбиения случайных графов до 8 вершин при G <= 3 против независимого
    воспроизведения, межконвейерных ребер не больше, чем в полностью параллельном режиме.
    """

    rng = np.random.default_rng(seed)
    n_subtasks = 1 + seed % 8
    granularity = min(1 + (seed // 8) % 3, n_subtasks)
    cfg = WorkloadConfig(template_mode='random_dag', dep_probability=0.4)
    graph = generate_random_dag(cfg, n_subtasks, rng)
    pipelines, _ = greedy_partition(graph, granularity, 2.0)
    assert [p.members for p in pipelines] == reference_groups(graph, granularity, 2.0)

    greedy_cross = validate_partition(pipelines, graph).cross_edges
    parallel = partition(graph, PartitionConfig(mode='full_parallel'))
    assert greedy_cross <= validate_partition(parallel, graph).cross_edges


def test_default_bonus_keeps_template_serial(template_graph: TaskGraph):
    """
    Проверка, что при сродстве пустого конвейера по умолчанию шаблон остается одним конвейером.
    """

    default = PartitionConfig()
    assert default.seeding_bonus == 0.5
    greedy = partition(template_graph, default)
    serial = partition(template_graph, PartitionConfig(mode='serial'))
    assert [p.members for p in greedy] == [p.members for p in serial]
    assert len(partition(template_graph, PartitionConfig(seeding_bonus=2.0))) > 1

def test_first_subtask_seeds_first_pipeline(template_graph: TaskGraph):
    """
    Проверка выбора меньшего индекса при равенстве сродства.
    """

    _, steps = greedy_partition(template_graph, 3, 2.0)
    assert steps[0].scores == [2.0, 2.0, 2.0]
    assert steps[0].chosen == 0


def test_affinity_terms(template_graph: TaskGraph):
    """
    Проверка составляющих функции сродства.
    """

    vectors = resource_vectors(template_graph)
    assert affinity(3, 1, template_graph, [[0], []], vectors, 0.7) == 0.7
    assert affinity(1, 0, template_graph, [[0], []], vectors, 0.7) == pytest.approx(1.0)
    # fuse from {segA} with mlp elsewhere: cos(fuse, segA) * ln(1 + path(mlp -> fuse))
    score = affinity(7, 0, template_graph, [[0], [4]], vectors, 0.7)
    assert score == pytest.approx(cosine(vectors[7], vectors[0]) * math.log(2))
    # no path from the other pipeline to the subtask
    assert affinity(0, 0, template_graph, [[1], [2]], vectors, 0.7) == 0.0


def test_cosine():
    """
    Проверка косинусного сходства и нулевого вектора.
    """

    assert cosine(np.array([1.0, 0.0]), np.array([2.0, 0.0])) == pytest.approx(1.0)
    assert cosine(np.array([1.0, 0.0]), np.array([0.0, 3.0])) == pytest.approx(0.0)
    assert cosine(np.zeros(2), np.array([1.0, 1.0])) == 0.0


def test_partition_modes(template_graph: TaskGraph):
    """
    Проверка последовательного и полностью параллельного режимов.
    """

    serial = partition(template_graph, PartitionConfig(mode='serial'))
    assert len(serial) == 1
    assert serial[0].members == tuple(template_graph.order)
    assert serial[0].aggregate_profile.cpu_gflops == pytest.approx(4.3)
    assert serial[0].peak_profile.cpu_gflops == 2.0
    assert validate_partition(serial, template_graph).cross_edges == 0

    parallel = partition(template_graph, PartitionConfig(mode='full_parallel'))
    report = validate_partition(parallel, template_graph)
    assert report.n_pipelines == 8
    assert report.cross_edges == len(template_graph.edges)
    assert report.chain_edges == []


def test_greedy_cross_edges_bounded(template_graph: TaskGraph):
    """
    Проверка, что жадное разбиение не увеличивает число межконвейерных ребер относительно
    полностью параллельного режима.
    """

    for granularity in range(1, 9):
        pipelines = partition(template_graph, PartitionConfig(granularity_g=granularity, seeding_bonus=2.0))
        report = validate_partition(pipelines, template_graph)
        assert report.n_pipelines <= granularity
        assert report.cross_edges <= len(template_graph.edges)


def test_partition_granularity_error(template_graph: TaskGraph):
    """
    Проверка ошибки при гранулярности больше числа подзадач.
    """

    with pytest.raises(InvalidInputError):
        partition(template_graph, PartitionConfig(granularity_g=9))


def make_pipeline(pipeline_id: int, members):
    profile = ResourceProfile()
    return Pipeline(pipeline_id, tuple(members), profile, profile)


def test_validate_partition_errors(template_graph: TaskGraph):
    """
    Проверка обнаружения пересечений, пропусков и нарушения топологического порядка.
    """

    with pytest.raises(InvariantError):
        validate_partition([make_pipeline(0, range(8)), make_pipeline(1, [3])], template_graph)
    with pytest.raises(InvariantError):
        validate_partition([make_pipeline(0, range(7))], template_graph)
    with pytest.raises(InvariantError):
        validate_partition([make_pipeline(0, [7, 0, 1, 2, 3, 4, 5, 6])], template_graph)
    with pytest.raises(InvariantError):
        validate_partition([make_pipeline(0, list(range(8)) + [42])], template_graph)


def test_partition_cache(template_graph: TaskGraph):
    """
    Проверка повторного использования разбиения для одинаковой сигнатуры.
    """

    cache = PartitionCache(PartitionConfig(granularity_g=3))
    first = cache.get(template_graph, ('template',))
    assert cache.get(template_graph, ('template',)) is first
    assert cache.get(template_graph) is not first
    assert dump_partition(first) == {str(p.pipeline_id): list(p.members) for p in first}

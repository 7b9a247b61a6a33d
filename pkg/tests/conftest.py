import math
import os
import sqlite3
from typing import Callable, List

import pytest

os.environ.setdefault('RAILEDGE_DB_URL', 'sqlite:///test.db')

# pylint: disable=wrong-import-position
from fastapi.testclient import TestClient  # noqa: E402

from app.geonet import EARTH_RADIUS_M, NANJING, Topology  # noqa: E402
from app.main import app  # noqa: E402
from app.models.geo import GeoPosition, LinkParams, NodeKind, NodeSpec  # noqa: E402
from app.models.scenario import RunConfig, Scenario, TopologyConfig  # noqa: E402
from app.models.task import WorkloadConfig  # noqa: E402
from app.workload import TaskGraph, instantiate_template  # noqa: E402


METERS_PER_DEG_LAT = math.pi * EARTH_RADIUS_M / 180.0


def make_node(node_id: str, east_m: float, kind: NodeKind = NodeKind.RMU, capacity: float = 4.0,
              cores: int = 2, queue: int = 8, coverage: float = 1000.0, **extra) -> NodeSpec:
    """Узел на линии, смещенный на east_m метров к востоку от облака."""
    meters_per_deg_lon = METERS_PER_DEG_LAT * math.cos(math.radians(NANJING.lat))
    position = GeoPosition(lat=NANJING.lat, lon=NANJING.lon + east_m / meters_per_deg_lon)
    return NodeSpec(node_id=node_id, kind=kind, position=position, capacity_gflops=capacity, n_cores=cores,
                    concurrency_limit=cores, queue_capacity=queue, coverage_m=coverage, **extra)


@pytest.fixture()
def small_nodes() -> List[NodeSpec]:
    """
    Фикстура с облаком и тремя RMU вдоль линии через 800 м.

    Returns:
        List[NodeSpec]: Узлы топологии
    """

    return [
        make_node('cloud', 0.0, NodeKind.CLOUD, capacity=200.0, cores=20, queue=1024, coverage=0.0,
                  memory_mb=65536.0),
        make_node('rmu-01', 500.0),
        make_node('rmu-02', 1300.0),
        make_node('rmu-03', 2100.0),
    ]


@pytest.fixture()
def small_topology(small_nodes: List[NodeSpec]) -> Topology:
    """
    Фикстура с топологией из small_nodes и параметрами канала по умолчанию.

    Returns:
        Topology: Топология
    """

    return Topology(small_nodes, LinkParams())


@pytest.fixture()
def template_graph() -> TaskGraph:
    """
    Фикстура с графом диагностического конвейера из восьми компонентов.

    Returns:
        TaskGraph: Граф задачи
    """

    return instantiate_template(WorkloadConfig(), task_id=0)


@pytest.fixture()
def scenario_factory(small_nodes: List[NodeSpec]) -> Callable[..., Scenario]:
    """
    Фикстура для создания небольших сценариев на топологии small_nodes.

    Returns:
        Callable[..., Scenario]: Функция (horizon_s, rate, policy, **update) -> Scenario
    """

    def factory(horizon_s: float = 5.0, rate: float = 5.0, policy: str = 'round_robin', **update) -> Scenario:
        scenario = Scenario(
            scenario_id='test',
            topology=TopologyConfig(nodes=small_nodes),
            workload=WorkloadConfig(request_rate_per_s=rate),
            run=RunConfig(horizon_s=horizon_s, seeds=(1, 2), policy=policy, check_invariants=True),
        )
        return scenario.model_copy(update=update) if update else scenario

    return factory


@pytest.fixture(scope='session')
def test_client() -> TestClient:
    """
    Фикстура для создания тестового клиента API.

    Returns:
        TestClient: Тестовый клиент API
    """

    client = TestClient(app)
    return client


@pytest.fixture()
def db_connection() -> sqlite3.Connection:
    """
    Фикстура для создания подключения к базе данных.
    В SETUP происходит подключение к базе, в тест передается объект для взаимодействия с базой,
    а в TEARDOWN происходит закрытие подключения.

    Yields:
        Iterator[sqlite3.Connection]: Объект для взаимодействия с базой
    """

    connection = sqlite3.connect('test.db')

    yield connection

    connection.close()


@pytest.fixture()
def drop_all_data_in_db(db_connection: sqlite3.Connection):
    """
    Фикстура для удаления всех отчетов из базы по окончанию теста.

    Args:
        db_connection (sqlite3.Connection): Объект для взаимодействия с базой
    """

    yield

    cursor = db_connection.cursor()
    cursor.execute('DELETE FROM reports')

    db_connection.commit()

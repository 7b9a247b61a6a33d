import sqlite3
from typing import List

import pytest
from fastapi.testclient import TestClient
from httpx import Response

from app.models.geo import NodeSpec


@pytest.fixture()
def run_request(small_nodes: List[NodeSpec]) -> dict:
    """
    Фикстура возвращающая тело запроса на короткий прогон небольшого сценария.

    Returns:
        dict: Тело запроса
    """

    return {
        'scenario': {
            'scenario_id': 'api',
            'topology': {'nodes': [node.model_dump(mode='json') for node in small_nodes]},
            'workload': {'request_rate_per_s': 5.0},
            'run': {'horizon_s': 1.0, 'policy': 'ppo'},
        },
        'policy': 'round_robin',
        'seed': 1,
    }


@pytest.fixture()
def add_report_in_db(db_connection: sqlite3.Connection):
    """
    Фикстура для добавления тестового отчета в базу данных.

    Args:
        db_connection (sqlite3.Connection): Подключение к базе данных
    """

    cursor = db_connection.cursor()
    cursor.execute('INSERT INTO reports (report_id, scenario_id, scenario_hash, policy, seed, request_rate, '
                   'n_tasks, n_success, avg_comp_ms, avg_trans_ms, avg_total_ms, load_std, utilization_pct, '
                   'success_rate, violations, modes, artifact_version) VALUES '
                   "(100, 'stored', 'abc', 'eps', 3, 10.0, 4, 3, 100.0, 10.0, 110.0, 2.5, 40.0, 0.75, "
                   """'{"C1": 1}', '{}', '1')""")
    db_connection.commit()


@pytest.mark.usefixtures('drop_all_data_in_db')
def test_run_and_read_report(test_client: TestClient, run_request: dict):
    """
    Проверка запуска прогона через API и чтения сохраненного отчета.

    Args:
        test_client (TestClient): Тестовый клиент API
        run_request (dict): Тело запроса
    """

    response: Response = test_client.post('/api/v1/runs', json=run_request)
    assert response.status_code == 200
    report = response.json()
    assert report['scenario_id'] == 'api'
    assert report['policy'] == 'round_robin'
    assert report['request_rate'] == 5.0
    assert report['report_id'] is not None

    response = test_client.get(f'/api/v1/reports/{report["report_id"]}')
    assert response.status_code == 200
    assert response.json() == report

    response = test_client.get('/api/v1/reports', params={'scenario_id': 'api'})
    assert response.status_code == 200
    assert [r['report_id'] for r in response.json()] == [report['report_id']]


@pytest.mark.usefixtures('drop_all_data_in_db')
def test_run_rejects_ppo_without_checkpoint(test_client: TestClient, run_request: dict):
    """
    Проверка ответа 422 при запуске PPO без контрольной точки.

    Args:
        test_client (TestClient): Тестовый клиент API
        run_request (dict): Тело запроса
    """

    run_request['policy'] = None
    response: Response = test_client.post('/api/v1/runs', json=run_request)
    assert response.status_code == 422
    assert 'ScenarioError' in response.json()['detail']

    response = test_client.get('/api/v1/reports')
    assert response.json() == []


@pytest.mark.usefixtures('add_report_in_db', 'drop_all_data_in_db')
def test_get_all_reports(test_client: TestClient):
    """
    Проверка получения всех отчетов и фильтра по сценарию.

    Args:
        test_client (TestClient): Тестовый клиент API
    """

    response: Response = test_client.get('/api/v1/reports')
    assert response.status_code == 200
    reports = response.json()
    assert len(reports) == 1
    assert reports[0]['report_id'] == 100
    assert reports[0]['violations'] == {'C1': 1}

    response = test_client.get('/api/v1/reports', params={'scenario_id': 'other'})
    assert response.json() == []


@pytest.mark.usefixtures('add_report_in_db', 'drop_all_data_in_db')
def test_delete_report(test_client: TestClient):
    """
    Проверка удаления отчета и ответа 404 для отсутствующего отчета.

    Args:
        test_client (TestClient): Тестовый клиент API
    """

    response: Response = test_client.delete('/api/v1/reports/100')
    assert response.status_code == 200

    response = test_client.get('/api/v1/reports/100')
    assert response.status_code == 404

    response = test_client.delete('/api/v1/reports/100')
    assert response.status_code == 404

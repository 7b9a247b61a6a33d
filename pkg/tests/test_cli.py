import json
import os

import pytest

from app.cli import build_parser, main
from app.dumpers import DumperError, EventLogDump, read_json_lines, write_table


SCENARIO = """
[scenario]
id = cli

[node:cloud]
kind = cloud
lat = 32.0603
lon = 118.7969
capacity_gflops = 200
n_cores = 20
concurrency_limit = 20
queue_capacity = 1024

[node:rmu-01]
kind = rmu
lat = 32.0603
lon = 118.8022
capacity_gflops = 4
n_cores = 2
concurrency_limit = 2
queue_capacity = 8
coverage_m = 1000

[workload]
request_rate_per_s = 3

[run]
horizon_s = 1
policy = random
"""


@pytest.fixture()
def scenario_path(tmp_path) -> str:
    """
    Фикстура с файлом небольшого сценария.

    Returns:
        str: Путь к файлу сценария
    """

    path = tmp_path / 'cli.ini'
    path.write_text(SCENARIO, encoding='utf8')
    return str(path)


def test_parser():
    """
    Проверка разбора списков в аргументах команд.
    """

    args = build_parser().parse_args(['sweep', '--scenario', 's.ini', '--rates', '10,50', '--seeds', '1,2',
                                      '--policies', 'eps,cps'])
    assert args.rates == [10.0, 50.0]
    assert args.seeds == [1, 2]
    assert args.workers == 0
    args = build_parser().parse_args(['degrade', '--scenario', 's.ini', '--delays', '20,inf'])
    assert args.delays[-1] == float('inf')


def test_run_and_verify_trace(scenario_path: str, tmp_path, capsys):
    """
    Проверка команды одиночного прогона и проверки трассы протокола координатора.
    """

    out_dir = str(tmp_path / 'out')
    assert main(['run', '--scenario', scenario_path, '--out', out_dir, '--seed', '1']) == 0
    report = json.loads(capsys.readouterr().out)
    assert report['policy'] == 'random'
    assert report['scenario_id'] == 'cli'

    trace = os.path.join(out_dir, 'cli_random_r3_s1_consensus.jsonl')
    assert os.path.exists(trace)
    assert main(['verify-trace', trace]) == 0
    assert json.loads(capsys.readouterr().out)['ok']

    broken = tmp_path / 'broken.jsonl'
    broken.write_text('{"node": "a", "term": 2, "role": "coordinator"}\n'
                      '{"node": "b", "term": 2, "role": "coordinator"}\n', encoding='utf8')
    assert main(['verify-trace', str(broken)]) == 1
    assert not json.loads(capsys.readouterr().out)['ok']


def test_errors_are_reported_as_json(tmp_path, capsys):
    """
    Проверка вывода ошибки в stderr в виде JSON и кода завершения 1.
    """

    assert main(['run', '--scenario', str(tmp_path / 'missing.ini')]) == 1
    error = json.loads(capsys.readouterr().err)
    assert error['error'] == 'ScenarioError'

    assert main(['verify-trace', str(tmp_path / 'missing.jsonl')]) == 1
    assert json.loads(capsys.readouterr().err)['error'] == 'DumperError'


def test_dumpers(tmp_path):
    """
    Проверка ошибок записи артефактов и чтения JSON lines.
    """

    with pytest.raises(DumperError):
        write_table(str(tmp_path / 'table.csv'), ('a', 'b'), [(1, 2, 3)])

    dump = EventLogDump('events', str(tmp_path / 'nested' / 'events.jsonl'))
    with pytest.raises(DumperError):
        dump.write({'x': 1})
    with dump:
        dump({'b': 1, 'a': None})
    assert dump.count == 1
    assert list(read_json_lines(dump.output_file)) == [{'a': None, 'b': 1}]

    with pytest.raises(DumperError):
        list(read_json_lines(str(tmp_path / 'missing.jsonl')))

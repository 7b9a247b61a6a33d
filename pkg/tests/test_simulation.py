import pytest

from app.consensus import verify_trace
from app.errors import InvariantError
from app.models.scenario import FailureConfig
from app.models.task import WorkloadConfig
from app.sched import SchedulingSnapshot
from app.simcore import WORK_TOLERANCE, WorkerState, reassemble_total
from app.simulation import STREAMS, EventLog, ReplayPolicy, Simulation, rng_streams, run_simulation


def test_rng_streams_are_independent():
    """
    Проверка порождения независимых генераторов подсистем из одного seed.
    """

    first, second = rng_streams(7), rng_streams(7)
    assert list(first) == list(STREAMS)
    draws = {name: float(rng.random()) for name, rng in first.items()}
    assert draws == {name: float(rng.random()) for name, rng in second.items()}
    assert len(set(draws.values())) == len(STREAMS)


def test_same_seed_gives_same_run(scenario_factory):
    """
    Проверка детерминированности: одинаковый seed дает одинаковые поступления и записи.
    """

    scenario = scenario_factory()
    first = run_simulation(scenario, seed=1)
    second = run_simulation(scenario, seed=1)
    other = run_simulation(scenario, seed=2)

    assert first.n_arrivals > 0
    assert first.arrivals_hash == second.arrivals_hash
    assert first.records == second.records
    assert first.dispatch_log == second.dispatch_log
    assert other.arrivals_hash != first.arrivals_hash


@pytest.mark.parametrize('policy', ['round_robin', 'random', 'eps', 'cps'])
def test_every_arrival_is_recorded(scenario_factory, policy: str):
    """
    Проверка инвариантов прогона: каждая задача получает запись, время раскладывается на слагаемые,
    занятость узлов не превышает время работы.
    """

    result = run_simulation(scenario_factory(policy=policy), seed=1)
    assert len(result.records) == result.n_arrivals
    assert sorted(r.task_id for r in result.records) == list(range(result.n_arrivals))
    assert result.end_ms >= result.horizon_ms

    for record in result.records:
        assert record.success == (record.violation is None)
        assert record.t_total_ms == reassemble_total(record.t_overhead_ms, record.t_queue_ms, record.t_comp_ms,
                                                     record.t_idle_ms, record.t_trans_ms)
        if record.success:
            assert record.t_comp_ms > 0
            assert record.t_span_ms <= record.t_comp_ms + WORK_TOLERANCE

    for worker in result.workers.values():
        assert worker.busy_ms <= worker.up_ms + WORK_TOLERANCE
        assert not worker.running


def test_timed_out_tasks_report_full_time(scenario_factory):
    """
    Проверка записей задач, прерванных по таймауту: полное время не меньше таймаута.
    """

    scenario = scenario_factory(horizon_s=3.0, workload=WorkloadConfig(request_rate_per_s=40.0, timeout_s=0.3))
    result = run_simulation(scenario, seed=1)
    timed_out = [r for r in result.records if r.violation == 'C1']
    assert timed_out
    for record in timed_out:
        assert record.t_total_ms >= 300.0 - WORK_TOLERANCE
        assert record.t_total_ms == reassemble_total(record.t_overhead_ms, record.t_queue_ms, record.t_comp_ms,
                                                     record.t_idle_ms, record.t_trans_ms)


def test_zero_horizon(scenario_factory):
    """
    Проверка пустого прогона при нулевом горизонте.
    """

    result = run_simulation(scenario_factory(horizon_s=0.0), seed=1)
    assert result.n_arrivals == 0
    assert result.records == []
    assert result.coordinator_timeline == [(0.0, 'cloud', 1)]


def test_request_rate_override(scenario_factory):
    """
    Проверка замены интенсивности запросов без изменения исходного сценария.
    """

    scenario = scenario_factory(rate=5.0)
    sim = Simulation(scenario, seed=1, request_rate=20.0, horizon_s=2.0)
    assert sim.scenario.workload.request_rate_per_s == 20.0
    assert scenario.workload.request_rate_per_s == 5.0
    assert sim.horizon_ms == 2000.0
    assert repr(sim).startswith('Simulation(')

    slow = run_simulation(scenario, seed=1, horizon_s=2.0)
    fast = run_simulation(scenario, seed=1, horizon_s=2.0, request_rate=20.0)
    assert fast.n_arrivals > slow.n_arrivals


def test_replay_reproduces_run(scenario_factory):
    """
    Проверка воспроизведения прогона по журналу событий.
    """

    scenario = scenario_factory(policy='random')
    events = []
    original = Simulation(scenario, seed=2, event_sink=events.append).run()
    assert events
    assert all({'time', 'seq', 'kind', 'payload'} <= set(event) for event in events)

    log = EventLog.from_records(events)
    assert len(log.arrivals) == original.n_arrivals
    replayed = Simulation(scenario, seed=2, replay=log).run()
    assert replayed.policy.name == 'replay'
    assert replayed.arrivals_hash == original.arrivals_hash
    assert replayed.records == original.records


def test_event_log_skips_blank_lines():
    """
    Проверка разбора журнала из строк JSON с пустыми строками.
    """

    lines = [
        '{"time": 1.0, "seq": 0, "kind": "TaskArrival", "payload": {"task_id": 0, "origin": "rmu-01"}}',
        '   ',
        '{"time": 2.0, "seq": 1, "kind": "Dispatch", "payload": {}}',
        '{"time": 3.0, "seq": 2, "kind": "Dispatch", "payload": {"placements": [], "blocked": []}}',
    ]
    log = EventLog.from_records(lines)
    assert log.arrivals == [{'time': 1.0, 'task_id': 0, 'origin': 'rmu-01'}]
    assert list(log.decisions) == [2]


def test_replay_policy_rejects_unknown_pipeline(small_topology):
    """
    Проверка ошибки при воспроизведении решения для неизвестного конвейера.
    """

    policy = ReplayPolicy('replay', {5: {'placements': [[9, 0, ['cloud']]]}})
    policy.seq = 5
    workers = {node_id: WorkerState(node) for node_id, node in small_topology.nodes.items()}
    snapshot = SchedulingSnapshot(0.0, 10_000.0, 5.0, small_topology, workers, {}, {}, 'cloud')
    with pytest.raises(InvariantError):
        policy.decide([], snapshot)

    policy.seq = 6
    assert not policy.decide([], snapshot).placements


def test_coordinator_crash_fails_over(scenario_factory):
    """
    Проверка выбора нового координатора после отказа облака и безопасности трассы протокола.
    """

    scenario = scenario_factory(horizon_s=6.0, failure=FailureConfig(crash_node='cloud', crash_at_ms=1000.0))
    trace = []
    result = run_simulation(scenario, seed=1, trace_sink=trace.append)

    assert not result.workers['cloud'].alive
    assert result.coordinator_timeline[0] == (0.0, 'cloud', 1)
    time, leader, term = result.coordinator_timeline[-1]
    assert time > 1000.0
    assert leader != 'cloud'
    assert term > 1

    assert trace == result.consensus_trace
    report = verify_trace(result.consensus_trace)
    assert report.ok, report.violations
    assert len(result.records) == result.n_arrivals

    after = [entry for entry in result.dispatch_log if entry['time'] > time]
    assert all(entry['coordinator'] == leader for entry in after)


def test_crash_and_recovery(scenario_factory):
    """
    Проверка возврата узла после отказа: узел снова работает и не становится вторым координатором.
    """

    failure = FailureConfig(crash_node='rmu-02', crash_at_ms=500.0, recover_after_ms=1000.0)
    result = run_simulation(scenario_factory(horizon_s=3.0, failure=failure), seed=1)
    assert result.workers['rmu-02'].alive
    assert result.workers['rmu-02'].up_ms < result.end_ms
    assert [entry[1] for entry in result.coordinator_timeline] == ['cloud']
    assert verify_trace(result.consensus_trace).ok


def test_random_dag_workload(scenario_factory):
    """
    Проверка прогона на случайных графах задач.
    """

    workload = WorkloadConfig(request_rate_per_s=3.0, template_mode='random_dag', random_dag_size=5)
    result = run_simulation(scenario_factory(horizon_s=3.0, workload=workload), seed=3)
    assert len(result.records) == result.n_arrivals

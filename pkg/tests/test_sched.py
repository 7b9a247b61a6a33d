import math
from typing import Dict, List, Optional

import numpy as np
import pytest

from app.errors import InvalidInputError
from app.geonet import Topology
from app.models.scenario import PartitionConfig, PPOConfig
from app.models.task import ResourceProfile, WorkloadConfig
from app.partition import Pipeline, partition
from app.policy_net import PolicyNetwork
from app.sched import (IDLE, OFFLOAD, STATE_FEATURES, ActionDecision, CloudPreferencePolicy, EdgePreferencePolicy,
                       PipelineJob, PPOAgent, RandomPolicy, RoundRobinPolicy, SchedulingSnapshot, StateVector,
                       SuccessWindow, encode_state, make_policy, reward, schedule, select_action)
from app.simcore import Replica, WorkerState
from app.workload import instantiate_template


def make_jobs(count: int, origin: str = 'rmu-01', mode: str = 'serial') -> List[PipelineJob]:
    jobs = []
    for task_id in range(count):
        graph = instantiate_template(WorkloadConfig(), task_id=task_id)
        for pipeline in partition(graph, PartitionConfig(mode=mode)):
            jobs.append(PipelineJob(task_id, graph, pipeline, origin, birth_ms=0.0))
    return jobs


def make_snapshot(topology: Topology, workers: Optional[Dict[str, WorkerState]] = None, now_ms: float = 0.0,
                  completed=None) -> SchedulingSnapshot:
    if workers is None:
        workers = {node_id: WorkerState(node) for node_id, node in topology.nodes.items()}
    return SchedulingSnapshot(now_ms=now_ms, timeout_ms=10_000.0, gamma_ms=5.0, topology=topology,
                              workers=workers, winners={}, completed=completed or {}, result_target='cloud')


def test_reward_modes():
    """
    Проверка значений награды в исправленном и буквальном режимах.
    """

    assert reward(2.0, 4.0, 1.0, 0.5, 0.5) == pytest.approx(-3.0)
    assert reward(2.0, 4.0, math.exp(-1.0), 0.5, 0.5) == pytest.approx(-6.0)
    assert reward(2.0, 4.0, 0.5, 0.5, 0.5, mode='literal') == pytest.approx(3.0 / math.log(2.0))
    assert reward(0.0, 0.0, 0.5, 0.5, 0.5, mode='literal') == 0.0
    assert reward(1.0, 1.0, 0.9, 0.5, 0.5) > reward(1.0, 1.0, 0.5, 0.5, 0.5)
    assert reward(1.0, 3.0, 1.0, 1.0, 0.0) == pytest.approx(-1.0)


def test_reward_errors():
    """
    Проверка ошибок при некорректных весах, доле успеха и режиме.
    """

    with pytest.raises(InvalidInputError):
        reward(1.0, 1.0, 1.0, 0.7, 0.7)
    with pytest.raises(InvalidInputError):
        reward(1.0, 1.0, 1.5, 0.5, 0.5)
    with pytest.raises(InvalidInputError):
        reward(1.0, 1.0, 1.0, 0.5, 0.5, mode='inverse')


def test_success_window():
    """
    Проверка доли решений без нарушений в скользящем окне.
    """

    window = SuccessWindow(size=2)
    assert window.rate == 1.0
    window.add(False)
    window.add(True)
    assert window.rate == 0.5
    window.add(True)
    assert len(window) == 2
    assert window.rate == 0.0


def test_action_decision():
    """
    Проверка кодирования действия и запрета не one-hot значений.
    """

    offload = ActionDecision.from_index(OFFLOAD)
    assert (offload.eta_offload, offload.delta_idle, offload.index) == (1, 0, OFFLOAD)
    assert ActionDecision.from_index(IDLE).index == IDLE
    with pytest.raises(InvalidInputError):
        ActionDecision(1, 1)


def test_state_vector_validation():
    """
    Проверка размерности и конечности вектора состояния.
    """

    with pytest.raises(InvalidInputError):
        StateVector(np.zeros(3))
    values = np.zeros(len(STATE_FEATURES))
    values[0] = np.nan
    with pytest.raises(InvalidInputError):
        StateVector(values)


def test_encode_state(small_topology: Topology):
    """
    Проверка признаков состояния для пары (конвейер, исполнитель).
    """

    job = make_jobs(1)[0]
    snapshot = make_snapshot(small_topology)
    state = encode_state(job, 'rmu-03', snapshot).as_dict()
    assert list(state) == list(STATE_FEATURES)
    assert state['priority_compensation'] == pytest.approx(1.0)
    assert state['cpu_requirement'] == pytest.approx(4.3 / 200.0)
    assert state['unresolved_predecessors'] == 0.0
    assert state['remaining_depth'] == pytest.approx(3 / 8)
    assert state['connection_type'] == 2.0
    assert state['has_asic'] == 0.0
    assert 0.0 < state['link_quality'] <= 1.0

    assert encode_state(job, 'cloud', snapshot).as_dict()['connection_type'] == 0.0

    late = make_snapshot(small_topology, now_ms=5_000.0)
    assert encode_state(job, 'rmu-03', late).as_dict()['priority_compensation'] == pytest.approx(math.exp(0.5))

    snapshot.workers['rmu-02'].alive = False
    with pytest.raises(InvalidInputError):
        encode_state(job, 'rmu-02', snapshot)


def test_unresolved_predecessors(small_topology: Topology):
    """
    Проверка учета незавершенных внешних предшественников конвейера.
    """

    jobs = make_jobs(1, mode='full_parallel')
    arbitrate = next(job for job in jobs if job.pipeline.members == (3,))
    snapshot = make_snapshot(small_topology)
    assert snapshot.unresolved(arbitrate) == 3
    done = make_snapshot(small_topology, completed={(0, 0): 1.0, (0, 1): 2.0})
    assert done.unresolved(arbitrate) == 1


def test_select_action():
    """
    Проверка выбора действия в жадном режиме и режиме выборки.
    """

    net = PolicyNetwork(seed=1)
    state = StateVector(np.full(len(STATE_FEATURES), 0.5))
    action, log_prob, _ = select_action(net, state, 'greedy')
    assert action.index == int(np.argmax(net.probs(state.values)[0]))
    assert log_prob <= 0.0
    assert select_action(net, state, 'greedy')[0] == action

    first = select_action(net, state, 'sample', np.random.default_rng(3))
    second = select_action(net, state, 'sample', np.random.default_rng(3))
    assert first == second

    with pytest.raises(InvalidInputError):
        select_action(net, state, 'sample')
    with pytest.raises(InvalidInputError):
        select_action(net, state, 'optimal')


def test_violation_checks(small_topology: Topology):
    """
    Проверка нарушений C2 и C3 при размещении конвейера.
    """

    job = make_jobs(1)[0]
    snapshot = make_snapshot(small_topology)
    assert snapshot.violation(job, 'rmu-02') is None

    snapshot.workers['rmu-02'].alive = False
    assert snapshot.violation(job, 'rmu-02') == 'C3'

    worker = snapshot.workers['rmu-03']
    for i in range(worker.node.queue_capacity):
        worker.queue.append(Replica(1, i, 'rmu-03', 0.1, 0.0))
    assert snapshot.violation(job, 'rmu-03') == 'C2'

    profile = ResourceProfile(cpu_gflops=0.1, needs_asic=True)
    asic_job = PipelineJob(0, job.graph, Pipeline(0, job.pipeline.members, profile, profile), 'rmu-01', 0.0)
    assert snapshot.violation(asic_job, 'rmu-01') == 'C2'


def test_violation_unreachable(small_topology: Topology):
    """
    Проверка нарушения C3 при отсутствии маршрута от источника контекста.
    """

    topology = small_topology.with_down_nodes(frozenset({'rmu-02'}))
    workers = {node_id: WorkerState(node) for node_id, node in topology.nodes.items()}
    workers['rmu-02'].alive = False
    snapshot = make_snapshot(topology, workers)
    assert snapshot.violation(make_jobs(1)[0], 'rmu-03') == 'C3'
    assert snapshot.violation(make_jobs(1)[0], 'cloud') is None


def test_estimate(small_topology: Topology):
    """
    Проверка оценки времени выполнения и передачи конвейера.
    """

    job = make_jobs(1)[0]
    snapshot = make_snapshot(small_topology)
    exec_ms, trans_ms = snapshot.estimate(job, 'rmu-01')
    assert exec_ms == pytest.approx(10.0 + 5.0 + 4.3 / (4.0 / 1000.0 / 2))
    payload = job.graph.subtasks[7].payload_bits
    assert trans_ms == pytest.approx(1000.0 * small_topology.transfer_time(payload, 'rmu-01', 'cloud'))

    _, remote = snapshot.estimate(job, 'rmu-03')
    assert remote > trans_ms


def test_round_robin(small_topology: Topology):
    """
    Проверка циклического обхода исполнителей.
    """

    policy = RoundRobinPolicy('rr', np.random.default_rng(0))
    outcome = policy.decide(make_jobs(5), make_snapshot(small_topology))
    assert [p.worker_ids for p in outcome.placements] == [['cloud'], ['rmu-01'], ['rmu-02'], ['rmu-03'], ['cloud']]
    assert not outcome.violations


def test_round_robin_skips_ineligible(small_topology: Topology):
    """
    Проверка пропуска неподходящих исполнителей циклическим обходом.
    """

    snapshot = make_snapshot(small_topology)
    snapshot.workers['rmu-01'].alive = False
    policy = RoundRobinPolicy('rr', np.random.default_rng(0))
    outcome = policy.decide(make_jobs(3, origin='rmu-02'), snapshot)
    assert [p.worker_ids for p in outcome.placements] == [['cloud'], ['rmu-02'], ['rmu-03']]


def test_edge_preference(small_topology: Topology):
    """
    Проверка выбора наименее загруженного граничного узла.
    """

    policy = EdgePreferencePolicy('eps', np.random.default_rng(0))
    outcome = policy.decide(make_jobs(3), make_snapshot(small_topology))
    assert [p.worker_ids for p in outcome.placements] == [['rmu-01'], ['rmu-02'], ['rmu-03']]


def test_cloud_preference(small_topology: Topology):
    """
    Проверка выбора облака до достижения ω и перехода на граничные узлы.
    """

    policy = CloudPreferencePolicy('cps', np.random.default_rng(0))
    outcome = policy.decide(make_jobs(4), make_snapshot(small_topology))
    assert [p.worker_ids for p in outcome.placements] == [['cloud'], ['cloud'], ['cloud'], ['rmu-01']]


def test_random_policy(small_topology: Topology):
    """
    Проверка детерминированности случайной политики при одинаковом seed.
    """

    first = RandomPolicy('random', np.random.default_rng(4)).decide(make_jobs(6), make_snapshot(small_topology))
    second = RandomPolicy('random', np.random.default_rng(4)).decide(make_jobs(6), make_snapshot(small_topology))
    assert [p.worker_ids for p in first.placements] == [p.worker_ids for p in second.placements]
    assert all(p.worker_ids[0] in small_topology.node_ids for p in first.placements)


def test_no_eligible_worker(small_topology: Topology):
    """
    Проверка фиксации нарушения C2, если все очереди заполнены.
    """

    snapshot = make_snapshot(small_topology)
    for worker_id, worker in snapshot.workers.items():
        for i in range(worker.node.queue_capacity):
            worker.queue.append(Replica(99, i, worker_id, 0.1, 0.0))
    outcome = EdgePreferencePolicy('eps', np.random.default_rng(0)).decide(make_jobs(1), snapshot)
    assert not outcome.placements
    assert outcome.violations == [((0, 0), '', 'C2')]


def test_schedule_skips_completed(small_topology: Topology):
    """
    Проверка пропуска конвейеров, все подзадачи которых уже завершены.
    """

    jobs = make_jobs(2)
    completed = {(0, m): 1.0 for m in range(8)}
    outcome = schedule(jobs, RoundRobinPolicy('rr', np.random.default_rng(0)),
                       make_snapshot(small_topology, completed=completed))
    assert [p.job.task_id for p in outcome.placements] == [1]


def test_make_policy(tmp_path):
    """
    Проверка создания политик по имени и загрузки агента из контрольной точки.
    """

    rng = np.random.default_rng(0)
    assert isinstance(make_policy('round_robin', 'p', rng), RoundRobinPolicy)
    assert isinstance(make_policy('eps', 'p', rng), EdgePreferencePolicy)
    assert isinstance(make_policy('cps', 'p', rng), CloudPreferencePolicy)
    assert isinstance(make_policy('random', 'p', rng), RandomPolicy)
    with pytest.raises(InvalidInputError):
        make_policy('fifo', 'p', rng)

    agent = make_policy('ppo', 'p', rng, PPOConfig(hidden_sizes=(8,)))
    assert isinstance(agent, PPOAgent)
    path = str(tmp_path / 'agent.json')
    agent.save(path)
    restored = make_policy('ppo', 'p', rng, checkpoint=path)
    assert all(np.array_equal(a, b) for a, b in zip(restored.net.parameters(), agent.net.parameters()))


def test_ppo_agent_greedy(small_topology: Topology):
    """
    Проверка решений обученного агента: размещения на подходящих узлах без обновлений сети.
    """

    agent = PPOAgent('ppo', PPOConfig(hidden_sizes=(8,)), np.random.default_rng(1))
    before = [p.copy() for p in agent.net.parameters()]
    outcome = agent.decide(make_jobs(2), make_snapshot(small_topology))
    for placement in outcome.placements:
        assert placement.worker_ids
        assert set(placement.worker_ids) <= set(small_topology.node_ids)
    assert agent.updates == 0
    assert len(agent.buffer) == 0
    assert all(np.array_equal(a, b) for a, b in zip(before, agent.net.parameters()))


def test_ppo_agent_training(small_topology: Topology):
    """
    Проверка обучения агента: опыт копится, сеть обновляется, эпизод завершается.
    """

    cfg = PPOConfig(hidden_sizes=(8,), batch_size=4, minibatch_count=1, learning_rate=1e-2)
    agent = PPOAgent('ppo', cfg, np.random.default_rng(2), training=True)
    before = [p.copy() for p in agent.net.parameters()]
    agent.decide(make_jobs(2), make_snapshot(small_topology))
    assert agent.updates == 1
    assert len(agent.buffer) == 0
    assert any(not np.array_equal(a, b) for a, b in zip(before, agent.net.parameters()))

    agent.end_episode()
    assert len(agent.episodes) == 1
    assert agent.episodes[0].length == 8
    assert agent.episodes[0].ended_by == 'horizon'
    assert math.isfinite(agent.episodes[0].total_reward)
    agent.end_episode()
    assert len(agent.episodes) == 1

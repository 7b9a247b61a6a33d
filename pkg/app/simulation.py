"""
Цикл дискретно-событийной симуляции сети мониторинга: поступление задач, разбиение
на конвейеры, планирование, исполнение реплик, передача контекстов, отказы узлов и
выбор координатора.
"""
import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from app.consensus import ConsensusMsg, ConsensusNode, Effects, MsgKind, Role
from app.errors import InvariantError, UnreachableError
from app.geonet import Topology, apply_degradation, generate_nodes
from app.models.geo import NodeSpec
from app.models.report import CompletionRecord
from app.models.scenario import Scenario
from app.models.task import SubtaskState
from app.partition import PartitionCache, Pipeline
from app.sched import BasePolicy, PipelineJob, PPOAgent, Placement, ScheduleOutcome, SchedulingSnapshot, \
    make_policy, schedule
from app.simcore import (WORK_TOLERANCE, EventKind, EventQueue, Replica, SimEvent, SubtaskTiming, WorkerState,
                         critical_path_ms, end_to_end_time, reassemble_total)
from app.workload import ArrivalProcess, TaskGraph, WorkloadGenerator


STREAMS = ('arrivals', 'workload', 'scheduler', 'consensus', 'ppo', 'failure')

EventSink = Optional[Callable[[Dict[str, Any]], None]]


def rng_streams(seed: int) -> Dict[str, np.random.Generator]:
    """Независимые генераторы для подсистем, порожденные из одного seed."""
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.default_rng(child) for name, child in zip(STREAMS, children)}


def build_topology(scenario: Scenario) -> Topology:
    """Топология сценария с примененной деградацией каналов."""
    cfg = scenario.topology
    nodes: List[NodeSpec] = list(cfg.nodes) or generate_nodes(cfg.rmu_count, cfg.topology_seed, cfg.spacing_m)
    return apply_degradation(Topology(nodes, cfg.link), scenario.degradation)


@dataclass
class EventLog:
    """Поступления задач и решения планировщика, извлеченные из журнала событий."""

    arrivals: List[Dict[str, Any]] = field(default_factory=list)
    decisions: Dict[int, Dict[str, Any]] = field(default_factory=dict)

    @classmethod
    def from_records(cls, records: Iterable[Union[str, Dict[str, Any]]]) -> 'EventLog':
        """
        Разобрать журнал событий.

        Args:
            records (Iterable[Union[str, Dict[str, Any]]]): Записи журнала (JSON строки или словари)

        Returns:
            EventLog: Поступления в порядке журнала и решения по seq события Dispatch
        """

        log = cls()
        for record in records:
            if isinstance(record, str):
                if not record.strip():
                    continue
                record = json.loads(record)
            if record['kind'] == EventKind.TASK_ARRIVAL.value:
                log.arrivals.append({'time': record['time'], **record['payload']})
            elif record['kind'] == EventKind.DISPATCH.value and 'placements' in record['payload']:
                log.decisions[record['seq']] = record['payload']
        return log


class ReplayPolicy(BasePolicy):
    """Политика, повторяющая решения из журнала событий."""

    name = 'replay'

    def __init__(self, name: str, decisions: Dict[int, Dict[str, Any]]):
        super().__init__(name, np.random.default_rng(0))
        self._decisions = decisions
        self.seq: Optional[int] = None

    def decide(self, jobs: Sequence[PipelineJob], snapshot: SchedulingSnapshot) -> ScheduleOutcome:
        entry = self._decisions.get(self.seq, {})
        by_key = {job.key: job for job in jobs}
        outcome = ScheduleOutcome()
        for task_id, pipeline_id, worker_ids in entry.get('placements', []):
            job = by_key.get((task_id, pipeline_id))
            if job is None:
                raise InvariantError(f'Replayed placement of unknown pipeline {(task_id, pipeline_id)}')
            outcome.placements.append(Placement(job, list(worker_ids)))
        for task_id, pipeline_id, constraint in entry.get('blocked', []):
            outcome.violations.append(((task_id, pipeline_id), '', constraint))
        return outcome


@dataclass
class TaskRun:
    """Состояние выполнения одной задачи."""

    graph: TaskGraph
    origin: str
    arrival_ms: float
    pipelines: List[Pipeline]
    chain_prev: Dict[int, Optional[int]]
    unplaced: Set[int]
    replicas: Dict[int, List[Replica]] = field(default_factory=dict)
    winners: Dict[int, Replica] = field(default_factory=dict)
    done: Dict[int, float] = field(default_factory=dict)
    timings: Dict[int, SubtaskTiming] = field(default_factory=dict)
    buffered: List[int] = field(default_factory=list)
    results_in_flight: int = 0
    delivered_ms: float = 0.0
    blocked: Optional[str] = None

    @property
    def task_id(self) -> int:
        """Идентификатор задачи."""
        return self.graph.task_id

    def complete(self) -> bool:
        """Все подзадачи завершены и результаты доставлены."""
        return len(self.done) == len(self.graph) and not self.buffered and self.results_in_flight == 0


@dataclass
class RunResult:
    """Итоги прогона симуляции."""

    records: List[CompletionRecord]
    workers: Dict[str, WorkerState]
    horizon_ms: float
    end_ms: float
    n_arrivals: int
    arrivals_hash: str
    dispatch_log: List[Dict[str, Any]]
    coordinator_timeline: List[Tuple[float, str, int]]
    consensus_trace: List[Dict[str, Any]]
    policy: BasePolicy


class Simulation:
    """
    Экземпляр симуляции одного сценария с одним seed.

    Args:
        scenario (Scenario): Сценарий
        policy (Union[str, BasePolicy, None]): Политика или ее имя (по умолчанию из сценария)
        seed (int): Seed прогона
        name (str): Имя логгера
        event_sink (EventSink): Приемник записей журнала событий
        trace_sink (EventSink): Приемник записей трассы протокола координатора
        replay (Optional[EventLog]): Журнал для воспроизведения поступлений и решений
        horizon_s (Optional[float]): Горизонт вместо указанного в сценарии
        request_rate (Optional[float]): Интенсивность запросов вместо указанной в сценарии
    """

    def __init__(self, scenario: Scenario, policy: Union[str, BasePolicy, None] = None, seed: int = 0,
                 name: str = 'sim', event_sink: EventSink = None, trace_sink: EventSink = None,
                 replay: Optional[EventLog] = None, horizon_s: Optional[float] = None,
                 request_rate: Optional[float] = None):
        if request_rate is not None:
            scenario = scenario.model_copy(update={
                'workload': scenario.workload.model_copy(update={'request_rate_per_s': request_rate})})
        self.scenario = scenario
        self.seed = seed
        self.horizon_ms = 1000.0 * (scenario.run.horizon_s if horizon_s is None else horizon_s)
        self.timeout_ms = scenario.workload.timeout_ms
        self.gamma_ms = scenario.run.decision_latency_ms
        self._logger = logging.getLogger(name)
        self._event_sink = event_sink
        self._trace_sink = trace_sink
        self._rngs = rng_streams(seed)

        self._base_topology = build_topology(scenario)
        self.topology = self._base_topology
        self.workers: Dict[str, WorkerState] = {nid: WorkerState(node)
                                                for nid, node in self._base_topology.nodes.items()}
        self._down: Set[str] = set()

        if replay is not None:
            self.policy: BasePolicy = ReplayPolicy(f'{name}.replay', replay.decisions)
        elif isinstance(policy, BasePolicy):
            self.policy = policy
        else:
            policy_name = policy or scenario.run.policy
            rng = self._rngs['ppo' if policy_name == 'ppo' else 'scheduler']
            self.policy = make_policy(policy_name, f'{name}.policy', rng, scenario.ppo, scenario.mu_e,
                                      scenario.mu_t, scenario.run.checkpoint, scenario.run.train)
        self._replay = replay

        origins = [nid for nid, node in self._base_topology.nodes.items() if not node.is_cloud]
        self._arrivals = ArrivalProcess(scenario.workload, origins, scenario.topology.turnout_count,
                                        self._rngs['arrivals'])
        self._workload = WorkloadGenerator(scenario.workload, self._rngs['workload'])
        self._partitions = PartitionCache(scenario.partition)
        self._replay_cursor = 0
        self._next_task_id = 0
        self._arrivals_digest = hashlib.sha256()
        self._n_arrivals = 0

        self._queue = EventQueue()
        self._active: Dict[int, TaskRun] = {}
        self._graphs: Dict[int, Tuple[TaskGraph, str]] = {}
        self._dispatch_at: Optional[float] = None
        self.records: List[CompletionRecord] = []
        self.dispatch_log: List[Dict[str, Any]] = []
        self.coordinator_timeline: List[Tuple[float, str, int]] = []
        self.consensus_trace: List[Dict[str, Any]] = []

        cluster = list(self._base_topology.node_ids)
        node_seeds = np.random.SeedSequence(int(self._rngs['consensus'].integers(2 ** 63))).spawn(len(cluster))
        self.consensus: Dict[str, ConsensusNode] = {
            nid: ConsensusNode(nid, cluster, scenario.consensus, np.random.default_rng(ss), self._trace)
            for nid, ss in zip(cluster, node_seeds)
        }

        self._handlers = {
            EventKind.TASK_ARRIVAL: self._on_arrival,
            EventKind.DISPATCH: self._on_dispatch,
            EventKind.COMPUTE_COMPLETE: self._on_compute_complete,
            EventKind.TRANSFER_COMPLETE: self._on_transfer_complete,
            EventKind.HEARTBEAT_DUE: self._on_timer,
            EventKind.ELECTION_TIMEOUT: self._on_timer,
            EventKind.NODE_CRASH: self._on_crash,
            EventKind.NODE_RECOVER: self._on_recover,
            EventKind.REQUEST_TIMEOUT: self._on_request_timeout,
        }

    def __repr__(self) -> str:
        return (f'{self.__class__.__name__}(scenario={self.scenario.scenario_id!r}, seed={self.seed}, '
                f'policy={self.policy.name!r})')

    @property
    def now(self) -> float:
        """Текущее модельное время, мс."""
        return self._queue.now

    def _trace(self, record: Dict[str, Any]):
        self.consensus_trace.append(record)
        if self._trace_sink is not None:
            self._trace_sink(record)

    # --- запуск -------------------------------------------------------------

    def run(self) -> RunResult:
        """
        Выполнить прогон до горизонта и завершения всех поступивших задач.

        Raises:
            InvariantError: Нарушен инвариант движка

        Returns:
            RunResult: Итоги прогона
        """

        self._logger.info(f'Run started: scenario={self.scenario.scenario_id} seed={self.seed} '
                          f'policy={self.policy.name} horizon={self.horizon_ms:.0f} ms')
        self._bootstrap()
        while self._queue:
            if self._queue.peek_time() > self.horizon_ms and not self._active:
                break
            event = self._queue.pop()
            self._handlers[event.kind](event)
            if self._event_sink is not None:
                self._event_sink(event.to_json())
            if self.scenario.run.check_invariants:
                self._check_workers()
        end_ms = max(self.horizon_ms, self.now)
        for worker in self.workers.values():
            worker.advance(end_ms)
            if worker.busy_ms > worker.up_ms + WORK_TOLERANCE:
                raise InvariantError(f'Worker {worker.node_id} busy time exceeds uptime')
        if isinstance(self.policy, PPOAgent):
            self.policy.end_episode('horizon')
        self._logger.info(f'Run finished: tasks={len(self.records)} '
                          f'success={sum(r.success for r in self.records)} events={self._queue.processed}')
        return RunResult(self.records, self.workers, self.horizon_ms, end_ms, self._n_arrivals,
                         self._arrivals_digest.hexdigest(), self.dispatch_log, self.coordinator_timeline,
                         self.consensus_trace, self.policy)

    def _bootstrap(self):
        initial = self.scenario.consensus.initial_coordinator or self._base_topology.cloud_id
        for nid, node in self.consensus.items():
            if nid == initial:
                effects = node.start_as_coordinator(0.0)
            else:
                effects = node.start_as_worker(0.0, initial)
            self._apply(nid, effects)
        failure = self.scenario.failure
        if failure.crash_node is not None:
            if failure.crash_at_ms is not None:
                crash_at = failure.crash_at_ms
            else:
                crash_at = float(self._rngs['failure'].uniform(*failure.crash_window_ms))
            self._queue.push(crash_at, EventKind.NODE_CRASH, {'node': failure.crash_node})
            if failure.recover_after_ms is not None:
                self._queue.push(crash_at + failure.recover_after_ms, EventKind.NODE_RECOVER,
                                 {'node': failure.crash_node})
        self._push_next_arrival()

    def _push_next_arrival(self):
        if self._replay is not None:
            if self._replay_cursor >= len(self._replay.arrivals):
                return
            entry = self._replay.arrivals[self._replay_cursor]
            self._replay_cursor += 1
            time, origin = entry['time'], entry['origin']
            graph = TaskGraph.from_payload(entry['graph'])
        else:
            time, origin = self._arrivals.next_arrival()
            if time >= self.horizon_ms:
                return
            graph = self._workload.next_graph(self._next_task_id, time)
        self._next_task_id = graph.task_id + 1
        payload = {'task_id': graph.task_id, 'origin': origin, 'graph': graph.to_payload()}
        self._arrivals_digest.update(json.dumps([time, origin, payload['graph']], sort_keys=True).encode())
        self._graphs[graph.task_id] = (graph, origin)
        self._queue.push(time, EventKind.TASK_ARRIVAL, payload)

    # --- поступление и планирование ------------------------------------------

    def _on_arrival(self, event: SimEvent):
        graph, origin = self._graphs.pop(event.payload['task_id'])
        self._n_arrivals += 1
        signature = ('template',) if self.scenario.workload.template_mode == 'template' else None
        pipelines = self._partitions.get(graph, signature)
        chain_prev: Dict[int, Optional[int]] = {}
        for pipeline in pipelines:
            for prev, member in zip((None,) + pipeline.members, pipeline.members):
                chain_prev[member] = prev
        task = TaskRun(graph, origin, event.time, list(pipelines), chain_prev,
                       {p.pipeline_id for p in pipelines})
        self._active[graph.task_id] = task
        self._queue.push(event.time + self.timeout_ms, EventKind.REQUEST_TIMEOUT, {'task_id': graph.task_id})
        self._logger.debug(f'Task {graph.task_id} arrived from {origin}: {len(pipelines)} pipelines')
        self._request_dispatch(event.time)
        self._push_next_arrival()

    def _request_dispatch(self, at: float):
        if self._dispatch_at is not None and self._dispatch_at <= at:
            return
        self._dispatch_at = at
        self._queue.push(at, EventKind.DISPATCH)

    def coordinator(self) -> Optional[Tuple[str, int]]:
        """Живой координатор с наибольшим term и его term."""
        best = None
        for nid, node in self.consensus.items():
            if node.alive and node.state.role is Role.COORDINATOR:
                if best is None or node.state.term > best[1]:
                    best = (nid, node.state.term)
        return best

    def result_target(self) -> Optional[str]:
        """Получатель результатов: облако, а при его отказе текущий координатор."""
        cloud = self._base_topology.cloud_id
        if cloud is not None and self.workers[cloud].alive:
            return cloud
        current = self.coordinator()
        return current[0] if current else None

    def _pending_jobs(self) -> List[PipelineJob]:
        jobs = []
        for task_id in sorted(self._active):
            task = self._active[task_id]
            for pipeline in task.pipelines:
                if pipeline.pipeline_id in task.unplaced:
                    jobs.append(PipelineJob(task_id, task.graph, pipeline, task.origin, task.arrival_ms))
        return jobs

    def _on_dispatch(self, event: SimEvent):
        if self._dispatch_at == event.time:
            self._dispatch_at = None
        jobs = self._pending_jobs()
        if not jobs:
            return
        current = self.coordinator()
        if current is None:
            event.payload['coordinator'] = None
            self._request_dispatch(event.time + self.scenario.run.dispatch_retry_ms)
            return
        for worker in self.workers.values():
            worker.advance(event.time)
        winners = {(tid, sid): r.worker_id for tid, task in self._active.items() for sid, r in task.winners.items()}
        completed = {(tid, sid): t for tid, task in self._active.items() for sid, t in task.done.items()}
        snapshot = SchedulingSnapshot(event.time, self.timeout_ms, self.gamma_ms, self.topology, self.workers,
                                      winners, completed, self.result_target())
        if isinstance(self.policy, ReplayPolicy):
            self.policy.seq = event.seq
        outcome = schedule(jobs, self.policy, snapshot)

        placements = []
        for placement in outcome.placements:
            self._place(placement, event.time)
            placements.append([placement.job.task_id, placement.job.pipeline.pipeline_id, placement.worker_ids])
        blocked = []
        for key, worker_id, constraint in outcome.violations:
            if worker_id == '' and key[0] in self._active:
                self._active[key[0]].blocked = constraint
                blocked.append([key[0], key[1], constraint])
        coordinator, term = current
        event.payload.update({'coordinator': coordinator, 'term': term, 'placements': placements,
                              'blocked': blocked})
        self.dispatch_log.append({'time': event.time, 'coordinator': coordinator, 'term': term,
                                  'placements': placements})
        if placements:
            self._logger.debug(f'Dispatch at {event.time:.3f} by {coordinator} (term {term}): {placements}')
        if any(t.unplaced for t in self._active.values()):
            self._request_dispatch(event.time + self.scenario.run.dispatch_retry_ms)

    def _place(self, placement: Placement, now: float):
        job = placement.job
        task = self._active[job.task_id]
        task.unplaced.discard(job.pipeline.pipeline_id)
        task.blocked = None
        for worker_id in placement.worker_ids:
            worker = self.workers[worker_id]
            for member in job.pipeline.members:
                if member in task.done:
                    continue
                subtask = task.graph.subtasks[member]
                replica = Replica(job.task_id, member, worker_id, subtask.workload_gflop, now,
                                  job.pipeline.pipeline_id)
                replica.move(SubtaskState.QUEUED)
                replica.move(SubtaskState.SUSPENDED)
                worker.waiting[replica.key] = replica
                worker.assigned_gflop += replica.workload_gflop
                task.replicas.setdefault(member, []).append(replica)
        for member in job.pipeline.members:
            self._release(task, member, now)

    # --- исполнение ---------------------------------------------------------

    def _release(self, task: TaskRun, subtask_id: int, now: float):
        """Отпустить ожидающие реплики подзадачи, если все зависимости выполнены."""
        if subtask_id in task.done:
            return
        graph_preds = task.graph.predecessors(subtask_id)
        chain = task.chain_prev.get(subtask_id)
        deps = set(graph_preds) | ({chain} if chain is not None else set())
        if any(d not in task.done for d in deps):
            return
        for replica in list(task.replicas.get(subtask_id, [])):
            if replica.state is not SubtaskState.SUSPENDED or replica.ready_ms is not None:
                continue
            pred_done = max((task.done[d] for d in deps), default=float('-inf'))
            base = max(replica.dispatch_ms, pred_done)
            try:
                if graph_preds:
                    arrival = max(task.done[p] + 1000.0 * self.topology.transfer_time(
                        task.graph.subtasks[p].payload_bits, task.winners[p].worker_id, replica.worker_id)
                        for p in graph_preds)
                else:
                    arrival = replica.dispatch_ms + 1000.0 * self.topology.transfer_time(
                        task.graph.subtasks[subtask_id].payload_bits, task.origin, replica.worker_id)
            except UnreachableError:
                self._logger.debug(f'Context for {replica.key} is unreachable')
                self._drop_replicas([replica], now)
                if not task.replicas.get(subtask_id):
                    self._fail_task(task, 'C3', now)
                    return
                continue
            ready = max(base, arrival)
            replica.pred_done_ms = pred_done
            replica.idle_ms = max(0.0, pred_done - replica.dispatch_ms)
            replica.inbound_trans_ms = ready - base
            replica.ready_ms = ready
            if ready > now:
                self._queue.push(ready, EventKind.TRANSFER_COMPLETE,
                                 {'transfer': 'context', 'task_id': replica.task_id,
                                  'subtask_id': replica.subtask_id, 'worker': replica.worker_id})
            else:
                self._admit(replica, now)

    def _admit(self, replica: Replica, now: float):
        worker = self.workers[replica.worker_id]
        worker.waiting.pop(replica.key, None)
        replica.move(SubtaskState.QUEUED)
        worker.advance(now)
        if len(worker.running) < worker.node.concurrency_limit and not worker.queue:
            self._start(worker, replica, now)
            self._schedule_completion(worker)
        elif worker.can_admit():
            worker.queue.append(replica)
        else:
            worker.staging.append(replica)

    def _start(self, worker: WorkerState, replica: Replica, now: float):
        task = self._active[replica.task_id]
        for pred in task.graph.predecessors(replica.subtask_id):
            if pred not in task.done or task.done[pred] > now:
                raise InvariantError(f'C4 violated: subtask {replica.key} starts before predecessor {pred}')
        replica.move(SubtaskState.RUNNING)
        replica.start_ms = now
        worker.running.append(replica)
        if len(worker.running) > worker.node.concurrency_limit:
            raise InvariantError(f'Worker {worker.node_id} exceeds its concurrency limit')

    def _fill(self, worker: WorkerState, now: float):
        while worker.queue and len(worker.running) < worker.node.concurrency_limit:
            self._start(worker, worker.queue.popleft(), now)
        while worker.staging and worker.can_admit():
            worker.queue.append(worker.staging.popleft())
        while worker.queue and len(worker.running) < worker.node.concurrency_limit:
            self._start(worker, worker.queue.popleft(), now)

    def _schedule_completion(self, worker: WorkerState):
        worker.epoch += 1
        when = worker.next_completion()
        if when is not None and worker.alive:
            self._queue.push(max(when, self.now), EventKind.COMPUTE_COMPLETE,
                             {'worker': worker.node_id, 'epoch': worker.epoch})

    def _on_compute_complete(self, event: SimEvent):
        worker = self.workers[event.payload['worker']]
        if event.payload['epoch'] != worker.epoch or not worker.alive:
            return
        worker.advance(event.time)
        for replica in worker.finished():
            if replica not in worker.running:
                continue
            worker.running.remove(replica)
            worker.assigned_gflop -= replica.workload_gflop
            if abs(replica.drained - replica.workload_gflop) > WORK_TOLERANCE * max(1.0, replica.workload_gflop):
                raise InvariantError(f'Work not conserved for {replica.key}: '
                                     f'{replica.drained} != {replica.workload_gflop}')
            replica.remaining = 0.0
            replica.end_ms = event.time
            replica.move(SubtaskState.COMPLETED)
            self._on_replica_done(replica, event.time)
        self._fill(worker, event.time)
        self._schedule_completion(worker)

    def _on_replica_done(self, replica: Replica, now: float):
        task = self._active.get(replica.task_id)
        if task is None or replica.subtask_id in task.done:
            return
        sid = replica.subtask_id
        task.done[sid] = now
        task.winners[sid] = replica
        worker = self.workers[replica.worker_id]
        task.timings[sid] = SubtaskTiming(
            subtask_id=sid, node_id=replica.worker_id, on_cloud=worker.node.is_cloud,
            t_queue_ms=self.gamma_ms + (replica.start_ms - replica.ready_ms),
            t_comp_ms=now - replica.start_ms, t_idle_ms=replica.idle_ms,
            t_trans_ms=replica.inbound_trans_ms, start_ms=replica.start_ms, end_ms=now)
        self._drop_replicas([other for other in task.replicas.get(sid, []) if other is not replica], now)
        task.replicas[sid] = [replica]
        if sid in task.graph.sinks:
            task.buffered.append(sid)
            self._deliver_results(task, now)
        for member in task.graph.order:
            if member not in task.done and task.task_id in self._active:
                self._release(task, member, now)
        if task.task_id in self._active and task.complete():
            self._finalize(task, now)

    def _drop_replicas(self, replicas: Iterable[Replica], now: float):
        """Отменить реплики на их исполнителях и занять освободившиеся места."""
        touched: Dict[str, WorkerState] = {}
        for replica in replicas:
            worker = self.workers[replica.worker_id]
            if replica in worker.running:
                worker.advance(now)
                touched[worker.node_id] = worker
            if worker.remove(replica):
                worker.assigned_gflop -= replica.workload_gflop
            replica.cancelled = True
            if replica.state is not SubtaskState.COMPLETED:
                replica.move(SubtaskState.FAILED)
            task = self._active.get(replica.task_id)
            if task is not None and replica in task.replicas.get(replica.subtask_id, []):
                task.replicas[replica.subtask_id].remove(replica)
        for worker_id in sorted(touched):
            worker = touched[worker_id]
            if worker.alive:
                self._fill(worker, now)
            self._schedule_completion(worker)

    def _deliver_results(self, task: TaskRun, now: float):
        target = self.result_target()
        if target is None:
            return
        for sid in list(task.buffered):
            source = task.winners[sid].worker_id
            try:
                delay = 1000.0 * self.topology.transfer_time(task.graph.subtasks[sid].payload_bits, source, target)
            except UnreachableError:
                self._fail_task(task, 'C3', now)
                return
            task.buffered.remove(sid)
            task.timings[sid].t_trans_ms += (now - task.done[sid]) + delay
            task.delivered_ms = max(task.delivered_ms, now + delay)
            if delay > 0:
                task.results_in_flight += 1
                self._queue.push(now + delay, EventKind.TRANSFER_COMPLETE,
                                 {'transfer': 'result', 'task_id': task.task_id, 'subtask_id': sid,
                                  'target': target})
        if task.task_id in self._active and task.complete():
            self._finalize(task, now)

    def _on_transfer_complete(self, event: SimEvent):
        kind = event.payload['transfer']
        if kind == 'consensus':
            self._deliver_message(event)
            return
        task = self._active.get(event.payload['task_id'])
        if task is None:
            return
        if kind == 'result':
            task.results_in_flight -= 1
            if task.complete():
                self._finalize(task, event.time)
            return
        key = (event.payload['task_id'], event.payload['subtask_id'], event.payload['worker'])
        replica = self.workers[key[2]].waiting.get(key)
        if replica is not None and not replica.cancelled:
            self._admit(replica, event.time)

    def _finalize(self, task: TaskRun, now: float, violation: Optional[str] = None):
        del self._active[task.task_id]
        self._drop_replicas([r for sid in sorted(task.replicas) for r in task.replicas[sid]
                             if r.state is not SubtaskState.COMPLETED], now)
        overhead = sum(self.workers[wid].node.fixed_overhead_ms
                       for wid in sorted({r.worker_id for r in task.winners.values()}))
        dependencies = {sid: set(task.graph.predecessors(sid)) |
                        ({task.chain_prev[sid]} if task.chain_prev.get(sid) is not None else set())
                        for sid in task.graph.order}
        span = critical_path_ms(task.graph.order, dependencies,
                                {sid: t.t_comp_ms for sid, t in task.timings.items()})
        elapsed = 0.0 if task.complete() else now - task.arrival_ms
        record = end_to_end_time(task.task_id, task.timings, overhead, self.timeout_ms, violation,
                                 span, max(now, task.delivered_ms), elapsed)
        recomputed = reassemble_total(record.t_overhead_ms, record.t_queue_ms, record.t_comp_ms,
                                      record.t_idle_ms, record.t_trans_ms)
        if recomputed != record.t_total_ms:
            raise InvariantError(f'Record of task {task.task_id} does not reassemble: {recomputed} != '
                                 f'{record.t_total_ms}')
        self.records.append(record)
        self._logger.debug(f'Task {task.task_id} finished: total={record.t_total_ms:.3f} ms '
                           f'violation={record.violation}')

    def _fail_task(self, task: TaskRun, constraint: str, now: float):
        if task.task_id in self._active:
            self._logger.debug(f'Task {task.task_id} failed with {constraint}')
            self._finalize(task, now, constraint)

    def _on_request_timeout(self, event: SimEvent):
        task = self._active.get(event.payload['task_id'])
        if task is not None:
            self._fail_task(task, task.blocked or 'C1', event.time)

    # --- отказы -------------------------------------------------------------

    def _on_crash(self, event: SimEvent):
        node_id = event.payload['node']
        worker = self.workers[node_id]
        if not worker.alive:
            return
        self._logger.info(f'Node {node_id} crashed at {event.time:.3f} ms')
        worker.advance(event.time)
        worker.alive = False
        lost = [*worker.running, *worker.queue, *worker.staging, *worker.waiting.values()]
        self._drop_replicas(lost, event.time)
        worker.epoch += 1
        worker.assigned_gflop = 0.0
        self._down.add(node_id)
        self.topology = self._base_topology.with_down_nodes(frozenset(self._down))
        self.consensus[node_id].crash(event.time)
        for task_id in sorted({r.task_id for r in lost}):
            task = self._active.get(task_id)
            if task is None:
                continue
            orphaned = [r.subtask_id for r in lost if r.task_id == task_id
                        and r.subtask_id not in task.done and not task.replicas.get(r.subtask_id)]
            if orphaned:
                self._fail_task(task, 'C3', event.time)

    def _on_recover(self, event: SimEvent):
        node_id = event.payload['node']
        worker = self.workers[node_id]
        if worker.alive:
            return
        worker.advance(event.time)
        worker.alive = True
        self._down.discard(node_id)
        self.topology = self._base_topology.with_down_nodes(frozenset(self._down))
        self._logger.info(f'Node {node_id} recovered at {event.time:.3f} ms')
        self._apply(node_id, self.consensus[node_id].recover(event.time))

    # --- протокол координатора ------------------------------------------------

    def _on_timer(self, event: SimEvent):
        node = self.consensus[event.payload['node']]
        if not node.alive:
            return
        self._apply(node.node_id, node.on_timer(event.time, event.payload['timer']))

    def _deliver_message(self, event: SimEvent):
        node = self.consensus[event.payload['dst']]
        if not node.alive:
            return
        msg = ConsensusMsg.from_json(event.payload['msg'])
        self._apply(node.node_id, node.on_message(event.time, msg))
        if msg.kind is MsgKind.COORDINATOR_ANNOUNCE:
            for task_id in sorted(self._active):
                task = self._active.get(task_id)
                if task is not None and any(task.winners[s].worker_id == node.node_id for s in task.buffered):
                    self._deliver_results(task, event.time)

    def _apply(self, node_id: str, effects: Effects):
        now = self.now
        for delay, name in effects.timers:
            kind = EventKind.HEARTBEAT_DUE if name.startswith('heartbeat:') else EventKind.ELECTION_TIMEOUT
            self._queue.push(now + delay, kind, {'node': node_id, 'timer': name})
        bits = self.scenario.consensus.message_bits
        for dst, msg in effects.messages:
            targets = [dst] if dst is not None else [n for n in self.consensus if n != node_id]
            for target in targets:
                if target in self._down or node_id in self._down:
                    continue
                try:
                    delay = 1000.0 * self.topology.transfer_time(bits, node_id, target)
                except UnreachableError:
                    continue
                self._queue.push(now + delay, EventKind.TRANSFER_COMPLETE,
                                 {'transfer': 'consensus', 'src': node_id, 'dst': target, 'msg': msg.to_json()})
        if effects.promoted:
            term = self.consensus[node_id].state.term
            self.coordinator_timeline.append((now, node_id, term))
            self._logger.info(f'{node_id} elected coordinator for term {term} at {now:.3f} ms')
            for task_id in sorted(self._active):
                task = self._active.get(task_id)
                if task is not None and task.buffered:
                    self._deliver_results(task, now)
            if any(t.unplaced for t in self._active.values()):
                self._request_dispatch(now)

    def _check_workers(self):
        for worker in self.workers.values():
            if len(worker.running) > worker.node.concurrency_limit:
                raise InvariantError(f'Worker {worker.node_id} exceeds concurrency limit')
            if len(worker.queue) > worker.node.queue_capacity:
                raise InvariantError(f'Worker {worker.node_id} exceeds queue capacity')
            if not worker.alive and worker.occupancy:
                raise InvariantError(f'Dead worker {worker.node_id} holds replicas')


def run_simulation(scenario: Scenario, policy: Union[str, BasePolicy, None] = None, seed: int = 0,
                   **kwargs) -> RunResult:
    """Выполнить один прогон симуляции."""
    return Simulation(scenario, policy, seed, **kwargs).run()

"""
Ядро дискретно-событийной симуляции и модель исполнения на узле.

Время измеряется в миллисекундах. Подзадачи на узле обслуживаются в режиме
разделения процессора: скорость одной подзадачи C / max(N_cores, n_running).
"""
import heapq
import itertools
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Deque, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from app.errors import ConstraintViolation, InvariantError, QueueOverflowError
from app.models.geo import NodeSpec
from app.models.report import CompletionRecord
from app.models.task import Subtask, SubtaskState, transition


WORK_TOLERANCE = 1e-9


class EventKind(str, Enum):
    """Типы событий симуляции."""

    TASK_ARRIVAL = 'TaskArrival'
    DISPATCH = 'Dispatch'
    COMPUTE_COMPLETE = 'ComputeComplete'
    TRANSFER_COMPLETE = 'TransferComplete'
    HEARTBEAT_DUE = 'HeartbeatDue'
    ELECTION_TIMEOUT = 'ElectionTimeout'
    NODE_CRASH = 'NodeCrash'
    NODE_RECOVER = 'NodeRecover'
    REQUEST_TIMEOUT = 'RequestTimeout'


@dataclass(order=True)
class SimEvent:
    """Событие симуляции, упорядочивается по (time, seq)."""

    time: float
    seq: int
    kind: EventKind = field(compare=False)
    payload: Dict[str, Any] = field(default_factory=dict, compare=False)

    def to_json(self) -> Dict[str, Any]:
        """Запись журнала событий."""
        return {'time': self.time, 'seq': self.seq, 'kind': self.kind.value, 'payload': self.payload}


class EventQueue:
    """Очередь событий с приоритетом (time, seq)."""

    def __init__(self):
        self._heap: List[SimEvent] = []
        self._seq = itertools.count()
        self.now = 0.0
        self.processed = 0

    def __len__(self) -> int:
        return len(self._heap)

    def push(self, time: float, kind: EventKind, payload: Optional[Dict[str, Any]] = None) -> SimEvent:
        """
        Запланировать событие.

        Raises:
            InvariantError: Событие планируется в прошлом
        """

        if time < self.now:
            raise InvariantError(f'Event {kind.value} scheduled at {time} before now {self.now}')
        event = SimEvent(time, next(self._seq), kind, payload or {})
        heapq.heappush(self._heap, event)
        return event

    def pop(self) -> SimEvent:
        """Извлечь ближайшее событие и продвинуть часы."""
        event = heapq.heappop(self._heap)
        if event.time < self.now:
            raise InvariantError(f'Event time went backwards: {event.time} < {self.now}')
        self.now = event.time
        self.processed += 1
        return event

    def peek_time(self) -> Optional[float]:
        """Время ближайшего события."""
        return self._heap[0].time if self._heap else None


@dataclass(eq=False)
class Replica:
    """Экземпляр подзадачи, размещенный на конкретном узле."""

    task_id: int
    subtask_id: int
    worker_id: str
    workload_gflop: float
    dispatch_ms: float
    pipeline_id: int = 0
    ready_ms: Optional[float] = None
    start_ms: Optional[float] = None
    end_ms: Optional[float] = None
    remaining: float = 0.0
    drained: float = 0.0
    pred_done_ms: float = float('-inf')
    inbound_trans_ms: float = 0.0
    idle_ms: float = 0.0
    state: SubtaskState = SubtaskState.PENDING
    cancelled: bool = False

    def __post_init__(self):
        self.remaining = self.workload_gflop

    @property
    def key(self) -> Tuple[int, int, str]:
        """Ключ реплики (задача, подзадача, узел)."""
        return self.task_id, self.subtask_id, self.worker_id

    def move(self, state: SubtaskState):
        """Перевести реплику в новое состояние."""
        self.state = transition(self.state, state)


class WorkerState:
    """
    Состояние исполнителя: очередь готовых подзадач, буфер ожидания места в очереди,
    подзадачи ожидающие предшественников и выполняющиеся подзадачи.
    """

    def __init__(self, node: NodeSpec):
        self.node = node
        self.queue: Deque[Replica] = deque()
        self.staging: Deque[Replica] = deque()
        self.waiting: Dict[Tuple[int, int, str], Replica] = {}
        self.running: List[Replica] = []
        self.alive = True
        self.busy_ms = 0.0
        self.up_ms = 0.0
        self.used_capacity_ms = 0.0
        self.assigned_gflop = 0.0
        self.epoch = 0
        self._last_ms = 0.0

    def __repr__(self) -> str:
        return (f'{self.__class__.__name__}(node={self.node.node_id!r}, running={len(self.running)}, '
                f'queue={len(self.queue)}, staging={len(self.staging)}, alive={self.alive})')

    @property
    def node_id(self) -> str:
        """Идентификатор узла."""
        return self.node.node_id

    @property
    def backlog(self) -> int:
        """Количество назначенных, но еще не выполняющихся реплик."""
        return len(self.queue) + len(self.staging) + len(self.waiting)

    @property
    def occupancy(self) -> int:
        """Все назначенные на узел реплики."""
        return self.backlog + len(self.running)

    def per_task_rate(self, n_running: Optional[int] = None) -> float:
        """Скорость обслуживания одной подзадачи, GFLOP/мс."""
        n_running = len(self.running) if n_running is None else n_running
        return self.node.capacity_gflops / 1000.0 / max(self.node.n_cores, n_running)

    def advance(self, now: float):
        """Продвинуть выполнение до момента now."""
        dt = now - self._last_ms
        if dt < 0:
            raise InvariantError(f'Worker {self.node_id} clock went backwards')
        if dt > 0 and self.alive:
            self.up_ms += dt
            if self.running:
                self.busy_ms += dt
                n = len(self.running)
                self.used_capacity_ms += dt * self.node.capacity_gflops * min(n, self.node.n_cores) / self.node.n_cores
                rate = self.per_task_rate()
                for replica in self.running:
                    step = min(replica.remaining, rate * dt)
                    replica.remaining -= rate * dt
                    replica.drained += step
        self._last_ms = now

    def next_completion(self) -> Optional[float]:
        """Момент завершения ближайшей выполняющейся подзадачи."""
        if not self.running:
            return None
        rate = self.per_task_rate()
        return self._last_ms + max(0.0, min(r.remaining for r in self.running)) / rate

    def finished(self) -> List[Replica]:
        """Реплики, у которых не осталось работы."""
        return [r for r in self.running if r.remaining <= WORK_TOLERANCE * max(1.0, r.workload_gflop)]

    def can_admit(self) -> bool:
        """Есть ли место в очереди исполнителя."""
        return len(self.queue) < self.node.queue_capacity

    def admit_check(self):
        """
        Проверка приема нового конвейера.

        Raises:
            QueueOverflowError: Очередь заполнена
        """

        if not self.can_admit():
            raise QueueOverflowError(f'Queue of {self.node_id} is full ({self.node.queue_capacity})')

    def remove(self, replica: Replica) -> bool:
        """Убрать реплику из всех структур узла."""
        if replica in self.running:
            self.running.remove(replica)
            return True
        for container in (self.queue, self.staging):
            if replica in container:
                container.remove(replica)
                return True
        return self.waiting.pop(replica.key, None) is not None


@dataclass
class SubtaskTiming:
    """Разложение времени выполнения одной подзадачи, мс."""

    subtask_id: int
    node_id: str
    on_cloud: bool
    t_queue_ms: float = 0.0
    t_comp_ms: float = 0.0
    t_idle_ms: float = 0.0
    t_trans_ms: float = 0.0
    start_ms: float = 0.0
    end_ms: float = 0.0


def estimate_duration_ms(workload_gflop: float, node: NodeSpec) -> float:
    """Оценка длительности подзадачи при единственной занятости: ς / (C / N_cores)."""
    return workload_gflop / node.core_rate


def queueing_time(worker: WorkerState, pending_durations: Sequence[float]) -> float:
    """
    Оценка ожидания в очереди исполнителя.

    Args:
        worker (WorkerState): Исполнитель
        pending_durations (Sequence[float]): Оценки длительности подзадач впереди в очереди, мс

    Raises:
        QueueOverflowError: Очередь заполнена
        InvariantError: Занятость превышает лимит параллельности при пустой очереди

    Returns:
        float: Время ожидания, мс
    """

    worker.admit_check()
    occupancy = len(worker.running) + len(pending_durations)
    if occupancy <= worker.node.concurrency_limit:
        return 0.0
    if not pending_durations:
        raise InvariantError(f'Worker {worker.node_id} exceeds concurrency with an empty queue')
    return float(sum(pending_durations))


def pending_durations(worker: WorkerState) -> List[float]:
    """Оценки длительности реплик, ожидающих в очереди узла."""
    return [estimate_duration_ms(r.workload_gflop, worker.node) for r in itertools.chain(worker.queue, worker.staging)]


def total_queue_time(candidates: Iterable[WorkerState], gamma_ms: float,
                     durations: Optional[Mapping[str, Sequence[float]]] = None) -> float:
    """
    Γ плюс минимальное ожидание в очереди среди подходящих исполнителей.

    Raises:
        ConstraintViolation: Множество подходящих исполнителей пусто (C2)

    Returns:
        float: Время, мс
    """

    best: Optional[float] = None
    for worker in candidates:
        pending = durations[worker.node_id] if durations is not None else pending_durations(worker)
        try:
            value = queueing_time(worker, pending)
        except QueueOverflowError:
            continue
        best = value if best is None else min(best, value)
    if best is None:
        raise ConstraintViolation('C2', 'No eligible worker for the subtask')
    return gamma_ms + best


def compute_time(subtask: Subtask, node: NodeSpec, n_running: int = 1) -> float:
    """
    Время вычисления подзадачи при постоянной занятости узла.

    Raises:
        ConstraintViolation: Подзадаче нужен ASIC, которого нет на узле (C2)

    Returns:
        float: Время, мс
    """

    if subtask.profile.needs_asic and not node.has_asic:
        raise ConstraintViolation('C2', f'{node.node_id} has no ASIC')
    rate = node.capacity_gflops / 1000.0 / max(node.n_cores, n_running)
    return subtask.workload_gflop / rate


def idle_time(predecessor_completions: Sequence[float], ready_time: float) -> float:
    """Простой подзадачи в ожидании предшественников: max(0, max(завершения) - готовность)."""
    if not predecessor_completions:
        return 0.0
    return max(0.0, max(predecessor_completions) - ready_time)


def reassemble_total(overhead_ms: float, queue_ms: float, comp_ms: float,
                     idle_ms: float, trans_ms: float) -> float:
    """Полное время задачи, единственное место суммирования компонент."""
    return overhead_ms + queue_ms + comp_ms + idle_ms + trans_ms


def critical_path_ms(order: Sequence[int], dependencies: Mapping[int, Iterable[int]],
                     comp_ms: Mapping[int, float]) -> float:
    """Самый длинный путь по времени вычислений через граф зависимостей."""
    finish: Dict[int, float] = {}
    for node in order:
        start = max((finish[p] for p in dependencies.get(node, ()) if p in finish), default=0.0)
        finish[node] = start + comp_ms.get(node, 0.0)
    return max(finish.values(), default=0.0)


def end_to_end_time(task_id: int, timings: Mapping[int, SubtaskTiming], overhead_ms: float,
                    timeout_ms: float, violation: Optional[str] = None,
                    span_ms: float = 0.0, finished_ms: float = 0.0,
                    elapsed_ms: float = 0.0) -> CompletionRecord:
    """
    Собрать итоговую запись задачи из разложений подзадач.

    Для подзадач в облаке время ожидания в очереди не учитывается. Если задача
    прервана до завершения, недостающее до elapsed_ms время относится к простою.

    Args:
        task_id (int): Идентификатор задачи
        timings (Mapping[int, SubtaskTiming]): Разложения по подзадачам
        overhead_ms (float): Суммарные накладные расходы L
        timeout_ms (float): Таймаут запроса
        violation (Optional[str], optional): Уже зафиксированное нарушение
        span_ms (float, optional): Длина критического пути вычислений
        finished_ms (float, optional): Момент завершения
        elapsed_ms (float, optional): Время от поступления до прерывания незавершенной задачи

    Returns:
        CompletionRecord: Запись о выполнении задачи
    """

    queue = comp = idle = trans = 0.0
    for subtask_id in sorted(timings):
        item = timings[subtask_id]
        if not item.on_cloud:
            queue += item.t_queue_ms
        comp += item.t_comp_ms
        idle += item.t_idle_ms
        trans += item.t_trans_ms
    idle += max(0.0, elapsed_ms - reassemble_total(overhead_ms, queue, comp, idle, trans))
    total = reassemble_total(overhead_ms, queue, comp, idle, trans)
    if violation is None and total > timeout_ms:
        violation = 'C1'
    return CompletionRecord(task_id=task_id, t_queue_ms=queue, t_comp_ms=comp, t_idle_ms=idle,
                            t_trans_ms=trans, t_overhead_ms=overhead_ms, t_total_ms=total,
                            success=violation is None, violation=violation,
                            t_span_ms=span_ms, finished_ms=finished_ms)

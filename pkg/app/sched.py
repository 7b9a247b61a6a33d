"""
Планирование выгрузки конвейеров: кодирование состояния MDP, функция награды,
агент PPO и статические политики сравнения.
"""
import math
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from app.errors import InvalidInputError, UnreachableError
from app.geonet import Topology
from app.models.scenario import PPOConfig
from app.partition import Pipeline
from app.policy_net import PolicyNetwork
from app.ppo import (Experience, GradientAscent, ReplayBuffer, load_checkpoint, make_optimizer,
                     ppo_update, save_checkpoint)
from app.simcore import WorkerState
from app.workload import TaskGraph


STATE_FEATURES = (
    'priority_compensation', 'cpu_requirement', 'memory_requirement', 'unresolved_predecessors',
    'remaining_depth', 'connection_type', 'utilization', 'has_asic', 'link_quality',
)
STATE_VERSION = 1
OFFLOAD, IDLE = 0, 1
PRIORITY_CLAMP = 20.0
POLICIES = ('ppo', 'random', 'round_robin', 'eps', 'cps')


@dataclass(frozen=True)
class StateVector:
    """Наблюдение MDP фиксированной размерности в порядке STATE_FEATURES."""

    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (len(STATE_FEATURES),) or not np.all(np.isfinite(self.values)):
            raise InvalidInputError(f'Invalid state vector: {self.values!r}')

    def as_dict(self) -> Dict[str, float]:
        """Значения признаков по именам."""
        return {name: float(v) for name, v in zip(STATE_FEATURES, self.values)}


@dataclass(frozen=True)
class ActionDecision:
    """Действие агента: простой (delta_idle) или выгрузка (eta_offload)."""

    delta_idle: int
    eta_offload: int

    def __post_init__(self):
        if {self.delta_idle, self.eta_offload} != {0, 1}:
            raise InvalidInputError(f'Action must be one-hot, got {self}')

    @classmethod
    def from_index(cls, index: int) -> 'ActionDecision':
        """Действие по индексу выхода сети."""
        return cls(delta_idle=int(index == IDLE), eta_offload=int(index == OFFLOAD))

    @property
    def index(self) -> int:
        """Индекс действия в выходе сети."""
        return OFFLOAD if self.eta_offload else IDLE


@dataclass
class PipelineJob:
    """Конвейер задачи, ожидающий размещения."""

    task_id: int
    graph: TaskGraph
    pipeline: Pipeline
    origin: str
    birth_ms: float

    @property
    def key(self) -> Tuple[int, int]:
        """Ключ (задача, конвейер)."""
        return self.task_id, self.pipeline.pipeline_id

    def external_inputs(self) -> List[Tuple[int, Optional[int]]]:
        """Пары (член конвейера, внешний предшественник); None для истоков графа."""
        members = set(self.pipeline.members)
        inputs = []
        for member in self.pipeline.members:
            preds = self.graph.predecessors(member)
            if not preds:
                inputs.append((member, None))
            inputs.extend((member, p) for p in preds if p not in members)
        return inputs


@dataclass
class Placement:
    """Решение о размещении конвейера на исполнителях."""

    job: PipelineJob
    worker_ids: List[str] = field(default_factory=list)


@dataclass
class ScheduleOutcome:
    """Результат раунда планирования."""

    placements: List[Placement] = field(default_factory=list)
    violations: List[Tuple[Tuple[int, int], str, str]] = field(default_factory=list)


class SchedulingSnapshot:
    """
    Снимок состояния системы для одного раунда планирования.

    Резервирования внутри раунда учитываются при оценке нагрузки, чтобы
    последовательные решения одного раунда видели друг друга.
    """

    def __init__(self, now_ms: float, timeout_ms: float, gamma_ms: float, topology: Topology,
                 workers: Mapping[str, WorkerState], winners: Mapping[Tuple[int, int], str],
                 completed: Mapping[Tuple[int, int], float], result_target: Optional[str]):
        self.now_ms = now_ms
        self.timeout_ms = timeout_ms
        self.gamma_ms = gamma_ms
        self.topology = topology
        self.workers = workers
        self.winners = winners
        self.completed = completed
        self.result_target = result_target
        self.max_capacity = max(w.node.capacity_gflops for w in workers.values())
        self.max_memory = max(w.node.memory_mb for w in workers.values())
        peak_rate = topology.link.bandwidth_bps * math.log2(1.0 + topology.max_snr())
        self.max_link_quality = math.log1p(peak_rate) / 0.01 ** 2
        self._planned_gflop: Dict[str, float] = {}
        self._planned_count: Dict[str, int] = {}

    def alive_ids(self) -> List[str]:
        """Идентификаторы живых исполнителей по возрастанию."""
        return sorted(wid for wid, w in self.workers.items() if w.alive)

    def reserve(self, job: PipelineJob, worker_id: str):
        """Учесть размещение внутри раунда."""
        gflop = sum(job.graph.subtasks[m].workload_gflop for m in job.pipeline.members)
        self._planned_gflop[worker_id] = self._planned_gflop.get(worker_id, 0.0) + gflop
        self._planned_count[worker_id] = self._planned_count.get(worker_id, 0) + len(job.pipeline.members)

    def occupancy(self, worker_id: str) -> int:
        """Реплики на узле с учетом резервирований раунда."""
        return self.workers[worker_id].occupancy + self._planned_count.get(worker_id, 0)

    def load_ratio(self, worker_id: str) -> float:
        """Ожидаемое время разгрузки узла, мс."""
        worker = self.workers[worker_id]
        gflop = worker.assigned_gflop + self._planned_gflop.get(worker_id, 0.0)
        return gflop / (worker.node.capacity_gflops / 1000.0)

    def context_source(self, job: PipelineJob, pred: Optional[int]) -> str:
        """Узел, с которого придет контекст предшественника (или источник задачи)."""
        if pred is None:
            return job.origin
        return self.winners.get((job.task_id, pred), job.origin)

    def unresolved(self, job: PipelineJob) -> int:
        """Количество незавершенных внешних предшественников конвейера."""
        return sum(1 for _, p in job.external_inputs()
                   if p is not None and (job.task_id, p) not in self.completed)

    def violation(self, job: PipelineJob, worker_id: str) -> Optional[str]:
        """
        Проверка ограничений размещения конвейера на исполнителе.

        Returns:
            Optional[str]: Идентификатор нарушенного ограничения или None
        """

        worker = self.workers.get(worker_id)
        if worker is None or not worker.alive:
            return 'C3'
        if not job.pipeline.peak_profile.fits(worker.node) or not worker.can_admit():
            return 'C2'
        try:
            for _, pred in job.external_inputs():
                self.topology.transfer_time(0.0, self.context_source(job, pred), worker_id)
            if self.result_target is not None and set(job.pipeline.members) & set(job.graph.sinks):
                self.topology.transfer_time(0.0, worker_id, self.result_target)
        except UnreachableError:
            return 'C3'
        return None

    def estimate(self, job: PipelineJob, worker_id: str) -> Tuple[float, float]:
        """
        Оценка времени выполнения и передачи конвейера на исполнителе, мс.

        Returns:
            Tuple[float, float]: (T_EXEC, T_TRANS)
        """

        worker = self.workers[worker_id]
        node = worker.node
        wait = 0.0
        if not node.is_cloud and self.occupancy(worker_id) >= node.concurrency_limit:
            wait = self.load_ratio(worker_id)
        rate = node.capacity_gflops / 1000.0 / max(node.n_cores, len(worker.running) + 1)
        comp = sum(job.graph.subtasks[m].workload_gflop / rate for m in job.pipeline.members)
        exec_ms = node.fixed_overhead_ms + self.gamma_ms + wait + comp
        trans_ms = 0.0
        try:
            for member, pred in job.external_inputs():
                payload = job.graph.subtasks[pred if pred is not None else member].payload_bits
                trans_ms += 1000.0 * self.topology.transfer_time(payload, self.context_source(job, pred), worker_id)
            if self.result_target is not None:
                for sink in set(job.pipeline.members) & set(job.graph.sinks):
                    payload = job.graph.subtasks[sink].payload_bits
                    trans_ms += 1000.0 * self.topology.transfer_time(payload, worker_id, self.result_target)
        except UnreachableError:
            trans_ms = math.inf
        return exec_ms, trans_ms


def encode_state(job: PipelineJob, worker_id: str, snapshot: SchedulingSnapshot) -> StateVector:
    """
    Кодирование пары (конвейер, исполнитель) в вектор состояния.

    Raises:
        InvalidInputError: Исполнитель недоступен

    Returns:
        StateVector: Вектор состояния
    """

    worker = snapshot.workers.get(worker_id)
    if worker is None or not worker.alive:
        raise InvalidInputError(f'Cannot encode state for dead worker {worker_id}')
    age = max(0.0, snapshot.now_ms - job.birth_ms)
    size = float(len(job.graph))
    profile = job.pipeline.aggregate_profile
    topo = snapshot.topology
    tr = topo.link_rate(job.origin, worker_id)
    loss = min(1.0, max(0.01, topo.loss_rate(job.origin, worker_id)))
    link_quality = math.log1p(tr) / loss ** 2 / snapshot.max_link_quality
    utilization = worker.busy_ms / worker.up_ms if worker.up_ms > 0 else 0.0
    values = np.array([
        math.exp(min(age / snapshot.timeout_ms, PRIORITY_CLAMP)),
        profile.cpu_gflops / snapshot.max_capacity,
        profile.memory_mb / snapshot.max_memory,
        snapshot.unresolved(job) / size,
        max(job.graph.remaining_depth[m] for m in job.pipeline.members) / size,
        float(topo.connection_type(job.origin, worker_id)),
        utilization,
        float(worker.node.has_asic),
        link_quality,
    ])
    return StateVector(values)


def select_action(net: PolicyNetwork, state: StateVector, mode: str,
                  rng: Optional[np.random.Generator] = None) -> Tuple[ActionDecision, float, float]:
    """
    Выбор действия по распределению актора.

    Args:
        net (PolicyNetwork): Сеть политики
        state (StateVector): Состояние
        mode (str): 'sample' или 'greedy'
        rng (Optional[np.random.Generator]): Генератор для режима 'sample'

    Raises:
        TrainingDivergenceError: Нечисловые логиты

    Returns:
        Tuple[ActionDecision, float, float]: Действие, его log-вероятность и оценка критика
    """

    probs = net.probs(state.values)[0]
    if mode == 'greedy':
        index = int(np.argmax(probs))
    elif mode == 'sample':
        if rng is None:
            raise InvalidInputError('Sampling requires an RNG')
        index = int(rng.choice(len(probs), p=probs))
    else:
        raise InvalidInputError(f'Unknown action mode: {mode}')
    value = float(net.values(state.values)[0][0])
    return ActionDecision.from_index(index), float(np.log(max(probs[index], 1e-300))), value


def reward(t_exec: float, t_trans: float, success_rate: float, mu_e: float, mu_t: float,
           mode: str = 'corrected') -> float:
    """
    Награда за решение.

    'corrected': R = -(μE·T_EXEC + μT·T_TRANS)·(1 - ln σ);
    'literal':   R = -(μE·T_EXEC + μT·T_TRANS) / ln σ.

    Raises:
        InvalidInputError: Некорректные веса или доля успешных решений

    Returns:
        float: Значение награды
    """

    if abs(mu_e + mu_t - 1.0) > 1e-9 or not 0 <= mu_e <= 1 or not 0 <= mu_t <= 1:
        raise InvalidInputError(f'Invalid weights {mu_e = } {mu_t = }')
    if not 0.0 <= success_rate <= 1.0:
        raise InvalidInputError(f'Success rate out of range: {success_rate}')
    cost = mu_e * t_exec + mu_t * t_trans
    if mode == 'corrected':
        return -cost * (1.0 - math.log(min(1.0, max(1e-6, success_rate))))
    if mode == 'literal':
        if cost == 0.0:
            return 0.0
        return -cost / math.log(min(1.0 - 1e-6, max(1e-6, success_rate)))
    raise InvalidInputError(f'Unknown reward mode: {mode}')


class SuccessWindow:
    """Доля решений без нарушений среди последних N решений."""

    def __init__(self, size: int = 100):
        self._window: Deque[bool] = deque(maxlen=size)

    def __len__(self) -> int:
        return len(self._window)

    def add(self, violated: bool):
        """Учесть решение."""
        self._window.append(violated)

    @property
    def rate(self) -> float:
        """σ_sr, равна 1 для пустого окна."""
        if not self._window:
            return 1.0
        return 1.0 - sum(self._window) / len(self._window)


class BasePolicy:
    """Базовая политика планирования."""

    name = 'base'

    def __init__(self, name: str, rng: np.random.Generator):
        self._logger = logging.getLogger(name)
        self._rng = rng

    def __repr__(self) -> str:
        return f'{self.__class__.__name__}(name={self._logger.name!r})'

    def decide(self, jobs: Sequence[PipelineJob], snapshot: SchedulingSnapshot) -> ScheduleOutcome:
        """Принять решения о размещении конвейеров."""
        outcome = ScheduleOutcome()
        for job in jobs:
            checks = {wid: snapshot.violation(job, wid) for wid in snapshot.alive_ids()}
            candidates = [wid for wid, constraint in checks.items() if constraint is None]
            chosen = self.choose(job, candidates, snapshot) if candidates else None
            if chosen is None:
                # C3 only when every worker is unreachable
                constraint = 'C3' if checks and all(c == 'C3' for c in checks.values()) else 'C2'
                outcome.violations.append((job.key, '', constraint))
                continue
            snapshot.reserve(job, chosen)
            outcome.placements.append(Placement(job, [chosen]))
        return outcome

    def choose(self, job: PipelineJob, candidates: List[str], snapshot: SchedulingSnapshot) -> Optional[str]:
        """Выбор исполнителя среди подходящих."""
        raise NotImplementedError


class RandomPolicy(BasePolicy):
    """Равновероятный выбор среди подходящих исполнителей."""

    name = 'random'

    def choose(self, job, candidates, snapshot):
        return candidates[int(self._rng.integers(len(candidates)))]


class RoundRobinPolicy(BasePolicy):
    """Циклический обход исполнителей, неподходящие пропускаются."""

    name = 'round_robin'

    def __init__(self, name: str, rng: np.random.Generator):
        super().__init__(name, rng)
        self._last: Optional[str] = None

    def choose(self, job, candidates, snapshot):
        ring = snapshot.alive_ids()
        start = 0 if self._last is None else (ring.index(self._last) + 1 if self._last in ring
                                              else sum(1 for w in ring if w < self._last))
        for offset in range(len(ring)):
            worker_id = ring[(start + offset) % len(ring)]
            if worker_id in candidates:
                self._last = worker_id
                return worker_id
        return None


def _least_loaded(candidates: Sequence[str], snapshot: SchedulingSnapshot) -> Optional[str]:
    if not candidates:
        return None
    return min(candidates, key=lambda wid: (snapshot.load_ratio(wid), wid))


class EdgePreferencePolicy(BasePolicy):
    """Наименее загруженный подходящий граничный узел, облако только при необходимости."""

    name = 'eps'

    def choose(self, job, candidates, snapshot):
        edges = [wid for wid in candidates if not snapshot.workers[wid].node.is_cloud]
        return _least_loaded(edges, snapshot) or _least_loaded(candidates, snapshot)


class CloudPreferencePolicy(BasePolicy):
    """Облако пока его занятость ниже ω, затем наименее загруженный граничный узел."""

    name = 'cps'

    def choose(self, job, candidates, snapshot):
        clouds = [wid for wid in candidates if snapshot.workers[wid].node.is_cloud]
        for cloud in clouds:
            if snapshot.occupancy(cloud) < snapshot.workers[cloud].node.concurrency_limit:
                return cloud
        edges = [wid for wid in candidates if wid not in clouds]
        return _least_loaded(edges, snapshot) or _least_loaded(clouds, snapshot)


@dataclass
class EpisodeStat:
    """Итоги эпизода обучения."""

    episode: int
    total_reward: float
    mean_reward: float
    length: int
    ended_by: str


@dataclass
class _Decision:
    state: StateVector
    action: ActionDecision
    log_prob: float
    value: float
    reward: Optional[float] = None
    violated: bool = False


class PPOAgent(BasePolicy):
    """
    Агент PPO: перебирает пары (конвейер, исполнитель) и для каждой решает,
    выгружать ли конвейер. Один конвейер может быть выгружен на несколько узлов,
    первое завершение побеждает.

    Args:
        name (str): Имя логгера
        cfg (PPOConfig): Гиперпараметры
        rng (np.random.Generator): Генератор выборки действий и мини-выборок
        mu_e (float): Вес времени выполнения
        mu_t (float): Вес времени передачи
        net (Optional[PolicyNetwork]): Начальная сеть
        training (bool): Режим обучения
    """

    name = 'ppo'

    def __init__(self, name: str, cfg: PPOConfig, rng: np.random.Generator, mu_e: float = 0.5,
                 mu_t: float = 0.5, net: Optional[PolicyNetwork] = None, training: bool = False):
        super().__init__(name, rng)
        self.cfg = cfg
        self.mu_e, self.mu_t = mu_e, mu_t
        self.net = net or PolicyNetwork(len(STATE_FEATURES), cfg.hidden_sizes, 2, cfg.seed)
        self.snapshot = self.net.copy()
        self.training = training
        self.buffer = ReplayBuffer()
        self.optimizer: GradientAscent = make_optimizer(cfg)
        self.window = SuccessWindow(cfg.success_window)
        self.episodes: List[EpisodeStat] = []
        self.updates = 0
        self._episode_reward = 0.0
        self._episode_len = 0
        self._consecutive_violations = 0
        self._timeout_ms = 10_000.0

    @classmethod
    def from_checkpoint(cls, name: str, path: str, rng: np.random.Generator, mu_e: float = 0.5,
                        mu_t: float = 0.5, training: bool = False) -> 'PPOAgent':
        """Агент с сетью из контрольной точки."""
        net, cfg = load_checkpoint(path, STATE_VERSION)
        return cls(name, cfg, rng, mu_e, mu_t, net=net, training=training)

    def save(self, path: str):
        """Сохранить текущую сеть."""
        save_checkpoint(path, self.net, self.cfg, STATE_VERSION)

    def _cost_reward(self, exec_ms: float, trans_ms: float) -> float:
        timeout = self._timeout_ms
        return reward(min(exec_ms / timeout, 1.0), min(trans_ms / timeout, 1.0), self.window.rate,
                      self.mu_e, self.mu_t, self.cfg.reward_mode)

    def decide(self, jobs: Sequence[PipelineJob], snapshot: SchedulingSnapshot) -> ScheduleOutcome:
        outcome = ScheduleOutcome()
        self._timeout_ms = snapshot.timeout_ms
        mode = 'sample' if self.training else 'greedy'
        for job in jobs[:self.cfg.max_pipelines_per_round]:
            sweep: List[_Decision] = []
            placed: List[str] = []
            costs: List[Tuple[float, float]] = []
            for worker_id in snapshot.alive_ids():
                state = encode_state(job, worker_id, snapshot)
                action, log_prob, value = select_action(self.net, state, mode, self._rng)
                decision = _Decision(state, action, log_prob, value)
                if action.index == OFFLOAD:
                    constraint = snapshot.violation(job, worker_id)
                    if constraint is not None:
                        decision.violated = True
                        outcome.violations.append((job.key, worker_id, constraint))
                    else:
                        exec_ms, trans_ms = snapshot.estimate(job, worker_id)
                        costs.append((exec_ms, trans_ms))
                        snapshot.reserve(job, worker_id)
                        placed.append(worker_id)
                sweep.append(decision)
            for decision in sweep:
                unplaced_idle = not placed and decision.action.index == IDLE
                self.window.add(decision.violated or unplaced_idle)
            cost_rewards = [self._cost_reward(e, t) for e, t in costs]
            offload_rewards = iter(cost_rewards)
            for decision in sweep:
                if decision.violated or (not placed and decision.action.index == IDLE):
                    decision.reward = self._cost_reward(self._timeout_ms, self._timeout_ms)
                elif decision.action.index == OFFLOAD:
                    decision.reward = next(offload_rewards)
                else:
                    decision.reward = max(cost_rewards)
            if placed:
                outcome.placements.append(Placement(job, placed))
            self._record(sweep)
        if self.training and len(self.buffer) >= self.cfg.batch_size:
            self.snapshot, _ = ppo_update(self.net, self.snapshot, self.buffer, self.cfg, self.optimizer, self._rng)
            self.updates += 1
        return outcome

    def _record(self, sweep: List[_Decision]):
        for i, decision in enumerate(sweep):
            self._episode_len += 1
            self._episode_reward += decision.reward
            self._consecutive_violations = self._consecutive_violations + 1 if decision.violated else 0
            ended_by = None
            if self._consecutive_violations >= self.cfg.max_consecutive_violations:
                ended_by = 'violations'
            elif self._episode_len >= self.cfg.max_episode_iters:
                ended_by = 'iterations'
            if self.training:
                next_state = sweep[i + 1].state if i + 1 < len(sweep) else decision.state
                self.buffer.add(Experience(decision.state.values, decision.action.index, decision.reward,
                                           next_state.values, decision.log_prob, decision.value,
                                           done=ended_by is not None))
            if ended_by is not None:
                self.end_episode(ended_by)

    def end_episode(self, ended_by: str = 'horizon'):
        """Завершить текущий эпизод и сохранить его статистику."""
        if self._episode_len == 0:
            return
        stat = EpisodeStat(len(self.episodes), self._episode_reward,
                           self._episode_reward / self._episode_len, self._episode_len, ended_by)
        self.episodes.append(stat)
        self._logger.debug(f'Episode {stat.episode} ended by {ended_by}: '
                           f'length={stat.length} mean_reward={stat.mean_reward:.6f}')
        self._episode_reward = 0.0
        self._episode_len = 0
        self._consecutive_violations = 0


def make_policy(policy: str, name: str, rng: np.random.Generator, cfg: Optional[PPOConfig] = None,
                mu_e: float = 0.5, mu_t: float = 0.5, checkpoint: Optional[str] = None,
                training: bool = False) -> BasePolicy:
    """
    Создать политику планирования по имени.

    Raises:
        InvalidInputError: Неизвестная политика
    """

    if policy == 'ppo':
        if checkpoint is not None:
            return PPOAgent.from_checkpoint(name, checkpoint, rng, mu_e, mu_t, training)
        return PPOAgent(name, cfg or PPOConfig(), rng, mu_e, mu_t, training=training)
    classes = {cls.name: cls for cls in (RandomPolicy, RoundRobinPolicy, EdgePreferencePolicy,
                                         CloudPreferencePolicy)}
    if policy not in classes:
        raise InvalidInputError(f'Unknown policy "{policy}", expected one of {POLICIES}')
    return classes[policy](name, rng)


def schedule(jobs: Sequence[PipelineJob], policy: BasePolicy, snapshot: SchedulingSnapshot) -> ScheduleOutcome:
    """
    Раунд планирования: конвейеры с полностью завершенными подзадачами пропускаются.

    Returns:
        ScheduleOutcome: Размещения и зафиксированные нарушения
    """

    pending = [job for job in jobs
               if any((job.task_id, m) not in snapshot.completed for m in job.pipeline.members)]
    return policy.decide(pending, snapshot)


import math
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, Field, model_validator

from .geo import DegradationRule, LinkParams, NodeKind, NodeSpec
from .task import WorkloadConfig


class PartitionConfig(BaseModel):
    """Параметры разбиения графа задачи на конвейеры."""

    granularity_g: int = Field(3, ge=1)
    mode: Literal['greedy', 'serial', 'full_parallel'] = 'greedy'
    seeding_bonus: float = Field(0.5, ge=0.0, description=(
        'Сродство пустого конвейера. При 0.5 сумма косинусной близости компонентов шаблона всегда больше, '
        'и жадное разбиение шаблона совпадает с последовательным; для распределения по G конвейерам '
        'нужно большее значение, например 2.0 в scenarios/desk.ini'))


class PPOConfig(BaseModel):
    """Гиперпараметры PPO агента."""

    discount: float = Field(0.99, gt=0.0, le=1.0)
    kl_beta: float = Field(0.02, ge=0.0)
    entropy_coef: float = Field(0.1, ge=0.0)
    value_coef: float = Field(0.5, ge=0.0)
    clip_eps: float = Field(0.2, gt=0.0, lt=1.0)
    learning_rate: float = Field(1e-4, gt=0.0)
    batch_size: int = Field(128, ge=1)
    minibatch_count: int = Field(4, ge=1)
    max_episode_iters: int = Field(1200, ge=1)
    max_consecutive_violations: int = Field(10, ge=1)
    reward_mode: Literal['corrected', 'literal'] = 'corrected'
    optimizer: Literal['adam', 'sgd'] = 'adam'
    hidden_sizes: Tuple[int, ...] = (64, 64)
    success_window: int = Field(100, ge=1)
    max_pipelines_per_round: int = Field(64, ge=1)
    seed: int = 0


class ConsensusConfig(BaseModel):
    """Параметры протокола выбора координатора, все времена в миллисекундах."""

    heartbeat_interval_ms: float = Field(50.0, gt=0)
    heartbeat_timeout_ms: float = Field(150.0, gt=0)
    election_wait_lo_ms: float = Field(150.0, gt=0)
    election_wait_hi_ms: float = Field(300.0, gt=0)
    message_bits: float = Field(8192.0, ge=0)
    initial_coordinator: Optional[str] = None

    @model_validator(mode='after')
    def _check_window(self) -> 'ConsensusConfig':
        if self.election_wait_lo_ms > self.election_wait_hi_ms:
            raise ValueError('election wait window is empty')
        if self.heartbeat_timeout_ms <= self.heartbeat_interval_ms:
            raise ValueError('heartbeat timeout must exceed the heartbeat interval')
        return self


class FailureConfig(BaseModel):
    """Расписание отказа узла."""

    crash_node: Optional[str] = None
    crash_at_ms: Optional[float] = Field(None, ge=0)
    crash_window_ms: Optional[Tuple[float, float]] = None
    recover_after_ms: Optional[float] = Field(None, gt=0)

    @model_validator(mode='after')
    def _check_schedule(self) -> 'FailureConfig':
        if self.crash_node is None:
            return self
        if (self.crash_at_ms is None) == (self.crash_window_ms is None):
            raise ValueError('exactly one of crash_at_ms and crash_window_ms is required')
        if self.crash_window_ms is not None:
            low, high = self.crash_window_ms
            if not 0 <= low <= high:
                raise ValueError('crash window must be an increasing non-negative pair')
        return self


class TopologyConfig(BaseModel):
    """
    Описание топологии: явный список узлов или параметры генерации.

    Если список узлов пуст, топология генерируется из rmu_count и topology_seed.
    """

    nodes: List[NodeSpec] = []
    rmu_count: int = Field(5, ge=1)
    turnout_count: int = Field(50, ge=1)
    spacing_m: float = Field(900.0, gt=0)
    topology_seed: int = 0
    link: LinkParams = LinkParams()

    @model_validator(mode='after')
    def _check_nodes(self) -> 'TopologyConfig':
        if not self.nodes:
            return self
        ids = [node.node_id for node in self.nodes]
        if len(set(ids)) != len(ids):
            raise ValueError('node ids must be unique')
        clouds = [node for node in self.nodes if node.kind is NodeKind.CLOUD]
        if len(clouds) != 1:
            raise ValueError('exactly one cloud node is required')
        return self


class DegradationGrid(BaseModel):
    """Сетка экспериментов деградации сети."""

    fractions: Tuple[float, ...] = (0.2, 0.4, 0.6, 0.8, 1.0)
    delays_ms: Tuple[float, ...] = (20.0, 100.0, 500.0, math.inf)
    seed: int = 0

    @model_validator(mode='after')
    def _check_values(self) -> 'DegradationGrid':
        if any(not 0.0 <= fraction <= 1.0 for fraction in self.fractions):
            raise ValueError('fractions must lie in [0, 1]')
        if any(math.isnan(delay) or delay < 0 for delay in self.delays_ms):
            raise ValueError('delays must be non-negative')
        return self


class RunConfig(BaseModel):
    """Параметры прогона симуляции."""

    horizon_s: float = Field(600.0, ge=0)
    seeds: Tuple[int, ...] = (1, 2, 3, 4, 5)
    policy: Literal['ppo', 'random', 'round_robin', 'eps', 'cps'] = 'ppo'
    checkpoint: Optional[str] = None
    train: bool = False
    decision_latency_ms: float = Field(5.0, ge=0)
    dispatch_retry_ms: float = Field(20.0, gt=0)
    sweep_rates: Tuple[float, ...] = (10.0, 50.0, 200.0)
    training_horizon_s: float = Field(120.0, gt=0)
    training_rounds: int = Field(3, ge=1)
    per_rate_training: bool = False
    check_invariants: bool = False


class Scenario(BaseModel):
    """Полное описание эксперимента, проверяется целиком до запуска."""

    scenario_id: str = Field('scenario', min_length=1)
    topology: TopologyConfig = TopologyConfig()
    workload: WorkloadConfig = WorkloadConfig()
    partition: PartitionConfig = PartitionConfig()
    ppo: PPOConfig = PPOConfig()
    consensus: ConsensusConfig = ConsensusConfig()
    failure: FailureConfig = FailureConfig()
    degradation: DegradationRule = DegradationRule()
    degradation_grid: DegradationGrid = DegradationGrid()
    run: RunConfig = RunConfig()
    mu_e: float = Field(0.5, ge=0.0, le=1.0)
    mu_t: float = Field(0.5, ge=0.0, le=1.0)

    @model_validator(mode='after')
    def _check_scenario(self) -> 'Scenario':
        if abs(self.mu_e + self.mu_t - 1.0) > 1e-9:
            raise ValueError('mu_e + mu_t must equal 1')
        ids = {node.node_id for node in self.topology.nodes}
        for name, node_id in (('initial_coordinator', self.consensus.initial_coordinator),
                              ('crash_node', self.failure.crash_node)):
            if ids and node_id is not None and node_id not in ids:
                raise ValueError(f'{name} "{node_id}" is not a topology node')
        if self.workload.template_mode == 'random_dag' and \
                self.partition.mode == 'greedy' and \
                self.partition.granularity_g > self.workload.random_dag_size:
            raise ValueError('granularity_g exceeds random_dag_size')
        if self.workload.template_mode == 'template' and self.partition.granularity_g > 8:
            raise ValueError('granularity_g exceeds the template size')
        return self


class RunRequest(BaseModel):
    """Запрос на синхронный прогон сценария через API."""

    scenario: Scenario = Scenario()
    policy: Optional[Literal['ppo', 'random', 'round_robin', 'eps', 'cps']] = None
    seed: int = 0
    horizon_s: Optional[float] = Field(None, ge=0)
    request_rate: Optional[float] = Field(None, gt=0)

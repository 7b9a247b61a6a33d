from enum import Enum
from typing import Dict, FrozenSet, Iterable, Literal, Tuple

from pydantic import BaseModel, Field, model_validator

from app.errors import InvariantError
from .geo import NodeSpec


class ResourceProfile(BaseModel):
    """Требования подзадачи к ресурсам узла (Ψ)."""

    cpu_gflops: float = Field(0.0, ge=0.0)
    memory_mb: float = Field(0.0, ge=0.0)
    needs_asic: bool = False

    class Config:
        """Конфигурация модели."""

        frozen = True

    def fits(self, node: NodeSpec) -> bool:
        """
        Покомпонентная проверка sys_res(node) >= Ψ.

        Args:
            node (NodeSpec): Проверяемый узел

        Returns:
            bool: True если узел удовлетворяет требованиям
        """

        if self.needs_asic and not node.has_asic:
            return False
        return node.capacity_gflops >= self.cpu_gflops and node.memory_mb >= self.memory_mb

    @classmethod
    def total(cls, profiles: Iterable['ResourceProfile']) -> 'ResourceProfile':
        """Суммарный профиль группы подзадач."""

        cpu, memory, asic = 0.0, 0.0, False
        for profile in profiles:
            cpu += profile.cpu_gflops
            memory += profile.memory_mb
            asic = asic or profile.needs_asic
        return cls(cpu_gflops=cpu, memory_mb=memory, needs_asic=asic)

    @classmethod
    def peak(cls, profiles: Iterable['ResourceProfile']) -> 'ResourceProfile':
        """Покомпонентный максимум профилей группы подзадач."""

        cpu, memory, asic = 0.0, 0.0, False
        for profile in profiles:
            cpu = max(cpu, profile.cpu_gflops)
            memory = max(memory, profile.memory_mb)
            asic = asic or profile.needs_asic
        return cls(cpu_gflops=cpu, memory_mb=memory, needs_asic=asic)


class SubtaskState(str, Enum):
    """Состояние подзадачи (Φ)."""

    PENDING = 'pending'
    QUEUED = 'queued'
    RUNNING = 'running'
    SUSPENDED = 'suspended'
    COMPLETED = 'completed'
    FAILED = 'failed'


ALLOWED_TRANSITIONS: Dict[SubtaskState, FrozenSet[SubtaskState]] = {
    SubtaskState.PENDING: frozenset({SubtaskState.QUEUED, SubtaskState.FAILED}),
    SubtaskState.QUEUED: frozenset({SubtaskState.RUNNING, SubtaskState.SUSPENDED, SubtaskState.FAILED}),
    SubtaskState.RUNNING: frozenset({SubtaskState.COMPLETED, SubtaskState.SUSPENDED, SubtaskState.FAILED}),
    SubtaskState.SUSPENDED: frozenset({SubtaskState.QUEUED, SubtaskState.FAILED}),
    SubtaskState.COMPLETED: frozenset(),
    SubtaskState.FAILED: frozenset(),
}


def transition(current: SubtaskState, new: SubtaskState) -> SubtaskState:
    """
    Проверка перехода между состояниями подзадачи.

    Args:
        current (SubtaskState): Текущее состояние
        new (SubtaskState): Запрошенное состояние

    Raises:
        InvariantError: Переход запрещен таблицей переходов

    Returns:
        SubtaskState: Новое состояние
    """

    if new is current:
        return current
    if new not in ALLOWED_TRANSITIONS[current]:
        raise InvariantError(f'Forbidden subtask transition {current.value} -> {new.value}')
    return new


class Subtask(BaseModel):
    """Подзадача графа: объем вычислений ς, профиль Ψ, предшественники ζ и состояние Φ."""

    subtask_id: int = Field(ge=0)
    name: str = ''
    workload_gflop: float = Field(gt=0)
    profile: ResourceProfile = ResourceProfile()
    predecessors: FrozenSet[int] = frozenset()
    payload_bits: float = Field(64 * 1024 * 8, ge=0)
    birth_time_ms: float = 0.0
    state: SubtaskState = SubtaskState.PENDING

    class Config:
        """Конфигурация модели."""

        frozen = True


TEMPLATE_NODES: Tuple[Tuple[str, float, float], ...] = (
    ('segA', 0.4, 64.0),
    ('segB', 0.4, 64.0),
    ('segC', 0.4, 64.0),
    ('arbitrate', 0.05, 32.0),
    ('mlp', 0.2, 96.0),
    ('dae', 0.8, 192.0),
    ('tcn', 2.0, 256.0),
    ('fuse', 0.05, 32.0),
)

TEMPLATE_EDGES: Tuple[Tuple[str, str], ...] = (
    ('segA', 'arbitrate'), ('segB', 'arbitrate'), ('segC', 'arbitrate'),
    ('arbitrate', 'mlp'), ('arbitrate', 'dae'), ('arbitrate', 'tcn'),
    ('mlp', 'fuse'), ('dae', 'fuse'), ('tcn', 'fuse'),
)


class WorkloadConfig(BaseModel):
    """Параметры генератора нагрузки."""

    request_rate_per_s: float = Field(10.0, gt=0)
    zipf_s: float = Field(1.1, gt=0)
    flops_min: int = Field(2, ge=1)
    flops_max: int = Field(10, ge=1)
    dep_probability: float = Field(0.5, ge=0.0, le=1.0)
    timeout_s: float = Field(10.0, gt=0)
    template_mode: Literal['template', 'random_dag'] = 'template'
    random_dag_size: int = Field(8, ge=1)
    arrival_mode: Literal['poisson', 'turnout'] = 'poisson'
    turnout_interval_min: Tuple[float, float] = (10.0, 30.0)
    payload_bits: float = Field(64 * 1024 * 8, ge=0)
    memory_mb: float = Field(128.0, ge=0)
    template_flops: Dict[str, float] = {}
    template_memory_mb: Dict[str, float] = {}
    rng_seed: int = 0

    @model_validator(mode='after')
    def _check_ranges(self) -> 'WorkloadConfig':
        if self.flops_min > self.flops_max:
            raise ValueError('flops_min must not exceed flops_max')
        low, high = self.turnout_interval_min
        if not 0 < low <= high:
            raise ValueError('turnout_interval_min must be an increasing positive pair')
        known = {name for name, _, _ in TEMPLATE_NODES}
        for mapping in (self.template_flops, self.template_memory_mb):
            unknown = set(mapping) - known
            if unknown:
                raise ValueError(f'Unknown template nodes: {sorted(unknown)}')
        if any(value <= 0 for value in self.template_flops.values()):
            raise ValueError('template flops must be positive')
        return self

    @property
    def timeout_ms(self) -> float:
        """Таймаут запроса в миллисекундах."""
        return self.timeout_s * 1000.0

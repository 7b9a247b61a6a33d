import math
from enum import Enum
from typing import Literal

from pydantic import BaseModel, Field, field_validator


class NodeKind(str, Enum):
    """Тип вычислительного узла."""

    CLOUD = 'cloud'
    RMU = 'rmu'


class GeoPosition(BaseModel):
    """Географическое положение узла, широта и долгота в градусах."""

    lat: float = Field(ge=-90.0, le=90.0)
    lon: float = Field(ge=-180.0, le=180.0)

    class Config:
        """Конфигурация модели."""

        frozen = True


class NodeSpec(BaseModel):
    """
    Описание вычислительного узла: облако или RMU со своей базовой станцией.

    Емкость узла задается в GFLOPS, задержки в миллисекундах, покрытие в метрах.
    """

    node_id: str = Field(min_length=1, max_length=32, pattern=r'^[A-Za-z0-9_.-]+$')
    kind: NodeKind
    position: GeoPosition
    capacity_gflops: float = Field(gt=0)
    n_cores: int = Field(ge=1)
    concurrency_limit: int = Field(ge=1)
    queue_capacity: int = Field(ge=1)
    memory_mb: float = Field(4096.0, gt=0)
    coverage_m: float = Field(0.0, ge=0)
    transmit_power_w: float = Field(0.1, ge=0)
    has_asic: bool = False
    fixed_overhead_ms: float = Field(10.0, ge=0)

    class Config:
        """Конфигурация модели."""

        frozen = True

    @property
    def is_cloud(self) -> bool:
        """Признак облачного узла."""
        return self.kind is NodeKind.CLOUD

    @property
    def core_rate(self) -> float:
        """Производительность одного ядра в GFLOP за миллисекунду."""
        return self.capacity_gflops / self.n_cores / 1000.0


class LinkParams(BaseModel):
    """Параметры беспроводных (D2D) и проводных каналов связи."""

    bandwidth_bps: float = Field(300e6, gt=0)
    noise_w: float = Field(1e-11, gt=0)
    path_loss_exponent: float = Field(3.5, ge=0)
    propagation_speed_mps: float = Field(3e8, gt=0)
    attenuation_factor: float = Field(0.67, gt=0, le=1)
    backhaul_available: bool = True
    min_distance_m: float = Field(1.0, gt=0)
    distance_mode: Literal['haversine', 'literal'] = 'haversine'
    rate_mode: Literal['physical', 'literal'] = 'physical'

    class Config:
        """Конфигурация модели."""

        frozen = True


class DegradationRule(BaseModel):
    """
    Правило деградации сети: доля D2D каналов, получающих дополнительную задержку.

    Бесконечная задержка означает потерю пакетов на выбранных каналах.
    """

    affected_fraction: float = Field(0.0, ge=0.0, le=1.0)
    added_delay_ms: float = Field(0.0, ge=0.0)
    seed: int = 0

    class Config:
        """Конфигурация модели."""

        frozen = True

    @field_validator('added_delay_ms')
    @classmethod
    def _check_delay(cls, value: float) -> float:
        if math.isnan(value):
            raise ValueError('added_delay_ms must be a number or inf')
        return value

    @property
    def drops_packets(self) -> bool:
        """Признак потери пакетов на затронутых каналах."""
        return math.isinf(self.added_delay_ms)

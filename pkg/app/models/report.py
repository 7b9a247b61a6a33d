from typing import Dict, Literal, Optional

from pydantic import BaseModel, Field


ARTIFACT_VERSION = '1.0.0'

CSV_COLUMNS = ('task_id', 't_queue_ms', 't_comp_ms', 't_idle_ms', 't_trans_ms',
               't_overhead_ms', 't_total_ms', 'success', 'violation')


class CompletionRecord(BaseModel):
    """
    Итог выполнения вычислительной задачи.

    Разложение времени: t_total = t_overhead + t_queue + t_comp + t_idle + t_trans.
    Поле t_span_ms содержит длину критического пути вычислений.
    """

    task_id: int
    t_queue_ms: float = 0.0
    t_comp_ms: float = 0.0
    t_idle_ms: float = 0.0
    t_trans_ms: float = 0.0
    t_overhead_ms: float = 0.0
    t_total_ms: float = 0.0
    success: bool = False
    violation: Optional[Literal['C1', 'C2', 'C3', 'C4']] = None
    t_span_ms: float = 0.0
    finished_ms: float = 0.0

    @property
    def t_exec_ms(self) -> float:
        """Время выполнения без учета передачи контекста."""
        return self.t_total_ms - self.t_trans_ms

    def csv_row(self) -> list:
        """Строка CSV в порядке CSV_COLUMNS."""

        return [self.task_id, repr(self.t_queue_ms), repr(self.t_comp_ms), repr(self.t_idle_ms),
                repr(self.t_trans_ms), repr(self.t_overhead_ms), repr(self.t_total_ms),
                int(self.success), self.violation or '']


class SummaryReport(BaseModel):
    """Сводный отчет одного прогона (сценарий, политика, seed)."""

    report_id: Optional[int] = None
    scenario_id: str
    scenario_hash: str
    policy: str
    seed: int
    request_rate: float
    n_tasks: int = Field(ge=0)
    n_success: int = Field(ge=0)
    avg_comp_ms: Optional[float] = None
    avg_trans_ms: Optional[float] = None
    avg_total_ms: Optional[float] = None
    load_std: float = Field(0.0, ge=0.0)
    utilization_pct: float = Field(0.0, ge=0.0, le=100.0)
    success_rate: float = Field(0.0, ge=0.0, le=1.0)
    violations: Dict[str, int] = {}
    modes: Dict[str, str] = {}
    artifact_version: str = ARTIFACT_VERSION

    class Config:
        """Конфигурация модели."""

        from_attributes = True

"""Агрегирование результатов прогона: разложение времени ответа, балансировка нагрузки, утилизация."""
import math
from collections import Counter
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np

from app.errors import InvalidInputError
from app.models.report import CompletionRecord, SummaryReport
from app.simcore import WorkerState


SUMMARY_COLUMNS = ('scenario_id', 'scenario_hash', 'policy', 'seed', 'request_rate', 'n_tasks', 'n_success',
                   'avg_comp_ms', 'avg_trans_ms', 'avg_total_ms', 'load_std', 'utilization_pct',
                   'success_rate', 'violations', 'modes', 'artifact_version')
EMPTY_MARKER = 'N/A'


def weighted_load_std(workloads: Sequence[float], weights: Sequence[float]) -> float:
    """
    Взвешенное стандартное отклонение нагрузки узлов.

    sqrt(Σ W_i (x_i - x̄)² / Σ W_i), где x̄ = Σ W_i x_i / Σ W_i.

    Args:
        workloads (Sequence[float]): Нагрузка x_i каждого узла
        weights (Sequence[float]): Веса W_i, пропорциональные емкости узлов

    Raises:
        InvalidInputError: Разная длина, отрицательные или нулевые в сумме веса

    Returns:
        float: Значение метрики
    """

    x = np.asarray(workloads, dtype=float)
    w = np.asarray(weights, dtype=float)
    if x.shape != w.shape or x.ndim != 1 or x.size == 0:
        raise InvalidInputError(f'Workloads and weights must be equal non-empty vectors: {x.shape} vs {w.shape}')
    if np.any(w < 0):
        raise InvalidInputError('Weights must be non-negative')
    total = float(np.sum(w))
    if total <= 0.0:
        raise InvalidInputError('Sum of weights must be positive')
    mean = float(np.dot(w, x)) / total
    return math.sqrt(max(0.0, float(np.dot(w, (x - mean) ** 2)) / total))


def node_workloads(workers: Mapping[str, WorkerState]) -> Dict[str, float]:
    """Доля времени занятости каждого узла за время его работы, %."""
    return {wid: (100.0 * w.busy_ms / w.up_ms if w.up_ms > 0 else 0.0) for wid, w in sorted(workers.items())}


def utilization_pct(workers: Mapping[str, WorkerState]) -> float:
    """Использованная вычислительная мощность относительно доступной, %."""
    available = sum(w.node.capacity_gflops * w.up_ms for w in workers.values())
    if available <= 0:
        return 0.0
    used = sum(w.used_capacity_ms for w in workers.values())
    return min(100.0, max(0.0, 100.0 * used / available))


def mean_or_none(values: Sequence[float]) -> Optional[float]:
    """Среднее значение или None для пустой выборки."""
    if not values:
        return None
    return math.fsum(values) / len(values)


def summarize(records: Iterable[CompletionRecord], workers: Mapping[str, WorkerState], *,
              scenario_id: str, scenario_hash: str, policy: str, seed: int, request_rate: float,
              modes: Optional[Dict[str, str]] = None) -> SummaryReport:
    """
    Сводный отчет прогона.

    Средние считаются по успешным задачам; при их отсутствии поля средних пусты (None).
    avg_comp_ms: среднее время выполнения без передачи, поэтому avg_comp + avg_trans = avg_total.

    Args:
        records (Iterable[CompletionRecord]): Записи о задачах
        workers (Mapping[str, WorkerState]): Состояния исполнителей в конце прогона
        scenario_id (str): Идентификатор сценария
        scenario_hash (str): Хэш сценария
        policy (str): Политика планирования
        seed (int): Seed прогона
        request_rate (float): Интенсивность запросов
        modes (Optional[Dict[str, str]], optional): Режимы формул

    Returns:
        SummaryReport: Отчет
    """

    records = list(records)
    successful = [r for r in records if r.success]
    workloads = node_workloads(workers)
    weights = [workers[wid].node.capacity_gflops for wid in workloads]
    load_std = weighted_load_std(list(workloads.values()), weights) if workloads else 0.0
    violations = Counter(r.violation for r in records if r.violation is not None)
    return SummaryReport(
        scenario_id=scenario_id, scenario_hash=scenario_hash, policy=policy, seed=seed,
        request_rate=request_rate, n_tasks=len(records), n_success=len(successful),
        avg_comp_ms=mean_or_none([r.t_exec_ms for r in successful]),
        avg_trans_ms=mean_or_none([r.t_trans_ms for r in successful]),
        avg_total_ms=mean_or_none([r.t_total_ms for r in successful]),
        load_std=load_std,
        utilization_pct=utilization_pct(workers),
        success_rate=len(successful) / len(records) if records else 0.0,
        violations=dict(sorted(violations.items())),
        modes=dict(sorted((modes or {}).items())),
    )


def format_cell(value) -> str:
    """Текстовое значение ячейки CSV, пустые значения отмечаются N/A."""
    if value is None:
        return EMPTY_MARKER
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, dict):
        return ';'.join(f'{k}={v}' for k, v in value.items())
    return str(value)


def summary_row(report: SummaryReport) -> List[str]:
    """Строка CSV отчета в порядке SUMMARY_COLUMNS."""
    data = report.model_dump()
    return [format_cell(data[column]) for column in SUMMARY_COLUMNS]


def mean_of(reports: Iterable[SummaryReport], field_name: str) -> Optional[float]:
    """Среднее поле по отчетам, пустые значения пропускаются."""
    return mean_or_none([getattr(r, field_name) for r in reports if getattr(r, field_name) is not None])

from typing import List, Optional

from fastapi import APIRouter, HTTPException
from pydantic import ValidationError

from app.db.reports import report_repo
from app.errors import SimulationError
from app.harness import run_single
from app.models.report import SummaryReport
from app.models.scenario import RunRequest


experiments_api = APIRouter()


@experiments_api.post('/api/v1/runs')
def run_scenario(request: RunRequest) -> SummaryReport:
    """Синхронный прогон сценария, отчет сохраняется в базе данных."""

    try:
        report, _ = run_single(request.scenario, request.policy, request.seed, horizon_s=request.horizon_s,
                               request_rate=request.request_rate, name='api.run')
    except (SimulationError, ValidationError) as err:
        raise HTTPException(status_code=422, detail=f'{err.__class__.__name__}: {err}') from err

    report_id = report_repo.add_report(report)
    return report.model_copy(update={'report_id': report_id})


@experiments_api.get('/api/v1/reports')
def get_all_reports(scenario_id: Optional[str] = None) -> List[SummaryReport]:
    """Извлечение всех сохраненных отчетов."""

    return report_repo.get_all_reports(scenario_id)


@experiments_api.get('/api/v1/reports/{report_id}')
def get_report(report_id: int) -> SummaryReport:
    """Извлечение отчета по его идентификатору."""

    try:
        report = report_repo.get_report(report_id)
    except LookupError as err:
        raise HTTPException(status_code=404, detail='Report not found') from err

    return report


@experiments_api.delete('/api/v1/reports/{report_id}')
def delete_report(report_id: int):
    """Удаление отчета с указанным идентификатором."""

    try:
        report_repo.delete_report(report_id)
    except LookupError as err:
        raise HTTPException(status_code=404, detail='Report not found') from err
    return {'detail': 'Deleted'}

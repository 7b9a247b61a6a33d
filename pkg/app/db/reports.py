import json
import logging
import os
from typing import List, Optional

from sqlalchemy import Column, Float, Integer, MetaData, String, Table, Text, create_engine
from sqlalchemy.engine import Engine

from app.models.report import SummaryReport
from app.singleton import Singleton


DEFAULT_DB_URL = 'sqlite:///reports.db'

metadata = MetaData()

reports = Table('reports', metadata,
                Column('report_id', Integer(), primary_key=True),
                Column('scenario_id', String(128), nullable=False),
                Column('scenario_hash', String(64), nullable=False),
                Column('policy', String(32), nullable=False),
                Column('seed', Integer(), nullable=False),
                Column('request_rate', Float(), nullable=False),
                Column('n_tasks', Integer(), nullable=False),
                Column('n_success', Integer(), nullable=False),
                Column('avg_comp_ms', Float(), nullable=True),
                Column('avg_trans_ms', Float(), nullable=True),
                Column('avg_total_ms', Float(), nullable=True),
                Column('load_std', Float(), nullable=False),
                Column('utilization_pct', Float(), nullable=False),
                Column('success_rate', Float(), nullable=False),
                Column('violations', Text(), nullable=False),
                Column('modes', Text(), nullable=False),
                Column('artifact_version', String(16), nullable=False))


def _to_row(report: SummaryReport) -> dict:
    data = report.model_dump(exclude={'report_id'})
    data['violations'] = json.dumps(data['violations'], sort_keys=True)
    data['modes'] = json.dumps(data['modes'], sort_keys=True)
    return data


def _from_row(row) -> SummaryReport:
    data = dict(row._mapping)
    data['violations'] = json.loads(data['violations'])
    data['modes'] = json.loads(data['modes'])
    return SummaryReport.model_validate(data)


class ReportRepository(Singleton):
    """
    Класс для хранения сводных отчетов прогонов в базе данных.
    Используется паттерн "одиночка", может быть создан только один экземпляр.

    Args:
        db_url (Optional[str]): Адрес базы данных, по умолчанию из RAILEDGE_DB_URL
    """

    def __init__(self, db_url: Optional[str] = None):
        if getattr(self, '_engine', None) is not None and db_url is None:
            return
        self._logger = logging.getLogger('report_repo')
        self.db_url = db_url or os.environ.get('RAILEDGE_DB_URL', DEFAULT_DB_URL)
        self._engine: Engine = create_engine(self.db_url)
        metadata.create_all(self._engine)

    @property
    def engine(self) -> Engine:
        """Движок базы данных."""
        return self._engine

    def add_report(self, report: SummaryReport) -> int:
        """
        Добавление нового отчета в базу данных.

        Args:
            report (SummaryReport): Отчет прогона

        Returns:
            int: Идентификатор добавленного отчета
        """

        self._logger.info(f'Storing report of {report.scenario_id}/{report.policy}/seed {report.seed}')
        with self._engine.connect() as conn:
            response = conn.execute(reports.insert().values(**_to_row(report)))
            report_id = response.inserted_primary_key[0]
            conn.commit()
        self._logger.info(f'Stored report {report_id}')
        return report_id

    def get_all_reports(self, scenario_id: Optional[str] = None) -> List[SummaryReport]:
        """
        Получить все отчеты, при необходимости только одного сценария.

        Returns:
            List[SummaryReport]: Отчеты в порядке добавления
        """

        self._logger.info('Retrieving all reports from the database')
        select_request = reports.select().order_by(reports.c.report_id)
        if scenario_id is not None:
            select_request = select_request.where(reports.c.scenario_id == scenario_id)
        with self._engine.connect() as conn:
            rows = conn.execute(select_request).fetchall()
        return [_from_row(row) for row in rows]

    def get_report(self, report_id: int) -> SummaryReport:
        """
        Получить отчет по идентификатору.

        Raises:
            LookupError: Отчет с указанным идентификатором не найден
        """

        self._logger.info(f'Retrieving report by id {report_id}')
        with self._engine.connect() as conn:
            row = conn.execute(reports.select().where(reports.c.report_id == report_id)).first()
        if row is None:
            raise LookupError(f'Report {report_id} not found')
        return _from_row(row)

    def delete_report(self, report_id: int):
        """
        Удалить отчет.

        Raises:
            LookupError: Отчет с указанным идентификатором не найден
        """

        self._logger.info(f'Deleting report with id {report_id}')
        with self._engine.connect() as conn:
            response = conn.execute(reports.delete().where(reports.c.report_id == report_id))
            conn.commit()
        if response.rowcount == 0:
            raise LookupError(f'Report {report_id} not found')


report_repo = ReportRepository()

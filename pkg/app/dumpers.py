import csv
import json
import logging
import os
from abc import ABC, abstractmethod
from typing import Any, Dict, Iterable, Iterator, Literal, Optional, Sequence, TextIO

from app.errors import SimulationError
from app.metrics import SUMMARY_COLUMNS, format_cell, summary_row
from app.models.report import CSV_COLUMNS, CompletionRecord, SummaryReport


class DumperError(SimulationError):
    """Исключение возникающее при ошибке записи артефакта."""


class Dumper(ABC):
    """
    Базовый класс записи артефакта прогона в файл.

    Экземпляр можно передать как приемник записей (вызывается с одной записью).
    """

    @property
    @abstractmethod
    def dump_type(self) -> Literal['event_log', 'consensus_trace', 'metrics_csv', 'summary_csv', 'table_csv']:
        """Тип артефакта в текстовом виде."""

    def __init__(self, name: str, output_file: str):
        self.name = name
        self._logger = logging.getLogger(name)
        self._output_file = output_file
        self._file: Optional[TextIO] = None
        self.count = 0

    def __repr__(self) -> str:
        return f'{self.__class__.__name__}(name={self.name!r}, output_file={self._output_file!r})'

    def __enter__(self) -> 'Dumper':
        self.open()
        return self

    def __exit__(self, *_exc):
        self.close()

    def __call__(self, record: Any):
        self.write(record)

    @property
    def output_file(self) -> str:
        """Путь к файлу артефакта."""
        return self._output_file

    def open(self):
        """
        Открыть файл на запись, каталог создается при необходимости.

        Raises:
            DumperError: Файл не удалось открыть
        """

        directory = os.path.dirname(self._output_file)
        try:
            if directory:
                os.makedirs(directory, exist_ok=True)
            self._file = open(self._output_file, 'wt', encoding='utf8', newline='')
        except OSError as err:
            raise DumperError(f'Cannot open {self._output_file}: {err}') from err
        self._logger.debug(f'Writing {self.dump_type} to {self._output_file}')
        self._on_open()

    def _on_open(self):
        pass

    def write(self, record: Any):
        """
        Записать одну запись.

        Raises:
            DumperError: Файл не открыт
        """

        if self._file is None:
            raise DumperError(f'{self!r} is not open')
        self._write(record)
        self.count += 1

    @abstractmethod
    def _write(self, record: Any):
        """Сериализация одной записи."""

    def close(self):
        """Закрыть файл."""
        if self._file is not None:
            self._file.close()
            self._file = None
            self._logger.debug(f'Closed {self._output_file} after {self.count} records')


class JsonLinesDump(Dumper):
    """Запись в формате JSON lines с детерминированным порядком ключей."""

    dump_type = 'event_log'

    def _write(self, record: Dict[str, Any]):
        self._file.write(json.dumps(record, sort_keys=True, separators=(',', ':')) + '\n')


class EventLogDump(JsonLinesDump):
    """Журнал событий симуляции (time, seq, kind, payload)."""

    dump_type = 'event_log'


class ConsensusTraceDump(JsonLinesDump):
    """Трасса протокола выбора координатора."""

    dump_type = 'consensus_trace'


class CsvDump(Dumper):
    """Табличный артефакт с заголовком."""

    @property
    @abstractmethod
    def columns(self) -> Sequence[str]:
        """Заголовок таблицы."""

    def _on_open(self):
        self._writer = csv.writer(self._file, lineterminator='\n')
        self._writer.writerow(self.columns)


class MetricsCsvDump(CsvDump):
    """Записи о задачах, по одной строке на задачу."""

    dump_type = 'metrics_csv'
    columns = CSV_COLUMNS

    def _write(self, record: CompletionRecord):
        self._writer.writerow(record.csv_row())


class SummaryCsvDump(CsvDump):
    """Сводные отчеты, по одной строке на прогон."""

    dump_type = 'summary_csv'
    columns = SUMMARY_COLUMNS

    def _write(self, record: SummaryReport):
        self._writer.writerow(summary_row(record))


class TableCsvDump(CsvDump):
    """Произвольная таблица экспериментов с заданным заголовком."""

    dump_type = 'table_csv'

    def __init__(self, name: str, output_file: str, columns: Sequence[str]):
        super().__init__(name, output_file)
        self._columns = tuple(columns)

    @property
    def columns(self) -> Sequence[str]:
        return self._columns

    def _write(self, record: Sequence[Any]):
        if len(record) != len(self._columns):
            raise DumperError(f'Row of {len(record)} cells does not match {len(self._columns)} columns')
        self._writer.writerow([format_cell(value) for value in record])


def write_table(path: str, columns: Sequence[str], rows: Iterable[Sequence[Any]], name: str = 'table'):
    """Записать таблицу в CSV."""
    with TableCsvDump(name, path, columns) as dump:
        for row in rows:
            dump.write(row)


def write_json(path: str, data: Any):
    """
    Записать JSON отчет с детерминированным форматированием.

    Raises:
        DumperError: Файл не удалось записать
    """

    directory = os.path.dirname(path)
    try:
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, 'wt', encoding='utf8') as file:
            json.dump(data, file, sort_keys=True, indent=2)
            file.write('\n')
    except OSError as err:
        raise DumperError(f'Cannot write {path}: {err}') from err


def read_json_lines(path: str) -> Iterator[Dict[str, Any]]:
    """
    Прочитать файл JSON lines.

    Raises:
        DumperError: Файл не удалось прочитать

    Yields:
        Iterator[Dict[str, Any]]: Записи файла
    """

    try:
        with open(path, 'rt', encoding='utf8') as file:
            for line in file:
                if line.strip():
                    yield json.loads(line)
    except (OSError, ValueError) as err:
        raise DumperError(f'Cannot read {path}: {err}') from err

import logging
import multiprocessing
import threading
from dataclasses import dataclass, field
from logging.handlers import QueueHandler
from queue import Empty
from typing import Any, Callable, List, Optional, Sequence, Union


@dataclass
class RunCommand:
    """
    Класс задания, выполняемого в дочернем процессе.
    """

    index: int
    args: tuple = field(default_factory=tuple)
    kwargs: dict = field(default_factory=dict)


@dataclass
class RunReply:
    """
    Класс результата выполненного задания.
    """

    index: int
    data: Any


context = multiprocessing.get_context('spawn')


class ProcessRunWorker(context.Process):  # type: ignore
    """
    Бековая часть менеджера прогонов. Работает в субпроцессе, получает задания из очереди,
    выполняет функцию прогона и возвращает результат или исключение.
    """

    def __init__(self, name: str, func: Callable[..., Any], log_level: int, log_queue: context.Queue,  # type: ignore
                 cmd_queue: context.Queue, res_queue: context.Queue):  # type: ignore
        super().__init__(daemon=True)
        self.name = name
        self.need_stop = context.Event()
        self._func = func
        self._log_level = log_level
        self._log_queue = log_queue
        self._cmd_queue = cmd_queue
        self._res_queue = res_queue

    def run(self):
        """Главный цикл субпроцесса."""

        root = logging.getLogger()
        root.handlers.clear()
        root.addHandler(QueueHandler(self._log_queue))
        root.setLevel(self._log_level)
        logger = logging.getLogger(self.name)

        while not self.need_stop.is_set():
            try:
                cmd = self._cmd_queue.get(timeout=1)
            except Empty:
                continue

            logger.debug(f'Executing job {cmd.index}')
            try:
                returned_value = self._func(*cmd.args, **cmd.kwargs)
            # pylint: disable-next=broad-exception-caught
            except Exception as error:
                returned_value = error
            self._res_queue.put(RunReply(cmd.index, returned_value))


class LogProxyThread(threading.Thread):
    """Прокси для лог записей, получает записи из очереди и передает их логгерам по имени записи."""

    def __init__(self, name: str, log_queue: context.Queue):  # type: ignore
        super().__init__(name=name, daemon=True)
        self.need_stop = threading.Event()
        self._log_queue = log_queue

    def run(self):
        while not self.need_stop.is_set():
            try:
                record = self._log_queue.get(timeout=1)
            except Empty:
                continue
            logging.getLogger(record.name).handle(record)


class RunManager:
    """
    Фронтовая часть менеджера прогонов. Раздает независимые задания пулу субпроцессов
    и собирает результаты в порядке заданий. При workers=0 задания выполняются в текущем процессе.

    Args:
        name (str): Имя логгера
        func (Callable[..., Any]): Функция прогона уровня модуля
        workers (int): Число субпроцессов
        timeout (Optional[Union[int, float]]): Время ожидания одного результата, с
    """

    def __init__(self, name: str, func: Callable[..., Any], workers: int = 0,
                 timeout: Optional[Union[int, float]] = None):
        if workers < 0:
            raise ValueError('workers must be non-negative')
        self.name = name
        self.func = func
        self.workers = workers
        self.timeout = timeout
        self._logger = logging.getLogger(self.name)
        self._processes: List[ProcessRunWorker] = []
        self._log_thread: Optional[LogProxyThread] = None
        self._log_queue = None
        self._cmd_queue = None
        self._res_queue = None

    def __repr__(self) -> str:
        return f'{self.__class__.__name__}(name={self.name!r}, workers={self.workers!r}, timeout={self.timeout!r})'

    def __enter__(self) -> 'RunManager':
        self.start()
        return self

    def __exit__(self, *_exc):
        self.stop()

    def start(self):
        """Запуск субпроцессов."""

        if self.workers == 0 or self._processes:
            return
        self._log_queue = context.Queue()
        self._cmd_queue = context.Queue()
        self._res_queue = context.Queue()
        level = logging.getLogger().getEffectiveLevel()
        for number in range(self.workers):
            process = ProcessRunWorker(f'{self.name}.worker{number}', self.func, level,
                                       self._log_queue, self._cmd_queue, self._res_queue)
            process.start()
            self._processes.append(process)
        self._log_thread = LogProxyThread(name=self.name, log_queue=self._log_queue)
        self._log_thread.start()
        self._logger.info(f'Started {self.workers} run workers')

    def map(self, jobs: Sequence[tuple]) -> List[Any]:
        """
        Выполнить задания и вернуть результаты в порядке заданий.

        Args:
            jobs (Sequence[tuple]): Аргументы функции прогона для каждого задания

        Raises:
            RuntimeError: Менеджер с субпроцессами не запущен
            TimeoutError: Результат не получен за отведенное время

        Returns:
            List[Any]: Результаты
        """

        if self.workers == 0:
            return [self.func(*args) for args in jobs]
        if not self._processes:
            raise RuntimeError('RunManager not started!')

        for index, args in enumerate(jobs):
            self._cmd_queue.put(RunCommand(index, tuple(args)))

        replies = {}
        while len(replies) < len(jobs):
            try:
                reply = self._res_queue.get(timeout=self.timeout)
            except Empty as error:
                raise TimeoutError(f'No result was received within {self.timeout}s') from error
            replies[reply.index] = reply.data
            self._logger.debug(f'Job {reply.index} finished ({len(replies)}/{len(jobs)})')

        results = [replies[index] for index in range(len(jobs))]
        for result in results:
            if isinstance(result, Exception):
                raise result
        return results

    def stop(self):
        """Остановка субпроцессов."""

        for process in self._processes:
            process.need_stop.set()
        for process in self._processes:
            process.join()
        if self._log_thread is not None:
            self._log_thread.need_stop.set()
            self._log_thread.join()

        self._processes = []
        self._log_thread = None
        self._log_queue = None
        self._cmd_queue = None
        self._res_queue = None

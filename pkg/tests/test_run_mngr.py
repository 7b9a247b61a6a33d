import math

import pytest

from app.run_mngr import RunManager


@pytest.fixture(scope='module')
def pool_manager() -> RunManager:
    """
    Фикстура для создания менеджера прогонов с двумя субпроцессами.

    Yields:
        Iterator[RunManager]: Менеджер прогонов
    """

    manager = RunManager('run_mngr', math.factorial, workers=2, timeout=60)
    manager.start()

    yield manager

    manager.stop()


def test_inline_map_keeps_order():
    """
    Проверка выполнения заданий в текущем процессе с сохранением порядка.
    """

    calls = []

    def job(value: int) -> int:
        calls.append(value)
        return value * 10

    with RunManager('inline', job) as manager:
        assert manager.map([(3,), (1,), (2,)]) == [30, 10, 20]
    assert calls == [3, 1, 2]


def test_inline_map_raises():
    """
    Проверка передачи исключения задания вызывающей стороне.
    """

    with RunManager('inline', math.factorial) as manager:
        with pytest.raises(ValueError):
            manager.map([(3,), (-1,)])


def test_invalid_manager():
    """
    Проверка ошибок конфигурации менеджера.
    """

    with pytest.raises(ValueError):
        RunManager('bad', math.factorial, workers=-1)
    with pytest.raises(RuntimeError):
        RunManager('idle', math.factorial, workers=1).map([(1,)])
    assert repr(RunManager('named', math.factorial, workers=3)) == \
        "RunManager(name='named', workers=3, timeout=None)"


def test_pool_map(pool_manager: RunManager):
    """
    Проверка выполнения заданий в субпроцессах, результаты в порядке заданий.

    Args:
        pool_manager (RunManager): Менеджер прогонов
    """

    assert pool_manager.map([(value,) for value in (5, 3, 0, 7)]) == [120, 6, 1, 5040]
    with pytest.raises(ValueError):
        pool_manager.map([(2,), (-3,)])
    assert pool_manager.map([(4,)]) == [24]

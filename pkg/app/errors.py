from typing import Literal


Constraint = Literal['C1', 'C2', 'C3', 'C4']


class SimulationError(Exception):
    """Базовое исключение симулятора."""


class InvalidInputError(SimulationError, ValueError):
    """Исключение возникающее при некорректных входных данных (координаты, идентификаторы, параметры)."""


class ScenarioError(SimulationError):
    """Исключение возникающее при ошибке в файле сценария."""


class ConstraintViolation(SimulationError):
    """
    Нарушение одного из ограничений задачи оптимизации (C1 - C4).

    Args:
        constraint (Constraint): Идентификатор нарушенного ограничения
        message (str, optional): Текст ошибки
    """

    def __init__(self, constraint: Constraint, message: str = ''):
        super().__init__(message or f'Constraint {constraint} violated')
        self.constraint = constraint


class UnreachableError(ConstraintViolation):
    """Между узлами нет ни одного маршрута (нарушение C3)."""

    def __init__(self, message: str = ''):
        super().__init__('C3', message or 'No route between nodes')


class BackhaulUnavailableError(UnreachableError):
    """Проводной канал недоступен, вызывающая сторона должна использовать mesh."""


class QueueOverflowError(ConstraintViolation):
    """Очередь исполнителя заполнена, задача отклонена."""

    def __init__(self, message: str = ''):
        super().__init__('C2', message or 'Worker queue is full')


class TrainingDivergenceError(SimulationError):
    """Обучение разошлось (нечисловые значения в сети или функции потерь)."""


class InvariantError(SimulationError):
    """Нарушен внутренний инвариант движка симуляции."""


class CheckpointError(SimulationError):
    """Ошибка чтения или записи контрольной точки политики."""

from threading import Lock
from typing import Dict


class Singleton:
    """
    Потокобезопасная реализация класса Singleton (Одиночка).

    Каждый наследник получает собственный экземпляр.
    """

    _instances: Dict[type, object] = {}
    _lock: Lock = Lock()

    def __new__(cls, *_args, **_kwargs):
        with cls._lock:
            if cls not in Singleton._instances:
                Singleton._instances[cls] = super().__new__(cls)
        return Singleton._instances[cls]

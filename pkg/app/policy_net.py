"""Полносвязные сети актора и критика на numpy с аналитическим обратным проходом."""
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.errors import CheckpointError, TrainingDivergenceError


Layer = Tuple[np.ndarray, np.ndarray]


def softmax(logits: np.ndarray) -> np.ndarray:
    """Устойчивый softmax по последней оси."""
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / np.sum(exp, axis=-1, keepdims=True)


def _init_layers(sizes: Sequence[int], rng: np.random.Generator, last_scale: float) -> List[Layer]:
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:])):
        scale = np.sqrt(1.0 / fan_in)
        if i == len(sizes) - 2:
            scale *= last_scale
        layers.append((rng.normal(0.0, scale, size=(fan_in, fan_out)), np.zeros(fan_out)))
    return layers


def dense_forward(layers: Sequence[Layer], x: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]:
    """
    Прямой проход: tanh на скрытых слоях, линейный выход.

    Returns:
        Tuple[np.ndarray, List[np.ndarray]]: Выход и входы каждого слоя для обратного прохода
    """

    inputs = []
    h = x
    for i, (weight, bias) in enumerate(layers):
        inputs.append(h)
        h = h @ weight + bias
        if i < len(layers) - 1:
            h = np.tanh(h)
    return h, inputs


def dense_backward(layers: Sequence[Layer], inputs: Sequence[np.ndarray], d_out: np.ndarray) -> List[Layer]:
    """
    Обратный проход: градиенты по весам и смещениям каждого слоя.

    Args:
        layers (Sequence[Layer]): Слои сети
        inputs (Sequence[np.ndarray]): Входы слоев из прямого прохода
        d_out (np.ndarray): Градиент по выходу сети

    Returns:
        List[Layer]: Пары (dW, db) в порядке слоев
    """

    grads: List[Layer] = [None] * len(layers)  # type: ignore
    delta = d_out
    for i in reversed(range(len(layers))):
        weight, _ = layers[i]
        grads[i] = (inputs[i].T @ delta, delta.sum(axis=0))
        if i > 0:
            # inputs[i] = tanh(z_{i-1})
            delta = (delta @ weight.T) * (1.0 - inputs[i] ** 2)
    return grads


class PolicyNetwork:
    """
    Актор-критик: актор 9 -> 64 -> 64 -> 2 с softmax, критик 9 -> 64 -> 64 -> 1.

    Args:
        state_dim (int, optional): Размерность состояния
        hidden_sizes (Sequence[int], optional): Размеры скрытых слоев
        n_actions (int, optional): Количество действий
        seed (int, optional): Seed инициализации весов
    """

    def __init__(self, state_dim: int = 9, hidden_sizes: Sequence[int] = (64, 64), n_actions: int = 2,
                 seed: int = 0):
        self.state_dim = state_dim
        self.hidden_sizes = tuple(hidden_sizes)
        self.n_actions = n_actions
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.actor = _init_layers((state_dim, *self.hidden_sizes, n_actions), rng, last_scale=0.01)
        self.critic = _init_layers((state_dim, *self.hidden_sizes, 1), rng, last_scale=1.0)

    def __repr__(self) -> str:
        return (f'{self.__class__.__name__}(state_dim={self.state_dim}, '
                f'hidden_sizes={self.hidden_sizes}, n_actions={self.n_actions})')

    def logits(self, states: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]:
        """Логиты актора и кэш прямого прохода."""
        return dense_forward(self.actor, np.atleast_2d(states))

    def probs(self, states: np.ndarray) -> np.ndarray:
        """
        Распределение действий.

        Raises:
            TrainingDivergenceError: Логиты содержат нечисловые значения
        """

        logits, _ = self.logits(states)
        if not np.all(np.isfinite(logits)):
            raise TrainingDivergenceError('Non-finite actor logits')
        return softmax(logits)

    def values(self, states: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]:
        """Оценки критика и кэш прямого прохода."""
        out, inputs = dense_forward(self.critic, np.atleast_2d(states))
        return out[:, 0], inputs

    def parameters(self) -> List[np.ndarray]:
        """Все массивы параметров в фиксированном порядке: актор, затем критик."""
        return [array for layer in self.actor + self.critic for array in layer]

    def parameter_count(self) -> int:
        """Общее число параметров."""
        return int(sum(p.size for p in self.parameters()))

    def copy(self) -> 'PolicyNetwork':
        """Независимая копия сети."""
        clone = PolicyNetwork.__new__(PolicyNetwork)
        clone.state_dim, clone.hidden_sizes, clone.n_actions, clone.seed = \
            self.state_dim, self.hidden_sizes, self.n_actions, self.seed
        clone.actor = [(w.copy(), b.copy()) for w, b in self.actor]
        clone.critic = [(w.copy(), b.copy()) for w, b in self.critic]
        return clone

    def is_finite(self) -> bool:
        """Все параметры конечны."""
        return all(np.all(np.isfinite(p)) for p in self.parameters())

    def to_dict(self) -> Dict:
        """Описание архитектуры и параметров для контрольной точки."""
        return {
            'architecture': {'state_dim': self.state_dim, 'hidden_sizes': list(self.hidden_sizes),
                             'n_actions': self.n_actions},
            'seed': self.seed,
            'actor': [[w.tolist(), b.tolist()] for w, b in self.actor],
            'critic': [[w.tolist(), b.tolist()] for w, b in self.critic],
        }

    @classmethod
    def from_dict(cls, data: Dict, expected_state_dim: Optional[int] = None) -> 'PolicyNetwork':
        """
        Восстановить сеть из описания контрольной точки.

        Raises:
            CheckpointError: Несовпадение архитектуры или формы массивов
        """

        try:
            arch = data['architecture']
            net = cls(arch['state_dim'], arch['hidden_sizes'], arch['n_actions'], data.get('seed', 0))
            if expected_state_dim is not None and net.state_dim != expected_state_dim:
                raise CheckpointError(f'Checkpoint state_dim {net.state_dim} != {expected_state_dim}')
            for name in ('actor', 'critic'):
                current = getattr(net, name)
                loaded = [(np.asarray(w, dtype=float), np.asarray(b, dtype=float)) for w, b in data[name]]
                if len(loaded) != len(current) or any(
                        lw.shape != cw.shape or lb.shape != cb.shape
                        for (lw, lb), (cw, cb) in zip(loaded, current)):
                    raise CheckpointError(f'Checkpoint {name} shapes do not match the architecture')
                setattr(net, name, loaded)
        except (KeyError, TypeError, ValueError) as err:
            raise CheckpointError(f'Malformed checkpoint: {err}') from err
        return net

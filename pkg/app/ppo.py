"""
PPO: буфер опыта, оценка преимуществ, суррогатная функция с отсечением и
KL-регуляризацией, аналитические градиенты и шаг оптимизатора.
"""
import json
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.errors import CheckpointError, InvalidInputError, TrainingDivergenceError
from app.models.scenario import PPOConfig
from app.policy_net import PolicyNetwork, dense_backward, softmax


CHECKPOINT_FORMAT = 1
PROB_FLOOR = 1e-300

logger = logging.getLogger('ppo')


@dataclass
class Experience:
    """Переход ⟨S, A, R, S'⟩ с log-вероятностью действия и оценкой критика."""

    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    log_prob: float
    value_estimate: float
    done: bool = False

    def __post_init__(self):
        if self.log_prob > 0:
            raise InvalidInputError(f'log_prob must be non-positive, got {self.log_prob}')
        if not np.isfinite(self.reward):
            raise InvalidInputError(f'Reward must be finite, got {self.reward}')


@dataclass
class ReplayBuffer:
    """Буфер опыта текущей политики."""

    items: List[Experience] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.items)

    def add(self, experience: Experience):
        """Добавить переход."""
        self.items.append(experience)

    def clear(self):
        """Очистить буфер."""
        self.items.clear()


@dataclass
class Batch:
    """Подготовленная выборка для функции потерь."""

    states: np.ndarray
    actions: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray

    def __len__(self) -> int:
        return len(self.actions)

    def take(self, index: np.ndarray) -> 'Batch':
        """Подвыборка по индексам."""
        return Batch(self.states[index], self.actions[index], self.advantages[index], self.returns[index])


def compute_advantages(trajectory: Sequence[Experience], discount: float,
                       bootstrap_value: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
    """
    Дисконтированные возвраты Монте-Карло и преимущества λ̂ = G - V.

    Возврат обнуляется на шаге с done. Для незавершенного хвоста используется
    bootstrap_value.

    Raises:
        InvalidInputError: Пустая траектория

    Returns:
        Tuple[np.ndarray, np.ndarray]: Преимущества и возвраты
    """

    if not trajectory:
        raise InvalidInputError('Cannot compute advantages of an empty trajectory')
    returns = np.zeros(len(trajectory))
    running = bootstrap_value
    for i in reversed(range(len(trajectory))):
        step = trajectory[i]
        if step.done:
            running = 0.0
        running = step.reward + discount * running
        returns[i] = running
    values = np.array([step.value_estimate for step in trajectory])
    return returns - values, returns


def normalize_advantages(advantages: np.ndarray) -> np.ndarray:
    """Нормировка к нулевому среднему и единичной дисперсии."""
    std = float(np.std(advantages))
    centered = advantages - np.mean(advantages)
    if std < 1e-8:
        return centered
    return centered / std


@dataclass
class LossInfo:
    """Компоненты целевой функции."""

    objective: float
    clip_term: float
    kl: float
    entropy: float
    value_loss: float


def surrogate_loss(batch: Batch, net: PolicyNetwork, snapshot: PolicyNetwork, clip_eps: float,
                   kl_beta: float, entropy_coef: float,
                   value_coef: float) -> Tuple[float, List[np.ndarray], LossInfo]:
    """
    Целевая функция PPO и ее градиент по всем параметрам сети.

    J = E[min(r·λ̂, clip(r, 1-ε, 1+ε)·λ̂)] - β·KL(θ'‖θ) + c_H·H(π_θ) - c_V·E[(V - G)²],
    где r = π_θ(a|s) / π_θ'(a|s).

    Args:
        batch (Batch): Выборка
        net (PolicyNetwork): Текущая сеть θ
        snapshot (PolicyNetwork): Снимок θ' до обновления
        clip_eps (float): Граница отсечения ε
        kl_beta (float): Коэффициент β при KL
        entropy_coef (float): Коэффициент энтропии
        value_coef (float): Коэффициент функции потерь критика

    Returns:
        Tuple[float, List[np.ndarray], LossInfo]: Значение J, градиенты в порядке
            PolicyNetwork.parameters() и компоненты
    """

    n = len(batch)
    logits, actor_cache = net.logits(batch.states)
    probs = softmax(logits)
    old_probs = snapshot.probs(batch.states)
    rows = np.arange(n)
    onehot = np.zeros_like(probs)
    onehot[rows, batch.actions] = 1.0

    old_log_probs = np.log(np.clip(old_probs, PROB_FLOOR, None))
    ratio = probs[rows, batch.actions] / np.clip(old_probs[rows, batch.actions], PROB_FLOOR, None)
    adv = batch.advantages
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv
    clip_term = np.minimum(unclipped, clipped)
    log_probs = np.log(np.clip(probs, PROB_FLOOR, None))
    kl = np.sum(old_probs * (old_log_probs - log_probs), axis=1)
    entropy = -np.sum(probs * log_probs, axis=1)

    values, critic_cache = net.values(batch.states)
    value_err = values - batch.returns
    value_loss = float(np.mean(value_err ** 2))
    objective = float(np.mean(clip_term) - kl_beta * np.mean(kl) + entropy_coef * np.mean(entropy)
                      - value_coef * value_loss)
    if not np.isfinite(objective):
        raise TrainingDivergenceError(f'Non-finite PPO objective: {objective}')

    d_ratio = np.where(unclipped <= clipped, adv, 0.0)
    d_logits = d_ratio[:, None] * ratio[:, None] * (onehot - probs)
    d_logits -= kl_beta * (probs - old_probs)
    d_logits -= entropy_coef * probs * (log_probs + entropy[:, None])
    d_logits /= n
    d_values = (-2.0 * value_coef / n) * value_err

    grads = []
    for weight, bias in dense_backward(net.actor, actor_cache, d_logits):
        grads.extend((weight, bias))
    for weight, bias in dense_backward(net.critic, critic_cache, d_values[:, None]):
        grads.extend((weight, bias))
    info = LossInfo(objective, float(np.mean(clip_term)), float(np.mean(kl)),
                    float(np.mean(entropy)), value_loss)
    return objective, grads, info


class GradientAscent:
    """Обычный градиентный подъем."""

    def __init__(self, learning_rate: float):
        self.learning_rate = learning_rate

    def step(self, params: List[np.ndarray], grads: List[np.ndarray]):
        """Обновить параметры на месте."""
        for param, grad in zip(params, grads):
            param += self.learning_rate * grad


class Adam(GradientAscent):
    """Оптимизатор Adam в форме подъема по градиенту."""

    def __init__(self, learning_rate: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        super().__init__(learning_rate)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self._m: Optional[List[np.ndarray]] = None
        self._v: Optional[List[np.ndarray]] = None
        self._t = 0

    def step(self, params: List[np.ndarray], grads: List[np.ndarray]):
        if self._m is None:
            self._m = [np.zeros_like(p) for p in params]
            self._v = [np.zeros_like(p) for p in params]
        self._t += 1
        for param, grad, m, v in zip(params, grads, self._m, self._v):
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad ** 2
            m_hat = m / (1.0 - self.beta1 ** self._t)
            v_hat = v / (1.0 - self.beta2 ** self._t)
            param += self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(cfg: PPOConfig) -> GradientAscent:
    """Оптимизатор согласно конфигурации."""
    if cfg.optimizer == 'sgd':
        return GradientAscent(cfg.learning_rate)
    return Adam(cfg.learning_rate)


def build_batch(buffer: ReplayBuffer, net: PolicyNetwork, discount: float) -> Batch:
    """Собрать выборку из буфера, хвост траектории оценивается критиком."""
    last = buffer.items[-1]
    bootstrap = 0.0 if last.done else float(net.values(last.next_state)[0][0])
    advantages, returns = compute_advantages(buffer.items, discount, bootstrap)
    states = np.stack([item.state for item in buffer.items])
    actions = np.array([item.action for item in buffer.items], dtype=int)
    return Batch(states, actions, normalize_advantages(advantages), returns)


def ppo_update(net: PolicyNetwork, snapshot: PolicyNetwork, buffer: ReplayBuffer, cfg: PPOConfig,
               optimizer: GradientAscent, rng: np.random.Generator) -> Tuple[PolicyNetwork, List[LossInfo]]:
    """
    Обновление PPO: k случайных мини-выборок размера batch_size, затем θ' <- θ и очистка буфера.

    Args:
        net (PolicyNetwork): Обучаемая сеть (обновляется на месте)
        snapshot (PolicyNetwork): Снимок θ', которым собран опыт
        buffer (ReplayBuffer): Буфер опыта
        cfg (PPOConfig): Гиперпараметры
        optimizer (GradientAscent): Оптимизатор
        rng (np.random.Generator): Генератор для выбора мини-выборок

    Raises:
        TrainingDivergenceError: Параметры стали нечисловыми

    Returns:
        Tuple[PolicyNetwork, List[LossInfo]]: Новый снимок θ' и компоненты потерь
    """

    if len(buffer) < cfg.batch_size:
        logger.warning(f'Insufficient buffer for update: {len(buffer)} < {cfg.batch_size}')
        return snapshot, []
    batch = build_batch(buffer, snapshot, cfg.discount)
    infos = []
    for _ in range(cfg.minibatch_count):
        index = rng.choice(len(batch), size=cfg.batch_size, replace=False)
        _, grads, info = surrogate_loss(batch.take(index), net, snapshot, cfg.clip_eps, cfg.kl_beta,
                                        cfg.entropy_coef, cfg.value_coef)
        optimizer.step(net.parameters(), grads)
        infos.append(info)
    if not net.is_finite():
        raise TrainingDivergenceError('Non-finite network parameters after update')
    buffer.clear()
    logger.debug(f'PPO update done, objective={infos[-1].objective:.6f} kl={infos[-1].kl:.6f}')
    return net.copy(), infos


def save_checkpoint(path: str, net: PolicyNetwork, cfg: PPOConfig, state_version: int):
    """
    Записать контрольную точку в JSON.

    Raises:
        CheckpointError: Ошибка записи файла
    """

    data = {'format_version': CHECKPOINT_FORMAT, 'state_encoding_version': state_version,
            'ppo_config': cfg.model_dump(mode='json'), **net.to_dict()}
    try:
        with open(path, 'wt', encoding='utf8') as file:
            json.dump(data, file)
    except OSError as err:
        raise CheckpointError(f'Cannot write checkpoint {path}: {err}') from err
    logger.info(f'Checkpoint saved to {path}')


def load_checkpoint(path: str, state_version: int) -> Tuple[PolicyNetwork, PPOConfig]:
    """
    Прочитать контрольную точку.

    Raises:
        CheckpointError: Файл отсутствует, поврежден или несовместим

    Returns:
        Tuple[PolicyNetwork, PPOConfig]: Сеть и гиперпараметры
    """

    try:
        with open(path, 'rt', encoding='utf8') as file:
            data = json.load(file)
    except (OSError, ValueError) as err:
        raise CheckpointError(f'Cannot read checkpoint {path}: {err}') from err
    if data.get('format_version') != CHECKPOINT_FORMAT:
        raise CheckpointError(f'Unsupported checkpoint format {data.get("format_version")}')
    if data.get('state_encoding_version') != state_version:
        raise CheckpointError(f'Checkpoint state encoding {data.get("state_encoding_version")} != {state_version}')
    net = PolicyNetwork.from_dict(data)
    return net, PPOConfig.model_validate(data['ppo_config'])

import json

import numpy as np
import pytest

from app.errors import CheckpointError, InvalidInputError
from app.models.scenario import PPOConfig
from app.policy_net import PolicyNetwork, softmax
from app.ppo import (Adam, Batch, Experience, GradientAscent, ReplayBuffer, build_batch, compute_advantages,
                     load_checkpoint, make_optimizer, normalize_advantages, ppo_update, save_checkpoint,
                     surrogate_loss)


def make_batch(n: int = 12, state_dim: int = 3, seed: int = 0) -> Batch:
    rng = np.random.default_rng(seed)
    return Batch(states=rng.normal(size=(n, state_dim)), actions=rng.integers(0, 2, size=n),
                 advantages=rng.normal(size=n), returns=rng.normal(size=n))


def perturbed(net: PolicyNetwork, scale: float, seed: int) -> PolicyNetwork:
    clone = net.copy()
    rng = np.random.default_rng(seed)
    for param in clone.parameters():
        param += rng.normal(0.0, scale, size=param.shape)
    return clone


def make_experience(reward: float, done: bool = False, value: float = 0.0, action: int = 0) -> Experience:
    return Experience(state=np.zeros(3), action=action, reward=reward, next_state=np.zeros(3),
                      log_prob=-0.7, value_estimate=value, done=done)


def test_experience_validation():
    """
    Проверка отклонения положительной log-вероятности и нечисловой награды.
    """

    with pytest.raises(InvalidInputError):
        Experience(np.zeros(3), 0, 1.0, np.zeros(3), log_prob=0.1, value_estimate=0.0)
    with pytest.raises(InvalidInputError):
        Experience(np.zeros(3), 0, float('nan'), np.zeros(3), log_prob=-0.1, value_estimate=0.0)


def test_compute_advantages():
    """
    Проверка дисконтированных возвратов, обнуления на done и оценки хвоста критиком.
    """

    trajectory = [make_experience(1.0), make_experience(1.0), make_experience(1.0)]
    advantages, returns = compute_advantages(trajectory, discount=0.5)
    assert np.allclose(returns, [1.75, 1.5, 1.0])
    assert np.allclose(advantages, returns)

    trajectory[1] = make_experience(1.0, done=True)
    _, returns = compute_advantages(trajectory, discount=0.5)
    assert np.allclose(returns, [1.5, 1.0, 1.0])

    trajectory = [make_experience(1.0, value=0.5) for _ in range(3)]
    advantages, returns = compute_advantages(trajectory, discount=0.5, bootstrap_value=2.0)
    assert np.allclose(returns, [2.0, 2.0, 2.0])
    assert np.allclose(advantages, [1.5, 1.5, 1.5])

    with pytest.raises(InvalidInputError):
        compute_advantages([], discount=0.5)


def test_normalize_advantages():
    """
    Проверка нормировки преимуществ и вырожденного случая постоянных значений.
    """

    normalized = normalize_advantages(np.array([1.0, 2.0, 3.0, 6.0]))
    assert normalized.mean() == pytest.approx(0.0, abs=1e-12)
    assert normalized.std() == pytest.approx(1.0)
    assert np.allclose(normalize_advantages(np.full(4, 3.0)), 0.0)


@pytest.mark.parametrize('kl_beta, entropy_coef, value_coef', [(0.02, 0.1, 0.5), (0.0, 0.0, 0.0), (1.0, 0.5, 2.0)])
def test_surrogate_gradient_matches_finite_differences(kl_beta: float, entropy_coef: float, value_coef: float):
    """
    Проверка аналитического градиента суррогатной функции численным дифференцированием.
    """

    snapshot = PolicyNetwork(state_dim=3, hidden_sizes=(5, 4), seed=1)
    net = perturbed(snapshot, 0.01, seed=2)
    batch = make_batch()
    clip_eps = 0.2

    def objective() -> float:
        value, _, _ = surrogate_loss(batch, net, snapshot, clip_eps, kl_beta, entropy_coef, value_coef)
        return value

    _, grads, info = surrogate_loss(batch, net, snapshot, clip_eps, kl_beta, entropy_coef, value_coef)
    assert info.kl >= 0.0

    h = 1e-6
    numeric = []
    for param in net.parameters():
        grad = np.zeros_like(param)
        for index in np.ndindex(param.shape):
            saved = param[index]
            param[index] = saved + h
            plus = objective()
            param[index] = saved - h
            minus = objective()
            param[index] = saved
            grad[index] = (plus - minus) / (2 * h)
        numeric.append(grad)

    analytic = np.concatenate([g.ravel() for g in grads])
    expected = np.concatenate([g.ravel() for g in numeric])
    error = np.linalg.norm(analytic - expected) / max(1e-12, np.linalg.norm(analytic) + np.linalg.norm(expected))
    assert error < 1e-4


def test_degenerate_objective_is_policy_gradient():
    """
    Проверка: без отсечения, KL, энтропии и критика градиент актора совпадает с градиентом
    E[λ̂·log π(a|s)] при θ = θ'.
    """

    net = PolicyNetwork(state_dim=3, hidden_sizes=(4,), seed=3)
    batch = make_batch(seed=4)
    _, grads, info = surrogate_loss(batch, net, net.copy(), clip_eps=1e9, kl_beta=0.0, entropy_coef=0.0,
                                    value_coef=0.0)
    assert info.kl == pytest.approx(0.0)
    assert info.clip_term == pytest.approx(np.mean(batch.advantages))

    def log_likelihood() -> float:
        logits, _ = net.logits(batch.states)
        probs = softmax(logits)
        return float(np.mean(batch.advantages * np.log(probs[np.arange(len(batch)), batch.actions])))

    h = 1e-6
    actor_params = [array for layer in net.actor for array in layer]
    for param, grad in zip(actor_params, grads):
        for index in np.ndindex(param.shape):
            saved = param[index]
            param[index] = saved + h
            plus = log_likelihood()
            param[index] = saved - h
            minus = log_likelihood()
            param[index] = saved
            assert (plus - minus) / (2 * h) == pytest.approx(grad[index], rel=1e-4, abs=1e-8)
    assert all(np.allclose(g, 0.0) for g in grads[len(actor_params):])


def test_clipped_ratio_stops_actor_gradient():
    """
    Проверка нулевого градиента отсеченного члена при отношении вероятностей выше 1 + ε.
    """

    net = PolicyNetwork(state_dim=3, hidden_sizes=(4,), seed=5)
    snapshot = net.copy()
    snapshot.actor[-1][1][:] = [-10.0, 10.0]
    batch = make_batch(seed=6)
    batch = Batch(batch.states, np.zeros(len(batch), dtype=int), np.abs(batch.advantages) + 0.1, batch.returns)
    _, grads, _ = surrogate_loss(batch, net, snapshot, clip_eps=0.2, kl_beta=0.0, entropy_coef=0.0,
                                 value_coef=0.0)
    assert all(np.allclose(g, 0.0) for g in grads)


def test_kl_term_with_vanished_old_probability():
    """
    Проверка конечной целевой функции, когда вероятность действия в снимке обратилась в ноль.
    """

    net = PolicyNetwork(state_dim=3, hidden_sizes=(4,), seed=5)
    snapshot = net.copy()
    snapshot.actor[-1][1][:] = [-1000.0, 1000.0]
    assert np.any(snapshot.probs(make_batch().states) == 0.0)
    batch = make_batch(seed=7)
    batch = Batch(batch.states, np.ones(len(batch), dtype=int), batch.advantages, batch.returns)
    value, grads, info = surrogate_loss(batch, net, snapshot, clip_eps=0.2, kl_beta=0.1, entropy_coef=0.01,
                                        value_coef=0.5)
    assert np.isfinite(value)
    assert np.isfinite(info.kl)
    assert all(np.all(np.isfinite(g)) for g in grads)

def test_optimizers():
    """
    Проверка шага градиентного подъема и первого шага Adam.
    """

    param = np.array([1.0, 1.0])
    GradientAscent(0.1).step([param], [np.array([2.0, -1.0])])
    assert np.allclose(param, [1.2, 0.9])

    param = np.array([0.0, 0.0])
    Adam(0.01).step([param], [np.array([5.0, -0.2])])
    assert np.allclose(param, [0.01, -0.01], atol=1e-6)

    assert isinstance(make_optimizer(PPOConfig()), Adam)
    assert type(make_optimizer(PPOConfig(optimizer='sgd'))) is GradientAscent


def fill_buffer(count: int, seed: int = 7) -> ReplayBuffer:
    rng = np.random.default_rng(seed)
    buffer = ReplayBuffer()
    for _ in range(count):
        buffer.add(Experience(state=rng.normal(size=9), action=int(rng.integers(2)), reward=float(rng.normal()),
                              next_state=rng.normal(size=9), log_prob=-0.69, value_estimate=0.0))
    return buffer


def test_build_batch():
    """
    Проверка сборки выборки из буфера опыта.
    """

    buffer = fill_buffer(10)
    batch = build_batch(buffer, PolicyNetwork(seed=8), discount=0.9)
    assert batch.states.shape == (10, 9)
    assert len(batch) == 10
    assert batch.advantages.mean() == pytest.approx(0.0, abs=1e-9)


def test_ppo_update():
    """
    Проверка обновления: параметры меняются, возвращается новый снимок, буфер очищается.
    """

    cfg = PPOConfig(batch_size=8, minibatch_count=3, learning_rate=1e-3)
    net = PolicyNetwork(seed=9)
    snapshot = net.copy()
    buffer = fill_buffer(16)
    new_snapshot, infos = ppo_update(net, snapshot, buffer, cfg, make_optimizer(cfg), np.random.default_rng(0))
    assert len(infos) == 3
    assert len(buffer) == 0
    assert new_snapshot is not net
    assert any(not np.array_equal(a, b) for a, b in zip(net.parameters(), snapshot.parameters()))
    assert all(np.array_equal(a, b) for a, b in zip(net.parameters(), new_snapshot.parameters()))


def test_ppo_update_skips_small_buffer():
    """
    Проверка пропуска обновления при недостаточном буфере.
    """

    cfg = PPOConfig(batch_size=32)
    net = PolicyNetwork(seed=10)
    snapshot = net.copy()
    buffer = fill_buffer(5)
    result, infos = ppo_update(net, snapshot, buffer, cfg, make_optimizer(cfg), np.random.default_rng(0))
    assert result is snapshot
    assert infos == []
    assert len(buffer) == 5


def test_checkpoint(tmp_path):
    """
    Проверка записи и чтения контрольной точки и проверки версии кодирования состояния.
    """

    path = str(tmp_path / 'agent.ckpt.json')
    net = PolicyNetwork(seed=11)
    cfg = PPOConfig(learning_rate=3e-4)
    save_checkpoint(path, net, cfg, state_version=1)

    restored, restored_cfg = load_checkpoint(path, state_version=1)
    assert restored_cfg == cfg
    assert all(np.allclose(a, b) for a, b in zip(restored.parameters(), net.parameters()))

    with pytest.raises(CheckpointError):
        load_checkpoint(path, state_version=2)
    with pytest.raises(CheckpointError):
        load_checkpoint(str(tmp_path / 'missing.json'), state_version=1)

    broken = tmp_path / 'broken.json'
    broken.write_text('{not json', encoding='utf8')
    with pytest.raises(CheckpointError):
        load_checkpoint(str(broken), state_version=1)

    data = json.loads((tmp_path / 'agent.ckpt.json').read_text(encoding='utf8'))
    data['format_version'] = 99
    (tmp_path / 'old.json').write_text(json.dumps(data), encoding='utf8')
    with pytest.raises(CheckpointError):
        load_checkpoint(str(tmp_path / 'old.json'), state_version=1)

    with pytest.raises(CheckpointError):
        save_checkpoint(str(tmp_path / 'no' / 'such' / 'dir.json'), net, cfg, state_version=1)

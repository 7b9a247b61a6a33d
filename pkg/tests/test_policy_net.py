import numpy as np
import pytest

from app.errors import CheckpointError, TrainingDivergenceError
from app.policy_net import PolicyNetwork, dense_backward, dense_forward, softmax


def test_softmax():
    """
    Проверка нормировки softmax и устойчивости к большим логитам.
    """

    probs = softmax(np.array([[1.0, 2.0, 3.0], [1000.0, 1000.0, -1000.0]]))
    assert np.allclose(probs.sum(axis=1), 1.0)
    assert np.allclose(probs[1], [0.5, 0.5, 0.0])
    assert np.all(np.diff(probs[0]) > 0)


def test_network_shapes():
    """
    Проверка размерностей выходов и числа параметров архитектуры по умолчанию.
    """

    net = PolicyNetwork(seed=1)
    states = np.random.default_rng(0).normal(size=(5, 9))
    probs = net.probs(states)
    values, _ = net.values(states)
    assert probs.shape == (5, 2)
    assert np.allclose(probs.sum(axis=1), 1.0)
    assert values.shape == (5,)
    assert net.parameter_count() == (9 * 64 + 64 + 64 * 64 + 64 + 64 * 2 + 2) + (9 * 64 + 64 + 64 * 64 + 64 + 65)


def test_initial_policy_is_near_uniform():
    """
    Проверка почти равномерного распределения действий после инициализации.
    """

    net = PolicyNetwork(seed=2)
    probs = net.probs(np.random.default_rng(1).uniform(size=(20, 9)))
    assert np.allclose(probs, 0.5, atol=0.05)


def test_network_seed_and_copy():
    """
    Проверка детерминированности инициализации и независимости копии.
    """

    a, b = PolicyNetwork(seed=3), PolicyNetwork(seed=3)
    assert all(np.array_equal(x, y) for x, y in zip(a.parameters(), b.parameters()))

    clone = a.copy()
    clone.parameters()[0] += 1.0
    assert not np.array_equal(clone.parameters()[0], a.parameters()[0])
    assert np.array_equal(a.parameters()[0], b.parameters()[0])


def test_non_finite_logits():
    """
    Проверка ошибки расходимости при нечисловых весах.
    """

    net = PolicyNetwork(seed=4)
    net.actor[0][0][0, 0] = np.nan
    assert not net.is_finite()
    with pytest.raises(TrainingDivergenceError):
        net.probs(np.ones(9))


def test_dense_backward_matches_finite_differences():
    """
    Проверка аналитического обратного прохода численным дифференцированием.
    """

    rng = np.random.default_rng(5)
    layers = [(rng.normal(size=(3, 4)), rng.normal(size=4)), (rng.normal(size=(4, 2)), rng.normal(size=2))]
    x = rng.normal(size=(6, 3))
    target = rng.normal(size=(6, 2))

    def loss() -> float:
        out, _ = dense_forward(layers, x)
        return float(np.sum(out * target))

    _, inputs = dense_forward(layers, x)
    grads = dense_backward(layers, inputs, target)
    h = 1e-6
    for (weight, bias), (d_weight, d_bias) in zip(layers, grads):
        for array, grad in ((weight, d_weight), (bias, d_bias)):
            numeric = np.zeros_like(array)
            for index in np.ndindex(array.shape):
                saved = array[index]
                array[index] = saved + h
                plus = loss()
                array[index] = saved - h
                minus = loss()
                array[index] = saved
                numeric[index] = (plus - minus) / (2 * h)
            assert np.allclose(numeric, grad, rtol=1e-5, atol=1e-7)


def test_dict_restores_network():
    """
    Проверка восстановления сети из описания контрольной точки.
    """

    net = PolicyNetwork(state_dim=4, hidden_sizes=(8,), seed=6)
    restored = PolicyNetwork.from_dict(net.to_dict(), expected_state_dim=4)
    assert restored.hidden_sizes == (8,)
    states = np.ones((2, 4))
    assert np.allclose(restored.probs(states), net.probs(states))


def test_dict_errors():
    """
    Проверка ошибок при несовпадении архитектуры и поврежденном описании.
    """

    data = PolicyNetwork(state_dim=4, hidden_sizes=(8,), seed=6).to_dict()
    with pytest.raises(CheckpointError):
        PolicyNetwork.from_dict(data, expected_state_dim=9)

    broken = dict(data, actor=data['actor'][:1])
    with pytest.raises(CheckpointError):
        PolicyNetwork.from_dict(broken)

    with pytest.raises(CheckpointError):
        PolicyNetwork.from_dict({'actor': []})

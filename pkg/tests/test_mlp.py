import numpy as np
import pytest

from hetknockoffs.errors import NumericalError
from hetknockoffs.importance.mlp import (
    Mlp,
    MlpConfig,
    fit_mlp,
    mlp_input_gradients,
    mlp_predict,
)


def test_identity_net_gradient_is_weight_vector():
    w = np.array([1.0, -2.0, 0.5])
    net = Mlp(
        W1=np.column_stack([w, np.zeros(3)]),
        b1=np.zeros(2),
        W2=np.eye(2),
        b2=np.zeros(2),
        w3=np.array([1.0, 0.0]),
        b3=0.0,
        x_mean=np.zeros(3),
        x_std=np.ones(3),
        y_mean=0.0,
        y_std=1.0,
        activation="identity",
    )
    rows = np.random.default_rng(0).standard_normal((5, 3))
    grads = mlp_input_gradients(net, rows)
    np.testing.assert_allclose(grads, np.tile(w, (5, 1)), atol=1e-12)
    np.testing.assert_allclose(mlp_predict(net, rows), rows @ w, atol=1e-12)


def test_gradients_match_central_differences():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((60, 4)) * 1.5
    y = np.sin(X[:, 0]) + X[:, 1] ** 2 + rng.standard_normal(60) * 0.1
    net = fit_mlp(y, X, MlpConfig(epochs=150, seed=2))
    rows = rng.standard_normal((20, 4))
    grads = mlp_input_gradients(net, rows)
    eps = 1e-5
    for j in range(4):
        hi, lo = rows.copy(), rows.copy()
        hi[:, j] += eps
        lo[:, j] -= eps
        fd = (mlp_predict(net, hi) - mlp_predict(net, lo)) / (2 * eps)
        rel = np.abs(grads[:, j] - fd) / np.maximum(np.abs(fd), 1e-8)
        assert rel.max() < 1e-5


def test_training_loss_decreases():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((200, 3))
    y = X @ [1.0, -1.0, 0.5] + 0.1 * rng.standard_normal(200)
    net = fit_mlp(y, X, MlpConfig(epochs=300, seed=4))
    assert net.losses[-1] < net.losses[0]
    assert net.losses[-1] < 0.05


def test_sine_fit_reaches_heldout_r2():
    rng = np.random.default_rng(5)
    n = 2000
    x = rng.uniform(-1.0, 1.0, n)
    y = np.sin(2 * np.pi * x) + 0.1 * rng.standard_normal(n)
    net = fit_mlp(y[:1500], x[:1500, None], MlpConfig(seed=6))
    pred = mlp_predict(net, x[1500:, None])
    r2 = 1.0 - np.mean((pred - y[1500:]) ** 2) / np.var(y[1500:])
    assert r2 > 0.5


def test_divergence_raises_with_diagnostic():
    rng = np.random.default_rng(7)
    X = rng.standard_normal((100, 2))
    y = X[:, 0]
    with pytest.raises(NumericalError, match="step_size"):
        fit_mlp(y, X, MlpConfig(epochs=500, step_size=25.0, seed=8))


def test_minibatch_training_runs():
    rng = np.random.default_rng(9)
    X = rng.standard_normal((150, 2))
    y = X[:, 0] + 0.1 * rng.standard_normal(150)
    net = fit_mlp(y, X, MlpConfig(epochs=100, batch_size=32, seed=10))
    assert net.losses[-1] < net.losses[0]


def test_seeded_training_is_deterministic():
    rng = np.random.default_rng(11)
    X = rng.standard_normal((80, 3))
    y = X[:, 0] + rng.standard_normal(80)
    a = fit_mlp(y, X, MlpConfig(epochs=50, seed=12))
    b = fit_mlp(y, X, MlpConfig(epochs=50, seed=12))
    np.testing.assert_array_equal(a.W1, b.W1)
    np.testing.assert_array_equal(a.losses, b.losses)


def test_config_validation():
    with pytest.raises(ValueError):
        MlpConfig(activation="relu")
    with pytest.raises(ValueError):
        MlpConfig(hidden=(64,))

"""Two-hidden-layer dense network with explicit backpropagation.

Used as the smooth outcome model behind gradient-based importance: the
forward pass is continuously differentiable, so per-row input gradients
are exact.  Inputs and the response are standardized internally; the
reported input gradients are chain-ruled back to raw units.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .._rng import keyed_rng
from ..errors import NumericalError

ACTIVATIONS = ("tanh", "identity")


@dataclass(frozen=True)
class MlpConfig:
    hidden: tuple[int, int] = (64, 64)
    epochs: int = 500
    step_size: float = 0.1
    batch_size: Optional[int] = None  # None = full batch
    activation: str = "tanh"
    seed: int = 0

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if len(self.hidden) != 2:
            raise ValueError("exactly two hidden layers")


@dataclass
class Mlp:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: float
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float
    activation: str = "tanh"
    losses: np.ndarray = field(default=None, repr=False)


def _act(z, kind):
    return np.tanh(z) if kind == "tanh" else z


def _act_grad(a, kind):
    # derivative expressed through the activation value
    return 1.0 - a * a if kind == "tanh" else np.ones_like(a)


def _forward(mlp: Mlp, Z):
    H1 = _act(Z @ mlp.W1 + mlp.b1, mlp.activation)
    H2 = _act(H1 @ mlp.W2 + mlp.b2, mlp.activation)
    out = H2 @ mlp.w3 + mlp.b3
    return H1, H2, out


def mlp_predict(mlp: Mlp, rows) -> np.ndarray:
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    Z = (rows - mlp.x_mean) / mlp.x_std
    return _forward(mlp, Z)[2] * mlp.y_std + mlp.y_mean


def mlp_input_gradients(mlp: Mlp, rows) -> np.ndarray:
    """Exact per-row gradient of the fitted function w.r.t. raw inputs."""
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    Z = (rows - mlp.x_mean) / mlp.x_std
    H1, H2, _ = _forward(mlp, Z)
    d2 = _act_grad(H2, mlp.activation) * mlp.w3  # (m, h2)
    d1 = _act_grad(H1, mlp.activation) * (d2 @ mlp.W2.T)  # (m, h1)
    grad_z = d1 @ mlp.W1.T  # (m, d)
    return grad_z * (mlp.y_std / mlp.x_std)


def fit_mlp(y, design, config: MlpConfig = MlpConfig()) -> Mlp:
    """Gradient-descent training on squared error; loss must decrease and
    stay finite, otherwise training aborts with a diagnostic."""
    X = np.asarray(design, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = X.shape
    x_mean = X.mean(axis=0)
    x_std = np.where(X.std(axis=0) > 0, X.std(axis=0), 1.0)
    y_mean = float(y.mean())
    y_std = float(y.std()) or 1.0
    Z = (X - x_mean) / x_std
    yn = (y - y_mean) / y_std

    h1, h2 = config.hidden
    rng = keyed_rng(config.seed, "mlp_init")
    mlp = Mlp(
        W1=rng.normal(0.0, 1.0 / np.sqrt(d), (d, h1)),
        b1=np.zeros(h1),
        W2=rng.normal(0.0, 1.0 / np.sqrt(h1), (h1, h2)),
        b2=np.zeros(h2),
        w3=rng.normal(0.0, 1.0 / np.sqrt(h2), h2),
        b3=0.0,
        x_mean=x_mean,
        x_std=x_std,
        y_mean=y_mean,
        y_std=y_std,
        activation=config.activation,
    )

    batch = config.batch_size
    shuffle_rng = keyed_rng(config.seed, "mlp_batches")
    losses = np.empty(config.epochs)
    lr = config.step_size
    for epoch in range(config.epochs):
        if batch is None:
            slices = [np.arange(n)]
        else:
            perm = shuffle_rng.permutation(n)
            slices = [perm[i : i + batch] for i in range(0, n, batch)]
        epoch_loss = 0.0
        for idx in slices:
            Zb, yb = Z[idx], yn[idx]
            H1, H2, out = _forward(mlp, Zb)
            err = out - yb
            epoch_loss += 0.5 * float(err @ err)
            m = idx.size
            g_out = err / m
            g_w3 = H2.T @ g_out
            g_b3 = g_out.sum()
            d2 = np.outer(g_out, mlp.w3) * _act_grad(H2, mlp.activation)
            g_W2 = H1.T @ d2
            g_b2 = d2.sum(axis=0)
            d1 = (d2 @ mlp.W2.T) * _act_grad(H1, mlp.activation)
            g_W1 = Zb.T @ d1
            g_b1 = d1.sum(axis=0)
            mlp.W1 -= lr * g_W1
            mlp.b1 -= lr * g_b1
            mlp.W2 -= lr * g_W2
            mlp.b2 -= lr * g_b2
            mlp.w3 -= lr * g_w3
            mlp.b3 -= lr * g_b3
        losses[epoch] = epoch_loss / n
        if not np.isfinite(losses[epoch]):
            raise NumericalError(
                f"MLP training diverged at epoch {epoch} (loss={losses[epoch]}); "
                f"reduce step_size (currently {lr})"
            )
    mlp.losses = losses
    return mlp

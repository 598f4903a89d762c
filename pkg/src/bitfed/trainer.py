"""Local training hooks and synthetic data for the federated harness.

The task is small on purpose: binary classification of two Gaussian blobs
with a logistic regression model, so a full experiment runs in seconds and
learning progress (falling loss, rising accuracy) is still measurable. Data
generation is keyed by the same 32-byte seeds as the crypto so runs are
reproducible end to end. Shards are drawn IID by default; the non-IID mode
skews each client's label mix to exercise averaging under heterogeneity.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .sampling import derive_seed


def _rng(seed: bytes) -> np.random.Generator:
    entropy = int.from_bytes(seed, "little")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def make_blobs(seed: bytes, count: int, dim: int, pos_fraction: float = 0.5):
    """Two unit-variance Gaussian blobs at +/- mu, class separation 6 sigma."""
    rng = _rng(seed)
    y = (rng.random(count) < pos_fraction).astype(np.int64)
    mu = np.full(dim, 3.0 / np.sqrt(dim))
    x = rng.standard_normal((count, dim)) + np.where(y[:, None] == 1, mu, -mu)
    return x, y


def client_shard(seed: bytes, client_id: int, count: int, dim: int, iid: bool = True):
    sub = derive_seed(seed, "shard", client_id)
    if iid:
        frac = 0.5
    else:
        # deterministic skew in [0.1, 0.9], varies by client
        frac = 0.1 + 0.8 * float(_rng(derive_seed(sub, "skew")).random())
    return make_blobs(sub, count, dim, pos_fraction=frac)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class LogisticTrainer:
    """Full-batch gradient descent on one shard.

    The model is a single layer of dim + 1 floats, bias last. Called with the
    current global model, returns the locally updated copy.
    """

    def __init__(self, x: np.ndarray, y: np.ndarray, lr: float = 0.5, epochs: int = 5):
        self.x = x
        self.y = y.astype(np.float64)
        self.lr = lr
        self.epochs = epochs

    def __call__(self, model: list[np.ndarray]) -> list[np.ndarray]:
        layer = model[0].copy()
        w, b = layer[:-1], layer[-1]
        for _ in range(self.epochs):
            p = _sigmoid(self.x @ w + b)
            err = p - self.y
            w -= self.lr * (self.x.T @ err) / len(self.y)
            b -= self.lr * float(err.mean())
        layer[:-1], layer[-1] = w, b
        return [layer]


class IdentityTrainer:
    """Returns the global model unchanged; isolates the aggregation pipeline."""

    def __call__(self, model: list[np.ndarray]) -> list[np.ndarray]:
        return [layer.copy() for layer in model]


def make_trainer(name: str, x: np.ndarray, y: np.ndarray, lr: float, epochs: int):
    if name == "logistic":
        return LogisticTrainer(x, y, lr=lr, epochs=epochs)
    if name == "identity":
        return IdentityTrainer()
    raise ConfigError(f"unknown trainer {name!r} (expected 'logistic' or 'identity')")


def evaluate(model: list[np.ndarray], x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Mean logistic loss and accuracy of the linear model on (x, y)."""
    layer = model[0]
    z = x @ layer[:-1] + layer[-1]
    p = _sigmoid(z)
    eps = 1e-12
    yf = y.astype(np.float64)
    loss = float(-np.mean(yf * np.log(p + eps) + (1 - yf) * np.log(1 - p + eps)))
    acc = float(np.mean((p >= 0.5) == (y == 1)))
    return loss, acc

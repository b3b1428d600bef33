"""Two-hidden-layer leaky-ReLU network trained with Adam, dropout and early stopping."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LAYER_SIZES = (32, 64, 128, 256)
MINIBATCH_SIZES = (4, 8, 16, 32, 64)
LEAKY_SLOPE = 0.01


@dataclass(frozen=True)
class MlpHyperparams:
    layer1: int = 64
    layer2: int = 64
    dropout_rate: float = 0.0
    init_stddev: float = 0.1
    minibatch: int = 32
    rng_seed: int = 0
    patience: int = 10
    max_epochs: int = 500
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.layer1 not in LAYER_SIZES or self.layer2 not in LAYER_SIZES:
            raise ValueError(f"layer sizes must be in {LAYER_SIZES}")
        if not 0.0 <= self.dropout_rate <= 0.5:
            raise ValueError("dropout_rate must lie in [0, 0.5]")
        if not 1e-4 <= self.init_stddev <= 1.0:
            raise ValueError("init_stddev must lie in [0.0001, 1.0]")
        if self.minibatch not in MINIBATCH_SIZES:
            raise ValueError(f"minibatch must be one of {MINIBATCH_SIZES}")
        if self.patience < 1 or self.max_epochs < 1:
            raise ValueError("patience and max_epochs must be positive")


PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3")


def leaky_relu(x):
    return np.where(x > 0, x, LEAKY_SLOPE * x)


def leaky_relu_grad(x):
    return np.where(x > 0, 1.0, LEAKY_SLOPE)


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def init_params(n_in: int, layer1: int, layer2: int, n_out: int, stddev: float,
                rng: np.random.Generator) -> dict[str, np.ndarray]:
    shapes = [(n_in, layer1), (layer1, layer2), (layer2, n_out)]
    params = {}
    for i, shape in enumerate(shapes, start=1):
        params[f"W{i}"] = rng.normal(0.0, stddev, size=shape)
        params[f"b{i}"] = np.zeros(shape[1])
    return params


def forward(params, X, dropout_rate=0.0, rng=None):
    """Logits plus the cache needed for backprop.

    Inverted dropout is applied after each hidden activation when
    ``dropout_rate > 0`` and an ``rng`` is supplied.
    """
    cache = {"X": X}
    h = X
    for i in (1, 2):
        pre = h @ params[f"W{i}"] + params[f"b{i}"]
        h = leaky_relu(pre)
        mask = None
        if dropout_rate > 0.0 and rng is not None:
            keep = 1.0 - dropout_rate
            mask = (rng.random(h.shape) < keep) / keep
            h = h * mask
        cache[f"pre{i}"], cache[f"h{i}"], cache[f"mask{i}"] = pre, h, mask
    logits = h @ params["W3"] + params["b3"]
    return logits, cache


def cross_entropy(params, X, y) -> float:
    logits, _ = forward(params, X)
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(len(y)), y].mean())


def analytic_gradient(params, X, y, cache=None) -> dict[str, np.ndarray]:
    """Gradient of the mean cross-entropy w.r.t. every weight and bias."""
    if cache is None:
        logits, cache = forward(params, X)
    else:
        logits = cache["h2"] @ params["W3"] + params["b3"]
    n = len(y)
    delta = softmax(logits)
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads = {"W3": cache["h2"].T @ delta, "b3": delta.sum(axis=0)}
    back = delta @ params["W3"].T
    for i in (2, 1):
        if cache[f"mask{i}"] is not None:
            back = back * cache[f"mask{i}"]
        back = back * leaky_relu_grad(cache[f"pre{i}"])
        below = cache["h1"] if i == 2 else cache["X"]
        grads[f"W{i}"] = below.T @ back
        grads[f"b{i}"] = back.sum(axis=0)
        if i == 2:
            back = back @ params["W2"].T
    return grads


class Adam:
    """Bias-corrected Adam over a dict of arrays, updated in place."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for k, g in grads.items():
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            m_hat = self.m[k] / (1 - b1 ** self.t)
            v_hat = self.v[k] / (1 - b2 ** self.t)
            params[k] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def mlp_proba(params, X) -> np.ndarray:
    logits, _ = forward(params, np.asarray(X, dtype=np.float64))
    return softmax(logits)


def accuracy(params, X, y) -> float:
    return float(np.mean(np.argmax(mlp_proba(params, X), axis=1) == y))


@dataclass
class TrainingHistory:
    val_accuracy: list
    best_epoch: int
    final_val_accuracy: float


def train_network(X, y, X_val, y_val, n_classes: int, hp: MlpHyperparams):
    """Minibatch Adam; returns ``(best_params, history)``.

    Stops once validation accuracy has not improved for ``hp.patience``
    epochs and hands back the best-validation snapshot.
    """
    X = np.asarray(X, dtype=np.float64)
    X_val = np.asarray(X_val, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    y_val = np.asarray(y_val, dtype=np.int64)
    if len(X) == 0 or len(X_val) == 0:
        raise ValueError("training and validation sets must be non-empty")
    if X.shape[1] != X_val.shape[1] or len(X) != len(y) or len(X_val) != len(y_val):
        raise ValueError("training and validation dimensions do not match")
    rng = np.random.default_rng(hp.rng_seed)
    params = init_params(X.shape[1], hp.layer1, hp.layer2, n_classes, hp.init_stddev, rng)
    opt = Adam(params, hp.learning_rate, hp.beta1, hp.beta2, hp.epsilon)
    best = {k: v.copy() for k, v in params.items()}
    best_acc, best_epoch, stale = -1.0, -1, 0
    history = []
    for epoch in range(hp.max_epochs):
        order = rng.permutation(len(X))
        for start in range(0, len(X), hp.minibatch):
            batch = order[start:start + hp.minibatch]
            _, cache = forward(params, X[batch], hp.dropout_rate, rng)
            opt.step(params, analytic_gradient(params, X[batch], y[batch], cache))
        acc = accuracy(params, X_val, y_val)
        history.append(acc)
        if acc > best_acc:
            best = {k: v.copy() for k, v in params.items()}
            best_acc, best_epoch, stale = acc, epoch, 0
        else:
            stale += 1
            if stale >= hp.patience:
                break
    return best, TrainingHistory(history, best_epoch, history[-1])

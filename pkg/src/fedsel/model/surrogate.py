"""Single-hidden-layer softmax classifier used as the on-device model."""

from __future__ import annotations

from typing import List, Tuple

import numpy as np

from .data import FEATURE_DIM, N_CLASSES, LocalDataset, stable_seed
from .weights import ModelWeights

HIDDEN = "hidden"
OUTPUT = "output"


def init_weights(seed: int, hidden: int = 16, n_in: int = FEATURE_DIM, n_out: int = N_CLASSES) -> ModelWeights:
    rng = np.random.default_rng(stable_seed("init", seed))
    return ModelWeights(
        {
            f"{HIDDEN}/kernel": rng.normal(0.0, np.sqrt(2.0 / n_in), (n_in, hidden)),
            f"{HIDDEN}/bias": np.zeros(hidden),
            f"{OUTPUT}/kernel": rng.normal(0.0, np.sqrt(1.0 / hidden), (hidden, n_out)),
            f"{OUTPUT}/bias": np.zeros(n_out),
        }
    )


def _params(w: ModelWeights):
    return [
        w[f"{HIDDEN}/kernel"].astype(np.float64),
        w[f"{HIDDEN}/bias"].astype(np.float64),
        w[f"{OUTPUT}/kernel"].astype(np.float64),
        w[f"{OUTPUT}/bias"].astype(np.float64),
    ]


def _forward(params, x):
    w1, b1, w2, b2 = params
    h_pre = x @ w1 + b1
    h = np.maximum(h_pre, 0.0)
    logits = h @ w2 + b2
    logits = logits - logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    p /= p.sum(axis=1, keepdims=True)
    return h_pre, h, p


def _loss(params, x, y) -> float:
    _, _, p = _forward(params, x)
    return float(-np.mean(np.log(p[np.arange(len(y)), y] + 1e-12)))


def predict(w: ModelWeights, x: np.ndarray) -> np.ndarray:
    _, _, p = _forward(_params(w), np.asarray(x, dtype=np.float64))
    return p.argmax(axis=1)


def error_rate(w: ModelWeights, x: np.ndarray, y: np.ndarray) -> float:
    if len(y) == 0:
        raise ValueError("cannot evaluate on an empty set")
    return float(np.mean(predict(w, x) != np.asarray(y)))


def train_local(
    w: ModelWeights,
    data: LocalDataset,
    epochs: int,
    batch_size: int,
    lr: float = 0.1,
    seed: int = 0,
) -> Tuple[ModelWeights, List[float]]:
    """Mini-batch gradient descent on the cross-entropy loss.

    A trailing partial batch is dropped unless the whole set is smaller than
    one batch. The returned history holds the full training-set loss after
    each epoch.
    """
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if data.n_train == 0:
        raise ValueError("empty training set")
    if epochs == 0:
        return w.copy(), []

    rng = np.random.default_rng(stable_seed("train", seed))
    params = _params(w)
    x = np.asarray(data.x_train, dtype=np.float64)
    y = np.asarray(data.y_train)
    n = len(y)
    n_batches = max(1, n // batch_size)
    history = []
    for _ in range(epochs):
        order = rng.permutation(n)
        for b in range(n_batches):
            idx = order[b * batch_size : (b + 1) * batch_size] if n >= batch_size else order
            xb, yb = x[idx], y[idx]
            h_pre, h, p = _forward(params, xb)
            d_logits = p.copy()
            d_logits[np.arange(len(yb)), yb] -= 1.0
            d_logits /= len(yb)
            w1, b1, w2, b2 = params
            g_w2 = h.T @ d_logits
            g_b2 = d_logits.sum(axis=0)
            d_h = (d_logits @ w2.T) * (h_pre > 0)
            g_w1 = xb.T @ d_h
            g_b1 = d_h.sum(axis=0)
            params = [w1 - lr * g_w1, b1 - lr * g_b1, w2 - lr * g_w2, b2 - lr * g_b2]
        history.append(_loss(params, x, y))

    names = list(w.tensors)
    return ModelWeights(dict(zip(names, params))), history


def evaluate(w: ModelWeights, data: LocalDataset) -> float:
    """Validation error rate in [0, 1]; the client's WER analog."""
    if data.n_val == 0:
        raise ValueError("empty validation set")
    return error_rate(w, data.x_val, data.y_val)

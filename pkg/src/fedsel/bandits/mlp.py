"""Bias-free rectifier network with a sqrt(m)-scaled linear output.

    f(c) = sqrt(m) * W_L relu(W_{L-1} relu(... relu(W_1 c)))

``theta`` is the concatenation of every W_l flattened row-major, i.e.
vec(W_l^T) stacked layer by layer. ``m`` is the first hidden width.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np


class MlpShapeError(ValueError):
    pass


@dataclass
class MlpParameters:
    layers: List[np.ndarray]  # W_l with shape (fan_out, fan_in)

    def __post_init__(self):
        self.layers = [np.asarray(w, dtype=np.float64) for w in self.layers]
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if nxt.shape[1] != prev.shape[0]:
                raise MlpShapeError(f"layer chain broken: {prev.shape} -> {nxt.shape}")

    @property
    def input_dim(self) -> int:
        return self.layers[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].shape[0]

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def m(self) -> int:
        # width used by the sqrt(m) scale and the exploration normaliser
        return self.layers[0].shape[0] if self.depth > 1 else self.output_dim

    @property
    def p(self) -> int:
        return sum(w.size for w in self.layers)

    @property
    def theta(self) -> np.ndarray:
        return np.concatenate([w.reshape(-1) for w in self.layers])

    def with_theta(self, theta: np.ndarray) -> "MlpParameters":
        theta = np.asarray(theta, dtype=np.float64)
        if theta.size != self.p:
            raise MlpShapeError(f"theta has {theta.size} values, expected {self.p}")
        out, pos = [], 0
        for w in self.layers:
            out.append(theta[pos : pos + w.size].reshape(w.shape).copy())
            pos += w.size
        return MlpParameters(out)

    def copy(self) -> "MlpParameters":
        return MlpParameters([w.copy() for w in self.layers])


def init_mlp(input_dim: int, hidden: Sequence[int] = (32, 16), output_dim: int = 2, rng=None) -> MlpParameters:
    rng = np.random.default_rng(rng)
    dims = [input_dim, *hidden, output_dim]
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        last = i == len(dims) - 2
        m = hidden[0] if hidden else output_dim
        std = np.sqrt(1.0 / (fan_in * m)) if last else np.sqrt(2.0 / fan_in)
        layers.append(rng.normal(0.0, std, (fan_out, fan_in)))
    return MlpParameters(layers)


def _check_input(params: MlpParameters, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.input_dim:
        raise MlpShapeError(f"feature dimension {x.shape[-1]} != network input {params.input_dim}")
    return x


def mlp_forward(params: MlpParameters, x: np.ndarray) -> np.ndarray:
    """Raw (unclamped) outputs for one feature vector or a batch of rows."""
    h = _check_input(params, x)
    for w in params.layers[:-1]:
        h = np.maximum(h @ w.T, 0.0)
    return np.sqrt(params.m) * (h @ params.layers[-1].T)


def mlp_gradient(params: MlpParameters, x: np.ndarray, channel: int = 0) -> np.ndarray:
    """d f_channel / d theta at a single input, in theta order."""
    x = _check_input(params, x)
    if x.ndim != 1:
        raise MlpShapeError("mlp_gradient takes a single feature vector")
    acts = [x]
    pre = []
    h = x
    for w in params.layers[:-1]:
        a = w @ h
        pre.append(a)
        h = np.maximum(a, 0.0)
        acts.append(h)
    delta = np.zeros(params.output_dim)
    delta[channel] = np.sqrt(params.m)
    grads = [None] * params.depth
    for l in range(params.depth - 1, -1, -1):
        grads[l] = np.outer(delta, acts[l])
        if l > 0:
            delta = (params.layers[l].T @ delta) * (pre[l - 1] > 0)
    return np.concatenate([g.reshape(-1) for g in grads])


def mse_loss_and_grad(params: MlpParameters, X: np.ndarray, Y: np.ndarray) -> Tuple[float, List[np.ndarray]]:
    """Mean over rows of the summed squared error, and its gradient per layer."""
    X = _check_input(params, X)
    n = X.shape[0]
    acts = [X]
    pre = []
    h = X
    for w in params.layers[:-1]:
        a = h @ w.T
        pre.append(a)
        h = np.maximum(a, 0.0)
        acts.append(h)
    scale = np.sqrt(params.m)
    out = scale * (h @ params.layers[-1].T)
    err = out - Y
    loss = float(np.sum(err * err) / n)
    delta = (2.0 / n) * err * scale
    grads: List[np.ndarray] = [None] * params.depth
    for l in range(params.depth - 1, -1, -1):
        grads[l] = delta.T @ acts[l]
        if l > 0:
            delta = (delta @ params.layers[l]) * (pre[l - 1] > 0)
    return loss, grads


def train_nn(
    params: MlpParameters,
    X: np.ndarray,
    Y: np.ndarray,
    steps: int = 100,
    lr: float = 1e-2,
    clip: Optional[float] = 1.0,
) -> Tuple[MlpParameters, List[float]]:
    """Full-batch gradient descent warm-started from ``params``.

    The global gradient norm is clipped to ``clip``: with the sqrt(m)
    output scaling a single unclipped step on a surprising observation can
    push every hidden unit negative, after which the network never recovers.
    """
    if len(X) == 0:
        return params.copy(), []
    layers = [w.copy() for w in params.layers]
    cur = MlpParameters(layers)
    history = []
    for _ in range(steps):
        loss, grads = mse_loss_and_grad(cur, X, Y)
        history.append(loss)
        if lr == 0.0:
            continue
        if clip is not None:
            norm = float(np.sqrt(sum(np.sum(g * g) for g in grads)))
            if norm > clip:
                grads = [g * (clip / norm) for g in grads]
        for w, g in zip(cur.layers, grads):
            w -= lr * g
    return cur, history

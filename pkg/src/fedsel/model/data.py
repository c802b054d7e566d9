"""Non-IID toy classification data.

Every client draws from the same 2-D Gaussian mixture, rotated by an angle
and re-weighted toward a few classes according to its ``dialect`` value in
[-1, 1]. Clients with different dialects therefore disagree about the
decision boundary, much like speakers with different accents.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

N_CLASSES = 4
FEATURE_DIM = 2
CENTER_RADIUS = 2.0
CLUSTER_STD = 0.8
MAX_ROTATION = np.pi / 3
LABEL_SKEW = 1.5


@dataclass
class LocalDataset:
    x_train: np.ndarray
    y_train: np.ndarray
    x_val: np.ndarray
    y_val: np.ndarray
    dialect: float = 0.0

    @property
    def n_train(self) -> int:
        return int(self.y_train.shape[0])

    @property
    def n_val(self) -> int:
        return int(self.y_val.shape[0])


def stable_seed(*parts) -> list[int]:
    """Seed material for ``np.random.default_rng`` that survives process restarts."""
    out = []
    for p in parts:
        if isinstance(p, str):
            out.append(zlib.crc32(p.encode("utf-8")))
        else:
            out.append(int(p) & 0xFFFFFFFF)
    return out


def derive_seed(*parts) -> int:
    """Collapse mixed seed material into one 32-bit integer."""
    return zlib.crc32(":".join(str(p) for p in parts).encode("utf-8"))


def class_prior(dialect: float) -> np.ndarray:
    angles = 2 * np.pi * np.arange(N_CLASSES) / N_CLASSES
    logits = LABEL_SKEW * dialect * np.cos(angles)
    p = np.exp(logits - logits.max())
    return p / p.sum()


def sample_points(n: int, dialect: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    angles = 2 * np.pi * np.arange(N_CLASSES) / N_CLASSES
    centers = CENTER_RADIUS * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    y = rng.choice(N_CLASSES, size=n, p=class_prior(dialect))
    x = centers[y] + CLUSTER_STD * rng.standard_normal((n, FEATURE_DIM))
    phi = dialect * MAX_ROTATION
    rot = np.array([[np.cos(phi), -np.sin(phi)], [np.sin(phi), np.cos(phi)]])
    return x @ rot.T, y.astype(np.int64)


def make_client_dataset(
    client_id: str, dialect: float, seed: int, n_train: int = 25, n_val: int = 10
) -> LocalDataset:
    rng = np.random.default_rng(stable_seed("data", seed, client_id))
    x, y = sample_points(n_train + n_val, dialect, rng)
    return LocalDataset(x[:n_train], y[:n_train], x[n_train:], y[n_train:], float(dialect))


def make_global_test_set(dialects: Sequence[float], seed: int, n_total: int = 150) -> tuple[np.ndarray, np.ndarray]:
    """Held-out samples spread evenly over all client distributions."""
    if not dialects:
        raise ValueError("need at least one dialect for the global test set")
    rng = np.random.default_rng(stable_seed("global-test", seed))
    counts = np.full(len(dialects), n_total // len(dialects))
    counts[: n_total % len(dialects)] += 1
    xs, ys = [], []
    for dialect, n in zip(dialects, counts):
        x, y = sample_points(int(n), float(dialect), rng)
        xs.append(x)
        ys.append(y)
    return np.concatenate(xs), np.concatenate(ys)

"""Server-side aggregation of flat client weight vectors.

Both strategies accumulate in float64 in client-id order and cast the
result to float32, which makes them exactly invariant to upload order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence

import numpy as np


class AggregationError(ValueError):
    pass


@dataclass
class ClientUpdate:
    client_id: str
    weights: np.ndarray
    wer: float
    n_samples: int
    batch_time_observed: float = 0.0
    battery_drop_observed: float = 0.0


def softmax_coefficients(wers: Sequence[float]) -> np.ndarray:
    """alpha_i proportional to exp(1 - WER_i); WER above 1 counts as 1."""
    if len(wers) == 0:
        raise AggregationError("no WER values")
    scores = 1.0 - np.clip(np.asarray(wers, dtype=np.float64), 0.0, 1.0)
    e = np.exp(scores - scores.max())
    return e / e.sum()


def _ordered(updates: Sequence[ClientUpdate]) -> List[ClientUpdate]:
    if not updates:
        raise AggregationError("no client updates")
    ordered = sorted(updates, key=lambda u: u.client_id)
    length = np.asarray(ordered[0].weights).size
    for u in ordered:
        if np.asarray(u.weights).size != length:
            raise AggregationError(
                f"client {u.client_id} sent {np.asarray(u.weights).size} values, expected {length}"
            )
    return ordered


def _combine(ordered: Sequence[ClientUpdate], coeffs: np.ndarray) -> np.ndarray:
    acc = np.zeros(np.asarray(ordered[0].weights).size, dtype=np.float64)
    for u, a in zip(ordered, coeffs):
        acc += a * np.asarray(u.weights, dtype=np.float64)
    return acc.astype(np.float32)


def wer_weighted_aggregate(updates: Sequence[ClientUpdate]) -> np.ndarray:
    ordered = _ordered(updates)
    return _combine(ordered, softmax_coefficients([u.wer for u in ordered]))


def fed_avg(updates: Sequence[ClientUpdate]) -> np.ndarray:
    ordered = _ordered(updates)
    n = np.array([u.n_samples for u in ordered], dtype=np.float64)
    if n.sum() <= 0:
        raise AggregationError("total sample count is zero")
    return _combine(ordered, n / n.sum())


AGGREGATORS: Dict[str, Callable[[Sequence[ClientUpdate]], np.ndarray]] = {
    "fedavg": fed_avg,
    "wer_softmax": wer_weighted_aggregate,
}


def get_aggregator(name: str) -> Callable[[Sequence[ClientUpdate]], np.ndarray]:
    try:
        return AGGREGATORS[name]
    except KeyError:
        raise AggregationError(f"unknown aggregation strategy {name!r}") from None

"""CSV writers. Floats use 6 significant digits; missing values are empty."""

from __future__ import annotations

import csv
import math
import os
from collections import defaultdict
from typing import Iterable, List, Sequence

from ..devices import CONTEXT_FIELDS

ROUND_COLUMNS = [
    "seed", "t", "strategy", "warmup", "client_id", "chosen", *CONTEXT_FIELDS,
    "bt_hat", "d_hat", "bt_true", "d_true", "oracle_batch_time", "ucb_score",
    "epochs_assigned", "epochs_completed", "died", "aggregated", "duration_s", "waiting_s",
    "battery_after", "wer", "m_t_s", "deadline_s", "round_end_s", "completed",
    "round_regret", "cumulative_regret", "global_error", "estimator_mse", "prediction_mse",
]

SERIES_COLUMNS = [
    "seed", "t", "round_regret", "cumulative_regret", "estimator_mse", "prediction_mse", "global_error",
    "max_waiting_s", "mean_waiting_s",
]


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return ""
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.6g}"
    return str(v)


def export_csv(reports: Sequence, path: str | os.PathLike) -> None:
    """One row per (round, reporting client)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ROUND_COLUMNS)
        for r in reports:
            for cid, c in r.clients.items():
                ctx = [getattr(c.context, f) if c.context is not None else None for f in CONTEXT_FIELDS]
                row = [
                    r.seed, r.t, r.strategy, r.warmup, cid, c.chosen, *ctx,
                    c.bt_hat, c.d_hat, c.bt_true, c.d_true, c.oracle_batch_time, c.ucb_score,
                    c.epochs_assigned, c.epochs_completed, c.died, c.aggregated, c.duration, c.waiting,
                    c.battery_after, c.wer, r.time_budget, r.deadline, r.round_end, r.completed,
                    r.round_regret, r.cumulative_regret, r.global_error, r.estimator_mse, r.prediction_mse,
                ]
                w.writerow([fmt(v) for v in row])


def _series_rows(run) -> List[list]:
    rows = [[run.seed, 0, None, 0.0, None, None, run.initial_error, None, None]]
    for r in run.reports:
        rows.append(
            [
                r.seed, r.t, r.round_regret, r.cumulative_regret, r.estimator_mse, r.prediction_mse,
                r.global_error, r.max_waiting, r.mean_waiting,
            ]
        )
    return rows


def export_series(runs: Iterable, path: str | os.PathLike, mean_path: str | os.PathLike) -> None:
    runs = list(runs)
    by_t = defaultdict(list)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SERIES_COLUMNS)
        for run in runs:
            for row in _series_rows(run):
                w.writerow([fmt(v) for v in row])
                by_t[row[1]].append(row)
    with open(mean_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "n_seeds", *SERIES_COLUMNS[2:]])
        for t in sorted(by_t):
            rows = by_t[t]
            means = []
            for j in range(2, len(SERIES_COLUMNS)):
                vals = [r[j] for r in rows if r[j] is not None and math.isfinite(r[j])]
                means.append(sum(vals) / len(vals) if vals else None)
            w.writerow([t, len(rows), *(fmt(v) for v in means)])

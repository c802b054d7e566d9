"""Estimator comparison on the heterogeneous four-phone fleet.

Runs LinUCB, NeuralUCB-s and NeuralUCB-m for T rounds over several seeds
and reports, per strategy, the final fitting MSE of the estimator and the
cumulative pseudo-regret.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .config import ExperimentConfig
from .engine import SeedRun, run_seed
from .export import export_csv, export_series, fmt

logger = logging.getLogger(__name__)

BENCH_STRATEGIES = ("linucb", "neuralucb_s", "neuralucb_m")


@dataclass
class StrategyBench:
    strategy: str
    runs: List[SeedRun] = field(default_factory=list)

    @property
    def final_mse(self) -> List[float]:
        out = []
        for run in self.runs:
            vals = [r.estimator_mse for r in run.reports if r.estimator_mse is not None]
            out.append(vals[-1] if vals else float("nan"))
        return out

    @property
    def cumulative_regret(self) -> List[float]:
        return [run.reports[-1].cumulative_regret if run.reports else 0.0 for run in self.runs]

    def summary(self) -> dict:
        return {
            "strategy": self.strategy,
            "mean_final_mse": float(np.mean(self.final_mse)),
            "mean_cumulative_regret": float(np.mean(self.cumulative_regret)),
            "mean_fairness_jain": float(np.mean([r.fairness for r in self.runs])),
            "final_mse": self.final_mse,
            "cumulative_regret": self.cumulative_regret,
        }


def bench_config(strategy: str, rounds: int = 475, seeds: Sequence[int] = (0, 1, 2, 3, 4), **overrides) -> ExperimentConfig:
    base = dict(fleet="table1", rounds=rounds, k=2, strategy=strategy, seeds=list(seeds))
    base.update(overrides)
    return ExperimentConfig(**base)


def run_bandit_bench(
    rounds: int = 475,
    seeds: Sequence[int] = (0, 1, 2, 3, 4),
    strategies: Sequence[str] = BENCH_STRATEGIES,
    out_dir: Optional[str | os.PathLike] = None,
    **overrides,
) -> Dict[str, StrategyBench]:
    results: Dict[str, StrategyBench] = {}
    for strategy in strategies:
        cfg = bench_config(strategy, rounds, seeds, **overrides)
        bench = StrategyBench(strategy)
        for seed in cfg.seeds:
            logger.info("bench %s seed %d", strategy, seed)
            bench.runs.append(run_seed(cfg, seed))
        results[strategy] = bench
        if out_dir is not None:
            sub = Path(out_dir) / strategy
            sub.mkdir(parents=True, exist_ok=True)
            for run in bench.runs:
                export_csv(run.reports, sub / f"rounds_seed{run.seed}.csv")
            export_series(bench.runs, sub / "series.csv", sub / "series_mean.csv")
    if out_dir is not None:
        write_bench_summary(results, out_dir)
    return results


def write_bench_summary(results: Dict[str, StrategyBench], out_dir: str | os.PathLike) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "bench.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["strategy", "seed", "final_mse", "cumulative_regret", "fairness_jain"])
        for name, bench in results.items():
            for run, mse, reg in zip(bench.runs, bench.final_mse, bench.cumulative_regret):
                w.writerow([name, run.seed, fmt(mse), fmt(reg), fmt(run.fairness)])
    (out / "bench_summary.json").write_text(
        json.dumps({name: b.summary() for name, b in results.items()}, indent=2, sort_keys=True)
    )

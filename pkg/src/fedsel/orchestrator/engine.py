"""In-process experiment driver on a virtual clock."""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from ..bandits.regret import jain_index
from .config import ExperimentConfig
from .coordinator import ClientWorker, RoundCoordinator, RoundReport
from .export import export_csv, export_series

logger = logging.getLogger(__name__)


@dataclass
class SimulationState:
    cfg: ExperimentConfig
    seed: int
    coordinator: RoundCoordinator
    workers: Dict[str, ClientWorker]
    clock: float = 0.0  # logical seconds since the first round began
    hung: bool = False

    @classmethod
    def create(cls, cfg: ExperimentConfig, seed: int) -> "SimulationState":
        fleet = cfg.resolve_fleet()
        workers = {p.device_id: ClientWorker(p, seed, cfg.local_lr) for p in fleet.profiles}
        return cls(cfg, seed, RoundCoordinator(cfg, seed), workers)


def run_round(state: SimulationState, t: int) -> RoundReport:
    """One synchronous round: contexts, selection, local training, aggregation."""
    coord = state.coordinator
    reports = [w.report(t) for w in state.workers.values()]
    plan = coord.plan(t, reports)
    results = {}
    for cid in plan.chosen:
        results[cid] = state.workers[cid].train(t, coord.global_weights, plan.epochs[cid], plan.bs)
    uploaded = {cid: r for cid, r in results.items() if r.update is not None}
    report = coord.complete(t, plan, reports, uploaded)
    # device-side truth the server cannot see
    for cid, r in results.items():
        rec = report.clients[cid]
        rec.died = r.died
        rec.epochs_completed = r.epochs_completed
        rec.battery_after = r.battery_after
        if rec.duration is None:
            rec.duration = r.duration
    if report.watchdog_fired:
        state.hung = True
        state.clock += state.cfg.watchdog
    elif report.round_end is not None:
        state.clock += report.round_end
    return report


@dataclass
class SeedRun:
    seed: int
    initial_error: float
    reports: List[RoundReport]
    selection_counts: Dict[str, int]

    @property
    def fairness(self) -> float:
        return jain_index(self.selection_counts.values())


@dataclass
class ExperimentResult:
    cfg: ExperimentConfig
    runs: List[SeedRun] = field(default_factory=list)

    def summary(self) -> dict:
        per_seed = []
        for run in self.runs:
            measured = [r for r in run.reports if not r.warmup and not r.skipped]
            waits = [r.max_waiting for r in measured if r.max_waiting is not None]
            per_seed.append(
                {
                    "seed": run.seed,
                    "rounds": len(run.reports),
                    "initial_error": run.initial_error,
                    "final_error": run.reports[-1].global_error if run.reports else run.initial_error,
                    "cumulative_regret": run.reports[-1].cumulative_regret if run.reports else 0.0,
                    "mean_round_waiting_s": float(np.mean(waits)) if waits else None,
                    "hung": any(r.watchdog_fired for r in run.reports),
                    "fairness_jain": run.fairness,
                    "selection_counts": run.selection_counts,
                }
            )

        def mean_of(key):
            vals = [s[key] for s in per_seed if s[key] is not None and not (isinstance(s[key], float) and math.isinf(s[key]))]
            return float(np.mean(vals)) if vals else None

        return {
            "config": json.loads(self.cfg.model_dump_json()),
            "seeds": per_seed,
            "mean": {
                k: mean_of(k)
                for k in ("initial_error", "final_error", "cumulative_regret", "mean_round_waiting_s", "fairness_jain")
            },
        }


def run_seed(cfg: ExperimentConfig, seed: int) -> SeedRun:
    state = SimulationState.create(cfg, seed)
    reports = []
    for t in range(1, cfg.rounds + 1):
        reports.append(run_round(state, t))
        if state.hung:
            logger.warning("seed %d: round %d never completed; stopping", seed, t)
            break
    return SeedRun(seed, state.coordinator.initial_error, reports, dict(state.coordinator.selection_counts))


def run_experiment(cfg: ExperimentConfig, out_dir: Optional[str | os.PathLike] = None) -> ExperimentResult:
    result = ExperimentResult(cfg)
    for seed in cfg.seeds:
        result.runs.append(run_seed(cfg, seed))
    if out_dir is not None:
        write_outputs(result, out_dir)
    return result


def write_outputs(result: ExperimentResult, out_dir: str | os.PathLike) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for run in result.runs:
        export_csv(run.reports, out / f"rounds_seed{run.seed}.csv")
    export_series(result.runs, out / "series.csv", out / "series_mean.csv")
    with open(out / "fairness.csv", "w") as fh:
        fh.write("seed,client_id,selections,jain_index\n")
        for run in result.runs:
            for cid, n in run.selection_counts.items():
                fh.write(f"{run.seed},{cid},{n},{run.fairness:.6g}\n")
    (out / "summary.json").write_text(json.dumps(result.summary(), indent=2, sort_keys=True))

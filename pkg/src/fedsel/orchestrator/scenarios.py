"""Single-round slow-vs-fast and low-battery straggler scenarios.

Both scenarios pin the estimators to fixed cost predictions so the epoch
and waiting-time arithmetic is isolated from bandit training noise.
"""

from __future__ import annotations

import math
from typing import Optional

from ..fleets import SCENARIO_ESTIMATES
from .config import ExperimentConfig
from .engine import SimulationState, run_round


def scenario_config(scenario: int, strategy: str = "resource_aware", paper_fidelity: bool = False, seed: int = 0) -> ExperimentConfig:
    if scenario not in SCENARIO_ESTIMATES:
        raise ValueError(f"scenario must be one of {sorted(SCENARIO_ESTIMATES)}")
    return ExperimentConfig(
        fleet=f"scenario{scenario}",
        rounds=1,
        k=2,
        strategy=strategy,
        e_min=1,
        e_max=7,
        batch_size=5,
        gamma=20.0,
        seeds=[seed],
        frozen_estimates=SCENARIO_ESTIMATES[scenario],
        paper_fidelity=paper_fidelity,
    )


def _minutes(v: Optional[float]) -> Optional[float]:
    if v is None:
        return None
    return math.inf if math.isinf(v) else v / 60.0


def scenario_table2(
    scenario: int, strategy: str = "resource_aware", paper_fidelity: Optional[bool] = None, seed: int = 0
) -> dict:
    """Run one round and return every evaluation-table column.

    ``paper_fidelity`` defaults to on for the random baseline (no round
    deadline, so a dead client hangs the round) and off otherwise.
    """
    if paper_fidelity is None:
        paper_fidelity = strategy == "random"
    cfg = scenario_config(scenario, strategy, paper_fidelity, seed)
    state = SimulationState.create(cfg, seed)
    report = run_round(state, 1)
    plan = report.plan
    audit = {row["client_id"]: row for row in plan.audit()["clients"]} if plan.assessments else {}
    estimates = SCENARIO_ESTIMATES[scenario]
    gamma = cfg.gamma

    clients = []
    for cid, rec in sorted(report.clients.items()):
        a = audit.get(cid, {})
        bt_hat, d_hat = estimates[cid]
        clients.append(
            {
                "client_id": cid,
                "AC": rec.context.AC if rec.context is not None else None,
                "BS": rec.context.BS if rec.context is not None else None,
                "actual_batch_time_s": rec.bt_true if rec.bt_true is not None else rec.oracle_batch_time,
                "b_t_hat_s": bt_hat,
                "d_hat": d_hat,
                "b_max": a.get("b_max"),
                "e_max_t": a.get("e_max_t"),
                "e_min": cfg.e_min,
                "e_max": cfg.e_max,
                "chosen": rec.chosen,
                "e_t": rec.epochs_assigned if rec.chosen else None,
                "epochs_completed": rec.epochs_completed,
                "died": rec.died,
                "battery_after": rec.battery_after,
                "above_gamma": rec.battery_after is not None and rec.battery_after >= gamma,
                "training_time_min": _minutes(rec.duration),
                "waiting_min": _minutes(rec.waiting),
            }
        )
    return {
        "scenario": scenario,
        "strategy": strategy,
        "paper_fidelity": paper_fidelity,
        "m_t_min": _minutes(report.time_budget),
        "deadline_min": _minutes(report.deadline),
        "round_end_min": _minutes(report.round_end),
        "waiting_min": _minutes(report.max_waiting),
        "completed": report.completed,
        "watchdog_fired": report.watchdog_fired,
        "overruns": list(plan.overruns) if plan is not None else [],
        "clients": clients,
    }

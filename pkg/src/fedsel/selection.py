"""Client selection with adaptive epoch assignment.

Per available client the server predicts per-batch time and battery drop,
caps the epochs it can afford before its battery reaches ``gamma``, keeps the
clients that can still run ``e_min`` epochs, lets the UCB scores pick up to
``k`` of them, and then sizes everyone's epochs to the tightest chosen cap
so all chosen clients finish at about the same time.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from .bandits.estimators import CostEstimate, EstimatorBank, UcbScore
from .bandits.regret import select_top
from .devices import ContextVector

logger = logging.getLogger(__name__)

# guards integer floors against representation error, e.g. 35.0 stored as 34.999...
FLOOR_EPS = 1e-9


def _floor(x: float) -> int:
    return int(math.floor(x + FLOOR_EPS))


@dataclass(frozen=True)
class SelectionConfig:
    k: int
    e_min: int = 1
    e_max: int = 7
    bs: int = 5
    gamma: float = 20.0
    charging_bypass: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 1 <= self.e_min <= self.e_max:
            raise ValueError("need 1 <= e_min <= e_max")
        if self.bs < 1:
            raise ValueError("bs must be >= 1")
        if not 0 <= self.gamma < 100:
            raise ValueError("gamma must be in [0, 100)")


@dataclass(frozen=True)
class Candidate:
    client_id: str
    context: ContextVector
    n_samples: int


@dataclass
class CandidateAssessment:
    client_id: str
    context: ContextVector
    estimate: CostEstimate
    n_samples: int
    b_max: Optional[int]  # None: unbounded (charging bypass)
    e_max_t: int
    eligible: bool
    reason: str = ""

    def batches_per_epoch(self, bs: int) -> float:
        return self.n_samples / bs


def assess(client_id: str, c: ContextVector, est: CostEstimate, n: int, cfg: SelectionConfig) -> CandidateAssessment:
    if n < cfg.bs:
        return CandidateAssessment(client_id, c, est, n, 0, 0, False, "fewer samples than one batch")
    if cfg.charging_bypass and c.BS == 1:
        return CandidateAssessment(client_id, c, est, n, None, cfg.e_max, True, "charging")
    b_max = _floor((c.AC - cfg.gamma) / est.battery_drop_hat) if c.AC > cfg.gamma else 0
    b_max = max(b_max, 0)
    # floor(b_max / (n/bs)) computed exactly in integers
    e_max_t = min(cfg.e_max, (b_max * cfg.bs) // n)
    eligible = e_max_t >= cfg.e_min
    return CandidateAssessment(client_id, c, est, n, b_max, e_max_t, eligible, "" if eligible else "battery headroom")


@dataclass
class SelectionPlan:
    t: int
    strategy: str
    chosen: List[str]
    epochs: Dict[str, int]
    time_budget: Optional[float]  # m_t in seconds; None when unbounded
    bs: int
    assessments: Dict[str, CandidateAssessment] = field(default_factory=dict)
    scores: Dict[str, UcbScore] = field(default_factory=dict)
    overruns: List[str] = field(default_factory=list)
    e_min: int = 1
    e_max: int = 7

    @property
    def empty(self) -> bool:
        return not self.chosen

    def predicted_duration(self, client_id: str) -> float:
        a = self.assessments[client_id]
        return self.epochs[client_id] * a.batches_per_epoch(self.bs) * a.estimate.batch_time_hat

    def audit(self) -> dict:
        """One row per assessed client carrying the evaluation-table columns."""
        rows = []
        for cid, a in self.assessments.items():
            rows.append(
                {
                    "client_id": cid,
                    "AC": a.context.AC,
                    "BS": a.context.BS,
                    "e_min": self.e_min,
                    "e_max": self.e_max,
                    "b_t_hat": a.estimate.batch_time_hat,
                    "d_hat": a.estimate.battery_drop_hat,
                    "b_max": a.b_max,
                    "e_max_t": a.e_max_t,
                    "eligible": a.eligible,
                    "chosen": cid in self.chosen,
                    "e_t": self.epochs.get(cid),
                    "score": self.scores[cid].value if cid in self.scores else None,
                }
            )
        return {
            "t": self.t,
            "strategy": self.strategy,
            "chosen": list(self.chosen),
            "m_t_seconds": self.time_budget,
            "m_t_minutes": None if self.time_budget is None else self.time_budget / 60.0,
            "overruns": list(self.overruns),
            "clients": rows,
        }


def plan_round(
    candidates: Sequence[Candidate], bank: EstimatorBank, cfg: SelectionConfig, t: int = 0, strategy: str = "resource_aware"
) -> SelectionPlan:
    assessments = {}
    for cand in candidates:
        est = bank.estimate(cand.client_id, cand.context)
        assessments[cand.client_id] = assess(cand.client_id, cand.context, est, cand.n_samples, cfg)
    eligible = [cid for cid, a in assessments.items() if a.eligible]
    plan = SelectionPlan(t, strategy, [], {}, None, cfg.bs, assessments, e_min=cfg.e_min, e_max=cfg.e_max)
    if not eligible:
        logger.info("round %d: no eligible clients, skipping", t)
        return plan

    scores = {cid: bank.score(cid, assessments[cid].context) for cid in eligible}
    chosen = select_top(scores, cfg.k)

    m_t = math.inf
    for cid in chosen:
        a = assessments[cid]
        m_t = min(m_t, a.e_max_t * a.batches_per_epoch(cfg.bs) * a.estimate.batch_time_hat)

    epochs = {}
    overruns = []
    for cid in chosen:
        a = assessments[cid]
        e = _floor((m_t / a.estimate.batch_time_hat) * (cfg.bs / a.n_samples))
        if e < cfg.e_min:
            overruns.append(cid)
            logger.info("round %d: %s clamped up to e_min, budget overrun", t, cid)
        epochs[cid] = int(min(max(e, cfg.e_min), a.e_max_t))

    plan.chosen = chosen
    plan.epochs = epochs
    plan.time_budget = m_t
    plan.scores = scores
    plan.overruns = overruns
    return plan


def ucb_select(
    candidates: Sequence[Candidate], bank: EstimatorBank, cfg: SelectionConfig, t: int = 0, strategy: str = "ucb"
) -> SelectionPlan:
    """Top-k by UCB score with a fixed ``e_max`` epochs and no time budget."""
    if not candidates:
        return SelectionPlan(t, strategy, [], {}, None, cfg.bs, e_min=cfg.e_min, e_max=cfg.e_max)
    assessments = {
        c.client_id: assess(c.client_id, c.context, bank.estimate(c.client_id, c.context), c.n_samples, cfg)
        for c in candidates
    }
    scores = {c.client_id: bank.score(c.client_id, c.context) for c in candidates}
    chosen = select_top(scores, cfg.k)
    return SelectionPlan(
        t, strategy, chosen, {cid: cfg.e_max for cid in chosen}, None, cfg.bs, assessments, scores,
        e_min=cfg.e_min, e_max=cfg.e_max,
    )


def random_select(
    available: Sequence[str], k: int, seed=None, e_max: int = 7, bs: int = 5, t: int = 0
) -> SelectionPlan:
    """Uniform sample without replacement; everyone runs ``e_max`` epochs."""
    if not available:
        raise ValueError("no available clients")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    pool = sorted(available)
    idx = rng.choice(len(pool), size=min(k, len(pool)), replace=False)
    chosen = [pool[i] for i in idx]
    return SelectionPlan(t, "random", chosen, {cid: e_max for cid in chosen}, None, bs, e_min=1, e_max=e_max)


def waiting_times(durations: Mapping[str, float]) -> Dict[str, float]:
    """Per client: slowest co-selected duration minus its own."""
    if not durations:
        return {}
    end = max(durations.values())
    return {cid: end - d for cid, d in durations.items()}


def predicted_waiting_time(plan: SelectionPlan) -> Dict[str, float]:
    if plan.empty:
        raise ValueError("empty plan")
    return waiting_times({cid: plan.predicted_duration(cid) for cid in plan.chosen})


def realized_waiting_time(
    epochs: Mapping[str, int], n_samples: Mapping[str, int], batch_times: Mapping[str, float], bs: int
) -> Dict[str, float]:
    """Waiting times when each client really needs ``batch_times`` per batch."""
    return waiting_times({cid: e * (n_samples[cid] / bs) * batch_times[cid] for cid, e in epochs.items()})

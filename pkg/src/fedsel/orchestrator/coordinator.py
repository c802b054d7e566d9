"""Round logic shared by the in-process engine and the socket server/client.

:class:`RoundCoordinator` is the server half (selection, deadline,
aggregation, estimator feedback); :class:`ClientWorker` is the device half
(context report, local training). Both modes drive exactly these objects,
so given the same seed they produce the same plans and weights.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from ..aggregation import ClientUpdate, get_aggregator
from ..bandits.estimators import FrozenBank, Observation, make_bank
from ..bandits.regret import RegretTracker
from ..devices import ContextVector, DeviceProfile, SimulatedDevice, true_cost
from ..model import (
    ModelWeights,
    error_rate,
    evaluate,
    flatten_weights,
    init_weights,
    load_flat_weights,
    make_client_dataset,
    make_global_test_set,
    train_local,
)
from ..model.data import derive_seed, stable_seed
from ..selection import Candidate, SelectionPlan, assess, plan_round, random_select, ucb_select, waiting_times
from .config import ExperimentConfig

logger = logging.getLogger(__name__)


@dataclass
class ClientReport:
    """What a client tells the server before a round."""

    client_id: str
    context: Optional[ContextVector]  # None: device unavailable
    n_samples: int
    oracle_batch_time: Optional[float] = None  # noise-free true cost, simulation only


@dataclass
class ClientResult:
    """Outcome of one chosen client's local round."""

    client_id: str
    duration: float  # logical seconds spent training
    update: Optional[ClientUpdate]  # None if the device switched off
    batches_done: int = 0
    epochs_completed: int = 0
    died: bool = False
    battery_after: Optional[float] = None


@dataclass
class ClientRecord:
    client_id: str
    context: Optional[ContextVector]
    chosen: bool
    bt_hat: Optional[float] = None
    d_hat: Optional[float] = None
    bt_true: Optional[float] = None
    d_true: Optional[float] = None
    oracle_batch_time: Optional[float] = None
    ucb_score: Optional[float] = None
    epochs_assigned: int = 0
    epochs_completed: int = 0
    died: bool = False
    uploaded: bool = False
    aggregated: bool = False
    duration: Optional[float] = None
    waiting: Optional[float] = None
    battery_after: Optional[float] = None
    wer: Optional[float] = None


@dataclass
class RoundReport:
    t: int
    seed: int
    strategy: str
    warmup: bool
    chosen: List[str]
    epochs: Dict[str, int]
    time_budget: Optional[float]
    deadline: Optional[float]
    round_end: Optional[float]
    completed: bool
    watchdog_fired: bool
    skipped: bool
    voided: bool
    round_regret: Optional[float]
    cumulative_regret: float
    global_error: float
    estimator_mse: Optional[float]  # fitting loss over everything observed so far
    prediction_mse: Optional[float] = None  # pre-observation error on this round's uploads
    clients: Dict[str, ClientRecord] = field(default_factory=dict)
    plan: Optional[SelectionPlan] = None

    @property
    def max_waiting(self) -> Optional[float]:
        w = [c.waiting for c in self.clients.values() if c.waiting is not None]
        return max(w) if w else None

    @property
    def mean_waiting(self) -> Optional[float]:
        w = [c.waiting for c in self.clients.values() if c.waiting is not None]
        return float(np.mean(w)) if w else None


class RoundCoordinator:
    """Server-side state for one seeded run."""

    def __init__(self, cfg: ExperimentConfig, seed: int):
        self.cfg = cfg
        self.seed = int(seed)
        fleet = cfg.resolve_fleet()
        self.client_ids = [p.device_id for p in fleet.profiles]
        self.selection = cfg.selection_config()
        if cfg.frozen_estimates is not None:
            self.bank = FrozenBank(cfg.frozen_estimates)
        elif cfg.estimator_kind is not None:
            self.bank = make_bank(cfg.estimator_kind, self.client_ids, cfg.estimator_config(seed))
        else:
            self.bank = None
        self.aggregate = get_aggregator(cfg.aggregation)
        self.global_weights = init_weights(seed, cfg.hidden_units)
        self.manifest = self.global_weights.manifest
        self.test_x, self.test_y = make_global_test_set([p.dialect for p in fleet.profiles], seed, cfg.global_test_size)
        self.rng = np.random.default_rng(stable_seed("select", seed))
        self.regret = RegretTracker(literal=cfg.regret_literal)
        self.selection_counts = {cid: 0 for cid in self.client_ids}
        self.initial_error = self.global_error()

    def global_error(self) -> float:
        return error_rate(self.global_weights, self.test_x, self.test_y)

    def is_warmup(self, t: int) -> bool:
        return self.bank is not None and not isinstance(self.bank, FrozenBank) and t <= self.cfg.warmup_rounds

    # -- selection -----------------------------------------------------

    def plan(self, t: int, reports: Sequence[ClientReport]) -> SelectionPlan:
        sel = self.selection
        candidates = [Candidate(r.client_id, r.context, r.n_samples) for r in reports if r.context is not None]
        candidates.sort(key=lambda c: c.client_id)
        strategy = self.cfg.strategy
        if not candidates:
            return SelectionPlan(t, strategy, [], {}, None, sel.bs, e_min=sel.e_min, e_max=sel.e_max)
        if strategy == "random":
            return random_select([c.client_id for c in candidates], sel.k, self.rng, sel.e_max, sel.bs, t)
        if self.is_warmup(t):
            return self._warmup_plan(t, candidates)
        if strategy == "resource_aware":
            return plan_round(candidates, self.bank, sel, t, strategy)
        return ucb_select(candidates, self.bank, sel, t, strategy)

    def _warmup_plan(self, t: int, candidates: Sequence[Candidate]) -> SelectionPlan:
        """Round-robin over clients with battery headroom, e_min epochs each."""
        sel = self.selection
        assessments = {
            c.client_id: assess(c.client_id, c.context, self.bank.estimate(c.client_id, c.context), c.n_samples, sel)
            for c in candidates
        }
        pool = [
            c.client_id for c in candidates
            if c.context.AC >= sel.gamma + self.cfg.warmup_battery_margin and c.n_samples >= sel.bs
        ]
        plan = SelectionPlan(t, "warmup", [], {}, None, sel.bs, assessments, e_min=sel.e_min, e_max=sel.e_max)
        if not pool:
            return plan
        start = ((t - 1) * sel.k) % len(pool)
        chosen = [pool[(start + i) % len(pool)] for i in range(min(sel.k, len(pool)))]
        plan.chosen = chosen
        plan.epochs = {cid: sel.e_min for cid in chosen}
        return plan

    def deadline(self, plan: SelectionPlan) -> Optional[float]:
        """Logical seconds after which missing uploads are dropped."""
        if self.cfg.paper_fidelity:
            return None
        if plan.time_budget is not None:
            return self.cfg.deadline_factor * plan.time_budget
        return self.cfg.round_timeout

    # -- completion ----------------------------------------------------

    def complete(
        self, t: int, plan: SelectionPlan, reports: Sequence[ClientReport], results: Mapping[str, ClientResult]
    ) -> RoundReport:
        """Close the round given whatever the chosen clients delivered.

        ``results`` may omit clients that never uploaded (switched off or
        disconnected); the deadline then decides when the round ends.
        """
        cfg = self.cfg
        warmup = plan.strategy == "warmup"
        deadline = self.deadline(plan)
        by_id = {r.client_id: r for r in reports}
        records: Dict[str, ClientRecord] = {}
        for r in reports:
            rec = ClientRecord(r.client_id, r.context, r.client_id in plan.chosen, oracle_batch_time=r.oracle_batch_time)
            a = plan.assessments.get(r.client_id)
            if a is not None:
                rec.bt_hat = a.estimate.batch_time_hat
                rec.d_hat = a.estimate.battery_drop_hat
            if r.client_id in plan.scores:
                rec.ucb_score = plan.scores[r.client_id].value
            rec.epochs_assigned = plan.epochs.get(r.client_id, 0)
            records[r.client_id] = rec

        if plan.empty:
            return RoundReport(
                t, self.seed, plan.strategy, warmup, [], {}, None, None, None, True, False, True, True,
                None, self.regret.cumulative, self.global_error(), None, None, records, plan,
            )

        for cid in plan.chosen:
            self.selection_counts[cid] += 1

        on_time: List[ClientResult] = []
        uploaded: List[ClientResult] = []
        for cid in plan.chosen:
            res = results.get(cid)
            rec = records[cid]
            if res is None:
                rec.died = True
                continue
            rec.duration = res.duration
            rec.died = res.died
            rec.epochs_completed = res.epochs_completed
            rec.battery_after = res.battery_after
            if res.update is None:
                continue
            rec.uploaded = True
            uploaded.append(res)
            rec.wer = res.update.wer
            rec.bt_true = res.update.batch_time_observed
            rec.d_true = res.update.battery_drop_observed
            if deadline is None or res.duration <= deadline:
                on_time.append(res)
                rec.aggregated = True

        all_in = len(on_time) == len(plan.chosen)
        if all_in:
            round_end = max(r.duration for r in on_time)
        elif deadline is not None:
            round_end = deadline
        else:
            round_end = math.inf
        watchdog = math.isinf(round_end)
        completed = not watchdog

        for res in on_time:
            records[res.client_id].waiting = round_end - res.duration

        voided = not on_time or watchdog
        if not voided:
            flat = self.aggregate([r.update for r in on_time])
            self.global_weights = load_flat_weights(flat, self.manifest)
        else:
            logger.info("round %d voided (%s)", t, "watchdog" if watchdog else "no updates")

        mse = pred_mse = None
        if self.bank is not None and not watchdog:
            errs = []
            ts, ds = cfg.estimator.time_scale, cfg.estimator.drop_scale
            # late uploads still carry true costs; dropping them would leave an
            # underestimated straggler uncorrected and chosen again
            for res in uploaded:
                rec = records[res.client_id]
                if rec.bt_hat is not None:
                    errs.append(((rec.bt_hat - rec.bt_true) / ts) ** 2)
                    errs.append(((rec.d_hat - rec.d_true) / ds) ** 2)
            pred_mse = float(np.mean(errs)) if errs else None
            obs = [
                (
                    r.client_id,
                    Observation(by_id[r.client_id].context, r.update.batch_time_observed, r.update.battery_drop_observed, t),
                )
                for r in sorted(uploaded, key=lambda r: r.client_id)
            ]
            self.bank.observe(obs)
            mse = self.bank.training_mse()

        round_regret = None
        oracle = {r.client_id: -r.oracle_batch_time for r in reports if r.context is not None and r.oracle_batch_time is not None}
        if oracle and all(cid in oracle for cid in plan.chosen):
            predicted = {cid: -rec.bt_hat for cid, rec in records.items() if rec.bt_hat is not None}
            if not cfg.regret_literal or all(cid in predicted for cid in plan.chosen):
                round_regret = self.regret.record(oracle, plan.chosen, self.selection.k, predicted)

        return RoundReport(
            t=t, seed=self.seed, strategy=plan.strategy, warmup=warmup, chosen=list(plan.chosen),
            epochs=dict(plan.epochs), time_budget=plan.time_budget, deadline=deadline, round_end=round_end,
            completed=completed, watchdog_fired=watchdog, skipped=False, voided=voided,
            round_regret=round_regret, cumulative_regret=self.regret.cumulative, global_error=self.global_error(),
            estimator_mse=mse, prediction_mse=pred_mse, clients=records, plan=plan,
        )


class ClientWorker:
    """Device half of a client: simulated phone plus its local data."""

    def __init__(self, profile: DeviceProfile, seed: int, local_lr: float = 0.1):
        self.profile = profile
        self.seed = int(seed)
        self.local_lr = local_lr
        self.device = SimulatedDevice(profile, seed)
        self.data = make_client_dataset(profile.device_id, profile.dialect, seed, profile.n_train, profile.n_val)
        self.context: Optional[ContextVector] = None

    @property
    def client_id(self) -> str:
        return self.profile.device_id

    def report(self, t: int) -> ClientReport:
        self.device.begin_round(t)
        if not self.device.alive:
            self.context = None
            return ClientReport(self.client_id, None, self.data.n_train)
        self.context = self.device.sample_context(t)
        oracle = true_cost(self.profile, self.context).batch_time
        return ClientReport(self.client_id, self.context, self.data.n_train, oracle)

    def train(self, t: int, weights: ModelWeights, epochs: int, bs: int, lr: Optional[float] = None) -> ClientResult:
        if epochs < 1:
            raise ValueError(f"{self.client_id}: asked to train {epochs} epochs")
        per_epoch = max(1, self.data.n_train // bs)
        step = self.device.step_training(epochs * per_epoch, self.context)
        done_epochs = step.batches_done // per_epoch
        if step.died:
            return ClientResult(self.client_id, step.elapsed, None, step.batches_done, done_epochs, True, step.battery)
        new_w, _ = train_local(
            weights, self.data, epochs, bs, lr if lr is not None else self.local_lr,
            seed=derive_seed("local", self.seed, self.client_id, t),
        )
        update = ClientUpdate(
            client_id=self.client_id,
            weights=flatten_weights(new_w),
            wer=evaluate(new_w, self.data),
            n_samples=self.data.n_train,
            batch_time_observed=step.mean_batch_time,
            battery_drop_observed=step.mean_battery_drop,
        )
        return ClientResult(self.client_id, step.elapsed, update, step.batches_done, done_epochs, False, step.battery)

"""Experiment configuration (JSON on disk, validated with pydantic)."""

from __future__ import annotations

import os
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..bandits.estimators import EstimatorConfig
from ..devices import FleetConfig, load_fleet
from ..fleets import BUILTIN_FLEETS, get_fleet
from ..selection import SelectionConfig

Strategy = Literal["random", "linucb", "neuralucb_s", "neuralucb_m", "resource_aware"]


class EstimatorSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    hidden: Tuple[int, ...] = (32, 16)
    lam: float = Field(default=1.0, gt=0)
    alpha: Optional[float] = Field(default=None, ge=0)
    lr: float = Field(default=1e-2, ge=0)
    steps: int = Field(default=100, ge=0)
    time_scale: float = Field(default=300.0, gt=0)
    drop_scale: float = Field(default=1.0, gt=0)


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    fleet: str = "table1"
    n_clients: Optional[int] = Field(default=None, ge=1)
    rounds: int = Field(default=5, ge=1)
    k: int = Field(default=2, ge=1)
    strategy: Strategy = "resource_aware"
    aggregation: Literal["fedavg", "wer_softmax"] = "wer_softmax"
    e_min: int = Field(default=1, ge=1)
    e_max: int = Field(default=7, ge=1)
    batch_size: int = Field(default=5, ge=1)
    gamma: float = Field(default=20.0, ge=0, lt=100)
    seeds: List[int] = Field(default_factory=lambda: [0], min_length=1)
    mode: Literal["in_process", "socket"] = "in_process"
    warmup_rounds: int = Field(default=20, ge=0)
    warmup_battery_margin: float = Field(default=25.0, ge=0)
    estimator: EstimatorSettings = Field(default_factory=EstimatorSettings)
    frozen_estimates: Optional[Dict[str, Tuple[float, float]]] = None
    local_lr: float = Field(default=0.1, gt=0)
    hidden_units: int = Field(default=16, ge=1)
    global_test_size: int = Field(default=150, ge=1)
    deadline_factor: float = Field(default=1.5, gt=0)
    round_timeout: float = Field(default=6 * 3600.0, gt=0, description="virtual seconds, plans without m_t")
    watchdog: float = Field(default=7 * 24 * 3600.0, gt=0, description="virtual seconds")
    paper_fidelity: bool = False
    charging_bypass: bool = False
    regret_literal: bool = False
    wall_time_scale: float = Field(default=0.0, ge=0, description="socket mode: wall seconds per simulated second")

    @model_validator(mode="after")
    def _consistent(self):
        if self.e_min > self.e_max:
            raise ValueError(f"e_min ({self.e_min}) must not exceed e_max ({self.e_max})")
        n = len(self.resolve_fleet().profiles)
        if self.k > n:
            raise ValueError(f"k ({self.k}) must not exceed the number of clients ({n})")
        return self

    def resolve_fleet(self) -> FleetConfig:
        if self.fleet in BUILTIN_FLEETS:
            fleet = get_fleet(self.fleet)
        elif os.path.exists(self.fleet):
            fleet = load_fleet(self.fleet)
        else:
            raise ValueError(f"fleet {self.fleet!r} is neither a built-in name nor a file")
        if self.n_clients is not None:
            if self.n_clients > len(fleet.profiles):
                raise ValueError(f"n_clients={self.n_clients} but fleet has {len(fleet.profiles)} profiles")
            fleet = FleetConfig(profiles=fleet.profiles[: self.n_clients])
        return fleet

    def selection_config(self) -> SelectionConfig:
        return SelectionConfig(
            k=self.k, e_min=self.e_min, e_max=self.e_max, bs=self.batch_size, gamma=self.gamma,
            charging_bypass=self.charging_bypass,
        )

    def estimator_config(self, seed: int) -> EstimatorConfig:
        e = self.estimator
        return EstimatorConfig(
            hidden=tuple(e.hidden), lam=e.lam, alpha=e.alpha, lr=e.lr, steps=e.steps,
            time_scale=e.time_scale, drop_scale=e.drop_scale, seed=seed,
        )

    @property
    def estimator_kind(self) -> Optional[str]:
        if self.strategy == "random":
            return None
        return "neuralucb_m" if self.strategy == "resource_aware" else self.strategy


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    return ExperimentConfig.model_validate_json(Path(path).read_text())

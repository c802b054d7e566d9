"""Heterogeneous edge-device simulator.

A :class:`DeviceProfile` is the static configuration of one phone; a
:class:`SimulatedDevice` carries its mutable state (battery, charger, the
background-load walk). Training cost is a product of slowdown factors:

    batch_time   = base * age * ram(AR/TR) * battery(AC) * cpu(CI) * noise
    battery_drop = base_drop * age * (1 - BS * charging_offset)
"""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .model.data import stable_seed

logger = logging.getLogger(__name__)

CONTEXT_FIELDS = ("TR", "AR", "AC", "BS", "CI", "PI")
# physical ranges used to scale features into [0, 1]
FEATURE_SCALE = {"TR": 16.0, "AR": 16.0, "AC": 100.0, "BS": 1.0, "CI": 100.0, "PI": 1.0e6}


class DeviceUnavailable(RuntimeError):
    """The device is switched off (battery exhausted)."""


@dataclass(frozen=True)
class ContextVector:
    TR: float
    AR: float
    AC: float
    BS: int
    CI: float
    PI: float

    def __post_init__(self):
        if not 0.0 <= self.AR <= self.TR:
            raise ValueError(f"need 0 <= AR <= TR, got AR={self.AR} TR={self.TR}")
        if not 0.0 <= self.AC <= 100.0:
            raise ValueError(f"AC out of range: {self.AC}")
        if self.BS not in (0, 1):
            raise ValueError(f"BS must be 0 or 1, got {self.BS}")
        if not 0.0 <= self.CI <= 100.0:
            raise ValueError(f"CI out of range: {self.CI}")
        if not self.PI > 0:
            raise ValueError(f"PI must be positive, got {self.PI}")

    def features(self, names: Sequence[str] = CONTEXT_FIELDS) -> np.ndarray:
        return np.array([getattr(self, n) / FEATURE_SCALE[n] for n in names], dtype=np.float64)

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Dict) -> "ContextVector":
        return cls(
            TR=float(d["TR"]),
            AR=float(d["AR"]),
            AC=float(d["AC"]),
            BS=int(d["BS"]),
            CI=float(d["CI"]),
            PI=float(d["PI"]),
        )


@dataclass(frozen=True)
class CostSample:
    batch_time: float
    battery_drop: float


class DeviceProfile(BaseModel):
    """Static description of one simulated phone."""

    model_config = ConfigDict(extra="forbid")

    device_id: str
    base_batch_time: float = Field(gt=0, description="seconds per batch, ideal conditions")
    base_battery_drop: float = Field(gt=0, description="battery percent per batch")
    age_factor: float = Field(default=1.0, ge=1.0)
    total_ram: float = Field(default=8.0, gt=0, description="TR in GB")
    benchmark_score: float = Field(default=400_000.0, gt=0, description="PI")
    battery: float = Field(default=100.0, ge=0, le=100)
    charging: bool = False
    charging_offset: float = Field(default=1.0, ge=0, le=1)
    plug_in_below: Optional[float] = Field(default=None, ge=0, le=100)
    charge_rate: float = Field(default=30.0, ge=0)
    low_battery_threshold: float = Field(default=20.0, ge=0, le=100)
    low_battery_penalty: float = Field(default=1.5, ge=1.0)
    penalty_ramp: float = Field(default=5.0, gt=0)
    ram_sensitivity: float = Field(default=0.5, ge=0)
    cpu_sensitivity: float = Field(default=0.3, ge=0)
    noise_sigma: float = Field(default=0.02, ge=0)
    idle_ram_fraction: float = Field(default=0.6, gt=0, le=1)
    loaded_ram_fraction: float = Field(default=0.3, ge=0, le=1)
    idle_cpu: float = Field(default=5.0, ge=0, le=100)
    loaded_cpu: float = Field(default=80.0, ge=0, le=100)
    initial_load: float = Field(default=0.0, ge=0, le=1)
    load_step: float = Field(default=0.15, ge=0)
    dialect: float = Field(default=0.0, ge=-1, le=1)
    n_train: int = Field(default=25, ge=1)
    n_val: int = Field(default=10, ge=1)
    rng_seed: int = 0

    @model_validator(mode="after")
    def _ranges(self):
        if self.loaded_ram_fraction > self.idle_ram_fraction:
            raise ValueError("loaded_ram_fraction must not exceed idle_ram_fraction")
        return self


class FleetConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    profiles: List[DeviceProfile]

    @model_validator(mode="after")
    def _unique_ids(self):
        ids = [p.device_id for p in self.profiles]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate device ids: {ids}")
        return self


def load_fleet(path: str | os.PathLike) -> FleetConfig:
    return FleetConfig.model_validate_json(Path(path).read_text())


def save_fleet(fleet: FleetConfig, path: str | os.PathLike) -> None:
    Path(path).write_text(fleet.model_dump_json(indent=2))


# --- cost model -----------------------------------------------------------


def ram_factor(p: DeviceProfile, ar_fraction: float) -> float:
    return 1.0 + p.ram_sensitivity * (1.0 - min(max(ar_fraction, 0.0), 1.0))


def battery_factor(p: DeviceProfile, ac: float) -> float:
    thr = p.low_battery_threshold
    if ac >= thr:
        return 1.0
    depth = min((thr - ac) / p.penalty_ramp, 1.0)
    return 1.0 + (p.low_battery_penalty - 1.0) * depth


def cpu_factor(p: DeviceProfile, ci: float) -> float:
    return 1.0 + p.cpu_sensitivity * ci / 100.0


def true_cost(p: DeviceProfile, c: ContextVector, noise: float = 0.0) -> CostSample:
    """Ground-truth per-batch cost; ``noise`` is a standard-normal draw."""
    bt = (
        p.base_batch_time
        * p.age_factor
        * ram_factor(p, c.AR / c.TR)
        * battery_factor(p, c.AC)
        * cpu_factor(p, c.CI)
    )
    if noise and p.noise_sigma > 0:
        bt *= float(np.exp(p.noise_sigma * noise))
    drop = p.base_battery_drop * p.age_factor * (1.0 - c.BS * p.charging_offset)
    return CostSample(batch_time=bt, battery_drop=drop)


# --- runtime state ----------------------------------------------------------


@dataclass
class StepResult:
    elapsed: float
    battery: float
    died: bool
    batches_done: int
    mean_batch_time: float
    mean_battery_drop: float

    def __iter__(self):
        # unpacks as (elapsed_seconds, new_battery, died)
        return iter((self.elapsed, self.battery, self.died))


class SimulatedDevice:
    """Mutable state of one phone: battery, charger, background load."""

    def __init__(self, profile: DeviceProfile, seed: int = 0):
        self.profile = profile
        self.seed = int(seed)
        self.battery = float(profile.battery)
        self.charging = bool(profile.charging)
        self._ram_load = [float(profile.initial_load)]
        self._cpu_load = [float(profile.initial_load)]
        self._runs = 0
        self._context: Optional[ContextVector] = None

    @property
    def device_id(self) -> str:
        return self.profile.device_id

    @property
    def alive(self) -> bool:
        return self.battery > 0.0

    def _walk(self, series: List[float], tag: str, t: int) -> float:
        p = self.profile
        while len(series) <= t:
            step = len(series)
            z = np.random.default_rng(stable_seed(tag, self.seed, p.rng_seed, p.device_id, step)).standard_normal()
            series.append(float(np.clip(series[-1] + p.load_step * z, 0.0, 1.0)))
        return series[t]

    def begin_round(self, t: int) -> None:
        """Apply the owner's charging habit between rounds."""
        p = self.profile
        if p.plug_in_below is None:
            return
        if not self.charging and self.battery < p.plug_in_below:
            self.charging = True
        if self.charging:
            self.battery = min(100.0, self.battery + p.charge_rate)
            if self.battery >= 100.0:
                self.charging = False

    def sample_context(self, t: int) -> ContextVector:
        if not self.alive:
            raise DeviceUnavailable(self.device_id)
        p = self.profile
        ram_load = self._walk(self._ram_load, "ram-load", t)
        cpu_load = self._walk(self._cpu_load, "cpu-load", t)
        ar_frac = p.idle_ram_fraction - (p.idle_ram_fraction - p.loaded_ram_fraction) * ram_load
        ci = p.idle_cpu + (p.loaded_cpu - p.idle_cpu) * cpu_load
        self._context = ContextVector(
            TR=p.total_ram,
            AR=p.total_ram * ar_frac,
            AC=self.battery,
            BS=int(self.charging),
            CI=float(ci),
            PI=p.benchmark_score,
        )
        return self._context

    def step_training(self, batches: int, context: Optional[ContextVector] = None) -> StepResult:
        """Run ``batches`` training batches, draining the battery as it goes.

        Memory and CPU load are held at the round's context; the battery
        term is re-evaluated before every batch so crossing into the
        low-battery band slows the remaining batches.
        """
        if batches < 0:
            raise ValueError("batches must be >= 0")
        if batches == 0:
            return StepResult(0.0, self.battery, False, 0, 0.0, 0.0)
        if not self.alive:
            return StepResult(0.0, 0.0, True, 0, 0.0, 0.0)
        base = context or self._context or self.sample_context(0)
        p = self.profile
        z = np.random.default_rng(stable_seed("cost", self.seed, p.rng_seed, p.device_id, self._runs)).standard_normal()
        self._runs += 1

        elapsed = 0.0
        done = 0
        drained = 0.0
        died = False
        for _ in range(batches):
            c = ContextVector(base.TR, base.AR, self.battery, int(self.charging), base.CI, base.PI)
            cost = true_cost(p, c, z)
            if cost.battery_drop > self.battery:
                elapsed += cost.batch_time * self.battery / cost.battery_drop
                drained += self.battery
                self.battery = 0.0
                died = True
                break
            self.battery -= cost.battery_drop
            drained += cost.battery_drop
            elapsed += cost.batch_time
            done += 1
            if self.battery <= 0.0:
                self.battery = 0.0
                died = True
                break
        if died:
            logger.info("device %s switched off after %d batches", self.device_id, done)
        mean_bt = elapsed / done if done else 0.0
        mean_drop = drained / done if done else 0.0
        return StepResult(elapsed, self.battery, died, done, mean_bt, mean_drop)


def sample_context(device: SimulatedDevice, t: int) -> ContextVector:
    return device.sample_context(t)


def step_training(device: SimulatedDevice, batches: int) -> StepResult:
    return device.step_training(batches)


def build_devices(fleet: FleetConfig | Iterable[DeviceProfile], seed: int = 0) -> List[SimulatedDevice]:
    profiles = fleet.profiles if isinstance(fleet, FleetConfig) else list(fleet)
    return [SimulatedDevice(p, seed) for p in profiles]


TRAJECTORY_COLUMNS = ["round", "device", *CONTEXT_FIELDS, "batch_time", "battery_drop", "died"]


def dump_trajectory(
    devices: Sequence[SimulatedDevice], rounds: int, path: str | os.PathLike, batches_per_round: int = 0
) -> None:
    """Write a golden trajectory: per round and device, context and realized cost."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRAJECTORY_COLUMNS)
        for t in range(rounds):
            for dev in devices:
                dev.begin_round(t)
                if not dev.alive:
                    continue
                c = dev.sample_context(t)
                if batches_per_round:
                    res = dev.step_training(batches_per_round, c)
                    bt, drop, died = res.mean_batch_time, res.mean_battery_drop, res.died
                else:
                    cost = true_cost(dev.profile, c)
                    bt, drop, died = cost.batch_time, cost.battery_drop, False
                writer.writerow(
                    [t, dev.device_id, *(f"{getattr(c, f):.6g}" for f in CONTEXT_FIELDS), f"{bt:.6g}", f"{drop:.6g}", int(died)]
                )

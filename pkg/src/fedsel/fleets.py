"""Built-in fleets.

``table1`` mirrors the four-phone roster used for the bandit experiments:
two identical fast phones of different ages, one old slow phone with a
steep low-battery penalty, one mid-range phone. The scenario fleets pin
noise-free per-batch times of 430/233 s and 233/132 s.
"""

from __future__ import annotations

from typing import Dict, Tuple

from .devices import DeviceProfile, FleetConfig


def table1_fleet() -> FleetConfig:
    common = dict(plug_in_below=15.0, charge_rate=35.0)
    return FleetConfig(
        profiles=[
            DeviceProfile(
                device_id="oneplus7t-1", base_batch_time=120.0, base_battery_drop=0.8, age_factor=1.0,
                total_ram=8.0, benchmark_score=480_000, ram_sensitivity=0.4, cpu_sensitivity=0.3,
                low_battery_penalty=1.3, battery=90.0, dialect=-0.6, rng_seed=1, **common,
            ),
            DeviceProfile(
                device_id="oneplus7t-2", base_batch_time=120.0, base_battery_drop=0.8, age_factor=1.35,
                total_ram=8.0, benchmark_score=480_000, ram_sensitivity=0.4, cpu_sensitivity=0.3,
                low_battery_penalty=1.3, battery=70.0, dialect=-0.2, rng_seed=2, **common,
            ),
            DeviceProfile(
                device_id="oneplus5t", base_batch_time=300.0, base_battery_drop=1.1, age_factor=1.3,
                total_ram=6.0, benchmark_score=270_000, ram_sensitivity=0.9, cpu_sensitivity=0.5,
                low_battery_penalty=2.4, battery=60.0, dialect=0.2, rng_seed=3, **common,
            ),
            DeviceProfile(
                device_id="xiaomi11pro", base_batch_time=190.0, base_battery_drop=0.9, age_factor=1.0,
                total_ram=8.0, benchmark_score=350_000, ram_sensitivity=0.6, cpu_sensitivity=0.4,
                low_battery_penalty=1.8, battery=100.0, dialect=0.6, rng_seed=4, **common,
            ),
        ]
    )


def _fixed(device_id: str, batch_time: float, drop: float, battery: float, charging: bool, **kw) -> DeviceProfile:
    return DeviceProfile(
        device_id=device_id, base_batch_time=batch_time, base_battery_drop=drop, battery=battery,
        charging=charging, charging_offset=0.0, ram_sensitivity=0.0, cpu_sensitivity=0.0,
        noise_sigma=0.0, load_step=0.0, **kw,
    )


def scenario_fleet(scenario: int) -> FleetConfig:
    if scenario == 1:
        return FleetConfig(
            profiles=[
                _fixed("client1", 430.0, 1.7, 100.0, True, total_ram=6.0, benchmark_score=270_000,
                       low_battery_penalty=2.4, dialect=-0.5),
                _fixed("client2", 233.0, 1.7, 100.0, True, total_ram=8.0, benchmark_score=350_000,
                       dialect=0.5),
            ]
        )
    if scenario == 2:
        return FleetConfig(
            profiles=[
                _fixed("client1", 233.0, 2.2, 60.0, False, total_ram=8.0, benchmark_score=350_000,
                       dialect=-0.5),
                _fixed("client2", 132.0, 1.58, 100.0, False, total_ram=8.0, benchmark_score=480_000,
                       dialect=0.5),
            ]
        )
    raise ValueError(f"unknown scenario {scenario}")


# frozen (batch_time_hat, battery_drop_hat) per client, as printed in the evaluation table
SCENARIO_ESTIMATES: Dict[int, Dict[str, Tuple[float, float]]] = {
    1: {"client1": (431.93, 1.72), "client2": (251.25, 1.72)},
    2: {"client1": (251.25, 2.2), "client2": (130.36, 1.58)},
}


def scenario1_like_fleet() -> FleetConfig:
    """Two slow and two fast phones with live background load."""
    common = dict(plug_in_below=60.0, charge_rate=50.0, noise_sigma=0.02)
    return FleetConfig(
        profiles=[
            DeviceProfile(device_id="slow-a", base_batch_time=330.0, base_battery_drop=0.9, age_factor=1.0,
                          total_ram=6.0, benchmark_score=270_000, dialect=-0.7, rng_seed=11, **common),
            DeviceProfile(device_id="slow-b", base_batch_time=300.0, base_battery_drop=0.9, age_factor=1.15,
                          total_ram=6.0, benchmark_score=270_000, dialect=-0.2, rng_seed=12, **common),
            DeviceProfile(device_id="fast-a", base_batch_time=180.0, base_battery_drop=0.8, age_factor=1.0,
                          total_ram=8.0, benchmark_score=350_000, dialect=0.2, rng_seed=13, **common),
            DeviceProfile(device_id="fast-b", base_batch_time=170.0, base_battery_drop=0.8, age_factor=1.1,
                          total_ram=8.0, benchmark_score=350_000, dialect=0.7, rng_seed=14, **common),
        ]
    )


def pool_fleet(n: int = 10) -> FleetConfig:
    """Pool of readily available clients with spread-out dialects."""
    profiles = []
    for i in range(n):
        dialect = -1.0 + 2.0 * i / max(n - 1, 1)
        profiles.append(
            DeviceProfile(
                device_id=f"client{i:02d}", base_batch_time=120.0 + 40.0 * (i % 4), base_battery_drop=0.4,
                age_factor=1.0 + 0.1 * (i % 3), total_ram=6.0 + 2.0 * (i % 2), benchmark_score=300_000 + 30_000 * (i % 5),
                plug_in_below=30.0, dialect=round(dialect, 6), rng_seed=100 + i,
            )
        )
    return FleetConfig(profiles=profiles)


BUILTIN_FLEETS = {
    "table1": table1_fleet,
    "scenario1": lambda: scenario_fleet(1),
    "scenario2": lambda: scenario_fleet(2),
    "scenario1_like": scenario1_like_fleet,
    "pool10": lambda: pool_fleet(10),
}


def get_fleet(name: str) -> FleetConfig:
    try:
        return BUILTIN_FLEETS[name]()
    except KeyError:
        raise ValueError(f"unknown built-in fleet {name!r}; choose from {sorted(BUILTIN_FLEETS)}") from None

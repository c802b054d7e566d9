import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedsel.devices import (
    ContextVector,
    DeviceProfile,
    DeviceUnavailable,
    FleetConfig,
    SimulatedDevice,
    battery_factor,
    dump_trajectory,
    load_fleet,
    save_fleet,
    true_cost,
)
from fedsel.fleets import BUILTIN_FLEETS, get_fleet


def _profile(**kw):
    base = dict(device_id="d", base_batch_time=100.0, base_battery_drop=1.0, noise_sigma=0.0)
    base.update(kw)
    return DeviceProfile(**base)


def test_all_factors_one_gives_base_time():
    p = _profile(total_ram=8.0)
    c = ContextVector(TR=8.0, AR=8.0, AC=100.0, BS=0, CI=0.0, PI=400_000.0)
    assert true_cost(p, c).batch_time == 100.0


def test_hand_computed_cost(ctx):
    # ram: 1 + 0.5*(1 - 4/8) = 1.25, battery 1, cpu: 1 + 0.3*0.30 = 1.09
    p = _profile()
    assert true_cost(p, ctx).batch_time == pytest.approx(100.0 * 1.25 * 1.09)
    assert true_cost(p, ctx).battery_drop == 1.0


def test_low_battery_ratio_matches_penalty():
    p = _profile(total_ram=6.0, low_battery_penalty=2.4)
    hi = ContextVector(6.0, 3.0, 80.0, 0, 20.0, 270_000.0)
    lo = ContextVector(6.0, 3.0, 15.0, 0, 20.0, 270_000.0)
    assert true_cost(p, lo).batch_time / true_cost(p, hi).batch_time == pytest.approx(2.4, abs=0.05)


def test_battery_factor_ramp():
    p = _profile(low_battery_penalty=1.5)
    assert battery_factor(p, 20.0) == 1.0
    assert battery_factor(p, 17.5) == pytest.approx(1.25)
    assert battery_factor(p, 15.0) == pytest.approx(1.5)
    assert battery_factor(p, 2.0) == pytest.approx(1.5)


def test_halving_available_ram_slows_down():
    p = _profile()
    full = ContextVector(8.0, 6.0, 80.0, 0, 10.0, 4e5)
    half = ContextVector(8.0, 3.0, 80.0, 0, 10.0, 4e5)
    assert true_cost(p, half).batch_time > true_cost(p, full).batch_time


@settings(max_examples=200, deadline=None)
@given(
    st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.floats(0.0, 100.0), st.floats(0.0, 100.0),
    st.floats(0.0, 100.0), st.floats(0.0, 100.0), st.floats(1.0, 2.0), st.floats(1.0, 2.0),
)
def test_cost_monotonicity(ar1, ar2, ci1, ci2, ac1, ac2, age1, age2):
    p = _profile(low_battery_penalty=2.0)
    lo_ar, hi_ar = sorted((ar1, ar2))
    lo_ci, hi_ci = sorted((ci1, ci2))
    lo_ac, hi_ac = sorted((ac1, ac2))
    ctx = lambda ar, ac, ci: ContextVector(8.0, 8.0 * ar, ac, 0, ci, 4e5)
    assert true_cost(p, ctx(lo_ar, 50, 10)).batch_time >= true_cost(p, ctx(hi_ar, 50, 10)).batch_time
    assert true_cost(p, ctx(0.5, 50, hi_ci)).batch_time >= true_cost(p, ctx(0.5, 50, lo_ci)).batch_time
    assert true_cost(p, ctx(0.5, lo_ac, 10)).batch_time >= true_cost(p, ctx(0.5, hi_ac, 10)).batch_time
    a, b = sorted((age1, age2))
    c = ctx(0.5, 50, 10)
    assert true_cost(_profile(age_factor=b), c).battery_drop >= true_cost(_profile(age_factor=a), c).battery_drop


def test_idle_context_golden():
    p = _profile(total_ram=6.0, battery=80.0, initial_load=0.0, load_step=0.0)
    c = SimulatedDevice(p, seed=3).sample_context(4)
    assert c.TR == 6.0 and c.AR == pytest.approx(3.6) and c.CI == pytest.approx(5.0)
    assert c.AC == 80.0 and c.BS == 0 and c.PI == p.benchmark_score


def test_dead_device_is_unavailable():
    dev = SimulatedDevice(_profile(battery=0.0))
    with pytest.raises(DeviceUnavailable):
        dev.sample_context(0)


def test_context_is_deterministic():
    p = get_fleet("table1").profiles[2]
    a = [SimulatedDevice(p, 9).sample_context(t) for t in range(5)]
    d = SimulatedDevice(p, 9)
    assert a == [d.sample_context(t) for t in range(5)]


def test_zero_batches_is_noop():
    dev = SimulatedDevice(_profile(battery=50.0))
    elapsed, battery, died = dev.step_training(0)
    assert (elapsed, battery, died) == (0.0, 50.0, False)


def test_battery_death_schedule():
    # 5 -> 3 -> 1, the third batch needs 2 with 1 left: dies partway through it
    p = _profile(battery=5.0, base_battery_drop=2.0, total_ram=8.0, cpu_sensitivity=0.0, ram_sensitivity=0.0)
    dev = SimulatedDevice(p)
    c = ContextVector(8.0, 8.0, 5.0, 0, 0.0, 4e5)
    res = dev.step_training(10, c)
    assert res.died and res.batches_done == 2 and res.battery == 0.0
    full = true_cost(p, c).batch_time
    assert res.elapsed == pytest.approx(2.5 * full)
    assert not dev.alive


def test_charging_device_does_not_drain():
    dev = SimulatedDevice(_profile(battery=40.0, charging=True, charging_offset=1.0))
    c = dev.sample_context(0)
    assert c.BS == 1
    res = dev.step_training(20, c)
    assert res.battery >= 40.0 and not res.died


@settings(max_examples=100, deadline=None)
@given(st.floats(0.1, 100.0), st.floats(0.05, 5.0), st.integers(0, 200))
def test_battery_stays_in_range(battery, drop, batches):
    dev = SimulatedDevice(_profile(battery=battery, base_battery_drop=drop))
    res = dev.step_training(batches, dev.sample_context(0))
    assert 0.0 <= res.battery <= 100.0


def test_trajectory_is_reproducible(tmp_path):
    fleet = get_fleet("table1")
    for name in ("a.csv", "b.csv"):
        from fedsel.devices import build_devices

        dump_trajectory(build_devices(fleet, seed=2), 30, tmp_path / name, batches_per_round=10)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_context_validation():
    with pytest.raises(ValueError):
        ContextVector(4.0, 5.0, 50.0, 0, 10.0, 1.0)
    with pytest.raises(ValueError):
        ContextVector(4.0, 2.0, 50.0, 2, 10.0, 1.0)


def test_fleet_json_roundtrip(tmp_path):
    fleet = get_fleet("table1")
    save_fleet(fleet, tmp_path / "f.json")
    assert load_fleet(tmp_path / "f.json") == fleet


def test_fleet_rejects_duplicate_ids():
    with pytest.raises(ValueError):
        FleetConfig(profiles=[_profile(), _profile()])


@pytest.mark.parametrize("name", sorted(BUILTIN_FLEETS))
def test_builtin_fleets_build(name):
    assert len(get_fleet(name).profiles) >= 2


def test_scenario_fleet_true_batch_times():
    for name, expected in (("scenario1", (430.0, 233.0)), ("scenario2", (233.0, 132.0))):
        devs = [SimulatedDevice(p) for p in get_fleet(name).profiles]
        times = tuple(true_cost(d.profile, d.sample_context(1)).batch_time for d in devs)
        assert times == pytest.approx(expected)

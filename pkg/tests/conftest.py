import numpy as np
import pytest

from fedsel.devices import ContextVector, DeviceProfile


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def ctx():
    return ContextVector(TR=8.0, AR=4.0, AC=80.0, BS=0, CI=30.0, PI=400_000.0)


@pytest.fixture
def quiet_profile():
    """Noise-free device whose factors are all 1 at full RAM, full battery, idle CPU."""
    return DeviceProfile(
        device_id="dev", base_batch_time=100.0, base_battery_drop=1.0, total_ram=8.0,
        benchmark_score=400_000, noise_sigma=0.0,
    )


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

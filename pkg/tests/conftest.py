import numpy as np
import pytest
from hypothesis import settings

from gmtrust.simnet import CollaborationRecord, Dataset, Device, DeviceProfile

settings.register_profile("default", max_examples=50, deadline=None)
settings.load_profile("default")


def make_device(i, cpu=2e9, pos=(0.0, 0.0), profile=None):
    return Device(i, cpu, 0.1, pos, profile or DeviceProfile("stable", 1.0, 0.0, 0.0))


def separable_dataset(n_slots=4, slot_len=100.0):
    """10 devices all collaborating each slot; trustees 0-4 always succeed, 5-9 always fail."""
    devices = tuple(make_device(i) for i in range(10))
    records = []
    for s in range(n_slots):
        for i in range(10):
            for j in range(10):
                if i != j:
                    good = j < 5
                    t = s * slot_len + 1.0 + i * 0.1 + j * 0.01
                    records.append(CollaborationRecord(i, j, t, 0.0 if good else 1.0, 1 if good else 0))
    return Dataset(devices, tuple(records), n_slots * slot_len, 0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def toy_dataset():
    return separable_dataset()


# acceptance criteria record one line each; printed in the terminal summary
ACCEPTANCE: dict[int, str] = {}


def report(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])

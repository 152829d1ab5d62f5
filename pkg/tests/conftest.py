import numpy as np
import pytest
from hypothesis import HealthCheck, settings


settings.register_profile("default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")



@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_MEASURED = []


@pytest.fixture
def report():
    """Record a measured value; all records are printed at the end of the run."""

    def add(criterion, text):
        _MEASURED.append(f"[{criterion}] {text}")

    return add


def pytest_terminal_summary(terminalreporter):
    if _MEASURED:
        terminalreporter.section("measured values")
        for line in _MEASURED:
            terminalreporter.write_line(line)

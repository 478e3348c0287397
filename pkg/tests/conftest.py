from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def keys1k() -> np.ndarray:
    """1,000 sparse keys with uneven gaps."""
    rng = np.random.default_rng(12345)
    return np.unique(rng.integers(0, 50_000, 1_400).astype(np.uint64))[:1000]


@pytest.fixture(scope="session")
def example_keys() -> np.ndarray:
    return np.array([1, 2, 6, 7, 11, 12], dtype=np.uint64)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)

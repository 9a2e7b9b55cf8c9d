import sys
import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("mimest", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("mimest")

from mimest.ndmath import tune_allocator  # noqa: E402

tune_allocator()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

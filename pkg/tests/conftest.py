import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from driftwt import Rng

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=200, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return Rng(1234)


@pytest.fixture
def np_rng():
    return np.random.default_rng(99)


_CRITERIA = {}


@pytest.fixture
def criterion(request):
    """Record one pass/fail line for an acceptance criterion: criterion(ok, detail)."""
    name = request.node.name

    def record(ok, detail):
        line = f"{name}: {'PASS' if ok else 'FAIL'} | {detail}"
        _CRITERIA[name] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for name in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[name])

import warnings

import pytest
from hypothesis import HealthCheck, settings

from sllnlab.moments import HeavyTailWarning

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(autouse=True)
def _quiet_heavy_tails():
    # heavy-tail warnings are asserted explicitly where they matter
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", HeavyTailWarning)
        yield


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_LINES = pytest.StashKey[list]()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def criterion(request, capsys):
    """``criterion(label, ok, detail)`` prints one PASS/FAIL line now and again
    in the terminal summary."""

    def report(label, ok, detail):
        line = f"{label}: {'PASS' if ok else 'FAIL'} - {detail}"
        request.config.stash.setdefault(_LINES, []).append(line)
        with capsys.disabled():
            print(f"\n{line}")
        return ok

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

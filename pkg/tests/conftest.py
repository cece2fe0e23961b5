import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from jumpgame.problem import load_scenario

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def scenarios():
    names = ("zero_dynamics", "separated_drift", "bilinear_gap", "jump_heavy", "driver_coupled")
    return {n: load_scenario(n) for n in names}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import VERDICTS
    except ImportError:
        return
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for key in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[key])

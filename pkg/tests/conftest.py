import numpy as np
import pytest

from uiprice import cases


@pytest.fixture
def bench():
    return cases.benchmark_model(), cases.benchmark_state(), cases.benchmark_payoff()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

import numpy as np
import pytest

from epivolt.covid import CovidScenario, build_covid_law
from epivolt.durations import Deterministic, Exponential
from epivolt.infectivity import make_law_constant


@pytest.fixture(scope="session")
def markov_law():
    """Constant infectivity 2 during an Exp(1) infectious period, no latency."""
    return make_law_constant(2.0, Deterministic(0.0), Exponential(1.0))


@pytest.fixture(scope="session")
def covid_law():
    return build_covid_law(CovidScenario(p_R=0.8, alpha=0.7))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line for an acceptance criterion."""

    def record(number, name, ok, detail):
        line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {name}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)

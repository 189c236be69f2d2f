import hypothesis
import pytest

from dsaft.annealing import AnnealParams, calibrated_params
from dsaft.problems import Skewed1dProblem, TspInstance, TspProblem, random_tsp

hypothesis.settings.register_profile("default", max_examples=60, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.load_profile("default")

# frozen oracle values (computed with mpmath / exhaustive enumeration outside the package)
TSP7_OPTIMUM = 2.2429407788054756


@pytest.fixture
def tsp7():
    return TspProblem(random_tsp(8, 7))


@pytest.fixture
def square():
    return TspProblem(TspInstance(((0, 0), (0, 1), (1, 1), (1, 0))))


@pytest.fixture
def skewed():
    return Skewed1dProblem()


@pytest.fixture
def skewed_params(skewed):
    return calibrated_params(skewed, 0, steps_per_temperature=10)


@pytest.fixture
def simple_params():
    return AnnealParams(t0=10.0, t_low=0.01, steps_per_temperature=5)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

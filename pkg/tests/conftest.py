import pytest

from acceptance_report import LINES

import certibound as cb


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def toy_problem():
    return cb.toy_1d()


@pytest.fixture(scope="session")
def toy_oracle(toy_problem):
    return cb.oracle_integrate(toy_problem)


@pytest.fixture(scope="session")
def toy_lambda4(toy_problem):
    """The toy tree after four full refinement levels, with its bounds."""
    tree = cb.refine_full(cb.toy_1d(), 4)[4].tree
    bounds = cb.deterministic_bounds(tree, toy_problem.measure)
    return tree, bounds

import numpy as np
import pytest

from pltrans.families import LinkFamily

B5D_FAMILIES = [
    LinkFamily("cloglog"),
    LinkFamily("logit"),
    LinkFamily("pareto", 0.5),
    LinkFamily("pareto", 1.0),
    LinkFamily("pareto", 2.0),
    LinkFamily("probit"),
    LinkFamily("gnorm", 1.5),
    LinkFamily("gnorm", 2.0),
    LinkFamily("gnorm", 3.0),
]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one "CRITERION k: PASS/FAIL ..." line per acceptance criterion, filled in by
# test_acceptance.py and echoed at the end of the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])

import numpy as np
import pytest

N_PROPERTY_CASES = 200

# filled by the acceptance module; echoed after the test summary so the
# per-criterion verdicts are visible without -s
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240901)


def random_vec(rng, dim=None, lo=1, hi=513):
    if dim is None:
        dim = int(rng.integers(lo, hi))
    return rng.normal(size=dim)

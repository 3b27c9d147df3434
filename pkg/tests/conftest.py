import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# One PASS/FAIL line per acceptance criterion, repeated in the terminal
# summary so it shows up even when output capture is on.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

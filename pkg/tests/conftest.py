import numpy as np
import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def unit_grid(n, d=2):
    """Regular grid of n points (n must be a d-th power) on the unit cube,
    cell-centered."""
    side = round(n ** (1.0 / d))
    assert side**d == n
    ax = (np.arange(side) + 0.5) / side
    mesh = np.meshgrid(*([ax] * d), indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def record_acceptance(line):
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

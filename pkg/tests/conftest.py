import numpy as np
import pytest

from renewal_dynamics.marks import make_distribution
from renewal_dynamics.population import MarkWindow
from renewal_dynamics.population import PointSample
from renewal_dynamics.tree import build_forest
from renewal_dynamics.verification import Context

GEOM = make_distribution("geometric:0.5")
TWOPOINT = make_distribution("twopoint:0.5,2")


@pytest.fixture(scope="session")
def geom_ctx():
    """Geometric(0.5) window of 10^6 with the default burn-in."""
    return Context(GEOM, 1_000_000, 1e-9, 7)


@pytest.fixture(scope="session")
def twopoint_ctx():
    return Context(TWOPOINT, 1_000_000, 1e-9, 7, "twopoint")


@pytest.fixture
def toy_window():
    return MarkWindow.from_marks([2, 1, 3, 1, 1, 2, 1], L=0)


@pytest.fixture
def toy_forest(toy_window):
    anchor = PointSample(atoms=np.array([2]), lo=0, hi=6, label="original-ancestor")
    return build_forest(toy_window, anchor, B=0)


def crossing_count(marks, L=0):
    """nhat by direct enumeration of lifespans crossing each n."""
    marks = list(marks)
    out = []
    for i in range(len(marks)):
        out.append(1 + sum(1 for j in range(i) if j + marks[j] > i))
    return np.array(out)


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(test_acceptance.LINES):
            terminalreporter.write_line(test_acceptance.LINES[number])

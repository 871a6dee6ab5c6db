import pytest

from adasub.core import IndependentPrior
from adasub.objectives import CoverageObjective, cut_instance, make_instance
from adasub.verify import load_fixture


@pytest.fixture
def sensor1():
    return load_fixture("sensor1")


@pytest.fixture
def triangle():
    return load_fixture("cut_triangle")


@pytest.fixture
def mixed4():
    return load_fixture("mixed4")


def coverage_toy(covers, p_normal, n_targets=None):
    """Two-state sensors; ``covers[e]`` is what sensor ``e`` covers when normal."""
    n_targets = n_targets if n_targets is not None else 1 + max((t for c in covers for t in c), default=0)
    obj = CoverageObjective(n_targets, tuple(((), tuple(c)) for c in covers))
    return make_instance(IndependentPrior.bernoulli(list(p_normal)), obj, name="toy")


def unit_triangle(p=0.5):
    return cut_instance(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)], p)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)

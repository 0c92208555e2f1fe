import numpy as np
import pytest

from frechet_spc.curves import SampledCurve, TimeGrid


@pytest.fixture
def grid():
    return TimeGrid(101)


@pytest.fixture
def sine(grid):
    return SampledCurve.from_function(lambda t: np.sin(2 * np.pi * t) + 2.0, grid)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def identity_curve(m=11):
    g = TimeGrid(m)
    return SampledCurve(g, g.points)


ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """Record one verdict line per acceptance criterion for the run summary."""

    def record(number, title, ok, detail):
        ACCEPTANCE.append((number, title, bool(ok), detail))
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}  [{detail}]")

import pytest

from pxbound.fem import manufactured_problem, solve
from pxbound.mesh import Interval, Rectangle, generate_mesh


@pytest.fixture(scope="session")
def unit_interval():
    return generate_mesh(Interval(0.0, 1.0), 1 / 64)


@pytest.fixture(scope="session")
def unit_square():
    return generate_mesh(Rectangle(0.0, 1.0, 0.0, 1.0), 1 / 8)


@pytest.fixture(scope="session")
def p2_problem(unit_interval):
    """Manufactured p = 2 problem with exact solution 1 + x(1 - x)."""
    prob, data = manufactured_problem(unit_interval, "2", "2", "2", 2, "1 + x*(1 - x)")
    return prob, data, solve(prob)


@pytest.fixture(scope="session")
def variable_1d_problem():
    mesh = generate_mesh(Interval(0.0, 1.0), 1 / 256)
    prob, data = manufactured_problem(mesh, "2 + x/2", "2 + x/2", "2 + x/2", 2, "1 + x*(1 - x)")
    return prob, data, solve(prob)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

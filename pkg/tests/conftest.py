import pytest
from hypothesis import HealthCheck, settings

from lhy_lab import coefficients, scattering

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def well():
    return scattering.Potential.square_well(2.0, 1.0)


@pytest.fixture(scope="session")
def solution_1e4(well):
    return scattering.solve_neumann(well, 0.4, 1e4, 0.55)


@pytest.fixture(scope="session")
def table_1e4(solution_1e4):
    part = coefficients.MomentumPartition(1e4, 0.55, 0.01)
    return coefficients.build_table(solution_1e4, part)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

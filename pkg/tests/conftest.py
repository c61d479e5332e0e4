import pytest

from sigma_collapse.grid import RadialGrid


@pytest.fixture(scope="session")
def default_grid():
    """Two-zone grid used for the soliton checks: h_in = 0.001 up to r = 2, out to R = 40."""
    return RadialGrid.two_zone(8001, 0.001, 2.0, 40.0)


@pytest.fixture(scope="session")
def small_grid():
    return RadialGrid.two_zone(1201, 0.01, 4.0, 30.0)

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nldiff.kernel import discretize, make_kernel
from nldiff.lattice import build_grid, build_mask, parse_holes

settings.register_profile("nldiff", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow,
                                                 HealthCheck.function_scoped_fixture])
settings.load_profile("nldiff")

# criterion number -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def bump():
    return make_kernel("smooth_bump", 1.0, 3)


@pytest.fixture(scope="session")
def small(bump):
    """17^3 box of half-width 3, h = 0.375, no holes."""
    grid = build_grid(3, 17, 3.0)
    return grid, discretize(bump, grid), build_mask(parse_holes([]), grid, 1.0)


@pytest.fixture(scope="session")
def oracle_setup(bump):
    """11^3 box of half-width 2.2 with a single hole node at the origin."""
    grid = build_grid(3, 11, 2.2, min_points=3)
    dk = discretize(bump, grid)
    mask = build_mask(parse_holes([{"shape": "ball", "center": (0, 0, 0), "size": 0.1}]), grid, 1.0)
    u0 = np.where(mask.hole, 0.0, np.random.default_rng(0).random(grid.shape))
    return grid, dk, mask, u0


@pytest.fixture(scope="session")
def ball_setup(bump):
    """33^3 box of half-width 6 with a ball hole of radius 1."""
    grid = build_grid(3, 33, 6.0)
    dk = discretize(bump, grid)
    mask = build_mask(parse_holes([{"shape": "ball", "center": (0, 0, 0), "size": 1.0}]), grid, 1.0)
    return grid, dk, mask


@pytest.fixture(scope="session")
def shell_setup(bump):
    """45^3 box with a shell hole 3 < |x| < 5 enclosing a cavity."""
    grid = build_grid(3, 45, 8.25)
    dk = discretize(bump, grid)
    mask = build_mask(parse_holes([{"shape": "shell", "center": (0, 0, 0), "size": (3.0, 5.0)}]),
                      grid, 1.0)
    return grid, dk, mask

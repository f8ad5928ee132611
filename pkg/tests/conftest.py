import numpy as np
import pytest

from spwells.coulomb import CoulombSolver
from spwells.functionals import make_context
from spwells.grid import build_grid
from spwells.model import ModelParams
from spwells.wells import build_geometry

# filled by test_acceptance.py, echoed at the end of the session
ACCEPTANCE_LINES: dict[int, str] = {}

STANDARD_WELLS = [((-3.5, 0.0, 0.0), 1.5), ((3.5, 0.0, 0.0), 1.5)]


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_grid():
    return build_grid(16, 4.0)


@pytest.fixture(scope="session")
def small_geometry():
    return build_geometry([((-2.0, 0.0, 0.0), 1.2), ((2.0, 0.0, 0.0), 1.2)], margin=0.5, ramp_width=0.5)


@pytest.fixture(scope="session")
def small_ctx(small_grid, small_geometry):
    """16^3 two-well context with both wells selected and lambda = 10."""
    return make_context(small_grid, small_geometry, ModelParams(lam=10.0), (0, 1), CoulombSolver(small_grid))


@pytest.fixture(scope="session")
def standard_ctx():
    """The 48^3, L = 8 reference configuration with Υ = {0}."""
    grid = build_grid(48, 8.0)
    geometry = build_geometry(STANDARD_WELLS, margin=0.5, a_max=1.0, ramp_width=0.5)
    return make_context(grid, geometry, ModelParams(q=4.0, delta=0.5, lam=1.0), (0,))


@pytest.fixture(scope="session")
def standard_limits(standard_ctx):
    """Limit minimizers for Υ = {0}, {1}, {0, 1} on the reference configuration."""
    from spwells.nehari import minimize_limit
    from spwells.solver import initial_guess

    out = {}
    for ups in [(0,), (1,), (0, 1)]:
        ctx = standard_ctx.with_upsilon(ups)
        out[ups] = minimize_limit(ups, ctx, initial_guess(ups, ctx))
    return out

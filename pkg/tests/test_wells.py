import numpy as np
import pytest

from spwells.grid import build_grid
from spwells.wells import (
    Ball,
    GeometryError,
    build_geometry,
    distance_to_wells,
    masks,
    sample_potential,
    validate_upsilon,
)


def test_two_unit_balls_accepted():
    g = build_geometry([((-2.5, 0, 0), 1.0), ((2.5, 0, 0), 1.0)], margin=0.5)
    assert g.k == 2
    assert g.wells[0] == Ball((-2.5, 0.0, 0.0), 1.0)


def test_touching_wells_rejected():
    with pytest.raises(GeometryError, match="wells 0 and 1"):
        build_geometry([((-1, 0, 0), 1.0), ((1, 0, 0), 1.0)])


def test_touching_enlargements_rejected():
    with pytest.raises(GeometryError, match="enlarged wells 1 and 2"):
        build_geometry([((-10, 0, 0), 1.0), ((0, 0, 0), 1.0), ((2.9, 0, 0), 1.0)], margin=0.5)


def test_single_ball():
    assert build_geometry([((0, 0, 0), 1.0)]).k == 1


def test_dict_wells_and_bad_inputs():
    g = build_geometry([{"center": [0, 0, 0], "radius": 2}])
    assert g.wells[0].radius == 2.0
    with pytest.raises(GeometryError):
        build_geometry([])
    with pytest.raises(GeometryError):
        build_geometry([((0, 0), 1.0)])
    with pytest.raises(GeometryError):
        build_geometry([((0, 0, 0), -1.0)])
    with pytest.raises(GeometryError):
        build_geometry([((0, 0, 0), 1.0)], margin=0.0)


def test_upsilon_validation():
    assert validate_upsilon([1, 0, 1], 2) == (0, 1)
    with pytest.raises(GeometryError, match="non-empty subset Υ"):
        validate_upsilon([], 2)
    with pytest.raises(GeometryError, match="out of range"):
        validate_upsilon([2], 2)


@pytest.fixture(scope="module")
def setup():
    grid = build_grid(33, 4.0)
    geom = build_geometry([((-2.0, 0, 0), 1.0), ((2.0, 0, 0), 1.0)], margin=0.5, a_max=2.0, ramp_width=0.75)
    return grid, geom


def test_potential_properties(setup):
    grid, geom = setup
    a = sample_potential(geom, grid)
    wm = masks(geom, grid, (0, 1))
    assert np.all(a >= 0)
    assert np.all(a[wm.omega_ups] == 0)
    far = distance_to_wells(geom, grid) >= geom.ramp_width
    assert np.all(a[far] == geom.a_max)
    outside_closed = distance_to_wells(geom, grid) > 0
    assert np.all(a[outside_closed] > 0)


def test_potential_zero_at_center():
    grid = build_grid(9, 4.0)
    geom = build_geometry([((0, 0, 0), 1.0)])
    a = sample_potential(geom, grid)
    assert a[4, 4, 4] == 0.0


def test_potential_monotone_along_ray():
    # dense 1D sampling oracle: a single-point grid line through the well
    geom = build_geometry([((0, 0, 0), 1.0)], a_max=3.0, ramp_width=0.5)
    s = np.linspace(0.0, 2.0, 2001)
    d = np.maximum(s - 1.0, 0.0)
    ref = geom.a_max * np.minimum(1.0, d / geom.ramp_width)
    assert np.all(np.diff(ref) >= 0)
    grid = build_grid(41, 2.0)
    a = sample_potential(geom, grid)
    line = a[20, 20, 20:]
    assert line[0] == 0.0
    assert np.all(np.diff(line) >= 0)
    assert np.allclose(line, np.interp(grid.axis[20:], s, ref), atol=1e-12)


def test_masks_structure(setup):
    grid, geom = setup
    wm = masks(geom, grid, (0, 1))
    for om, omp in zip(wm.omega, wm.omega_prime):
        assert not np.any(om & ~omp)
    assert not np.any(wm.omega_prime[0] & wm.omega_prime[1])
    assert np.all(wm.chi * (1 - wm.chi) == 0)
    assert np.array_equal(wm.chi.astype(bool), wm.omega_prime_ups)


def test_single_selection_masks(setup):
    grid, geom = setup
    wm = masks(geom, grid, (1,))
    assert wm.upsilon == (1,)
    assert np.array_equal(wm.omega_ups, wm.omega[1])
    assert not np.any(wm.chi[wm.omega_prime[0]])

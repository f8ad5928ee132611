"""Potential wells: balls where a(x) vanishes, their enlargements, and masks."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .grid import Grid3


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Ball:
    center: tuple[float, float, float]
    radius: float


@dataclass(frozen=True)
class WellGeometry:
    wells: tuple[Ball, ...]
    margin: float = 0.5
    a_max: float = 1.0
    ramp_width: float = 0.5

    @property
    def k(self) -> int:
        return len(self.wells)


def build_geometry(wells, margin=0.5, a_max=1.0, ramp_width=0.5) -> WellGeometry:
    """Validate a list of balls (``Ball`` or ``(center, radius)``) and margins.

    Rejects touching wells and touching enlargements, naming the pair by
    0-based well index.
    """
    balls = []
    for w in wells:
        if isinstance(w, Ball):
            b = w
        elif isinstance(w, dict):
            b = Ball(tuple(float(c) for c in w["center"]), float(w["radius"]))
        else:
            center, radius = w
            b = Ball(tuple(float(c) for c in center), float(radius))
        if len(b.center) != 3:
            raise GeometryError(f"well center must have 3 coordinates, got {b.center}")
        if not b.radius > 0:
            raise GeometryError(f"well radius must be positive, got {b.radius}")
        balls.append(b)
    if not balls:
        raise GeometryError("at least one well is required")
    if not margin > 0:
        raise GeometryError(f"enlargement margin must be positive, got {margin}")
    if not a_max > 0 or not ramp_width > 0:
        raise GeometryError("a_max and ramp_width must be positive")

    for (i, bi), (j, bj) in combinations(enumerate(balls), 2):
        d = float(np.linalg.norm(np.subtract(bi.center, bj.center)))
        if d <= bi.radius + bj.radius:
            raise GeometryError(f"wells {i} and {j} overlap or touch (center distance {d:g})")
        if d <= bi.radius + bj.radius + 2 * margin:
            raise GeometryError(
                f"enlarged wells {i} and {j} overlap or touch (center distance {d:g}, margin {margin:g})"
            )
    return WellGeometry(tuple(balls), float(margin), float(a_max), float(ramp_width))


def validate_upsilon(upsilon, k: int) -> tuple[int, ...]:
    ups = tuple(sorted(set(int(j) for j in upsilon)))
    if not ups:
        raise GeometryError("upsilon must be a non-empty subset Υ of the well indices")
    bad = [j for j in ups if j < 0 or j >= k]
    if bad:
        raise GeometryError(f"upsilon indices {bad} out of range for k={k} wells")
    return ups


def _center_distances(geom: WellGeometry, grid: Grid3) -> list[np.ndarray]:
    x, y, z = grid.mesh()
    return [np.sqrt((x - b.center[0]) ** 2 + (y - b.center[1]) ** 2 + (z - b.center[2]) ** 2) for b in geom.wells]


def distance_to_wells(geom: WellGeometry, grid: Grid3) -> np.ndarray:
    """Distance from each grid point to the union of closed well balls."""
    dists = [np.maximum(r - b.radius, 0.0) for r, b in zip(_center_distances(geom, grid), geom.wells)]
    return np.minimum.reduce(dists)


def sample_potential(geom: WellGeometry, grid: Grid3) -> np.ndarray:
    """a(x) = a_max * min(1, d / ramp_width), d the distance to the wells."""
    d = distance_to_wells(geom, grid)
    return geom.a_max * np.minimum(1.0, d / geom.ramp_width)


@dataclass(frozen=True)
class WellMasks:
    omega: tuple[np.ndarray, ...]
    omega_prime: tuple[np.ndarray, ...]
    omega_ups: np.ndarray
    omega_prime_ups: np.ndarray
    chi: np.ndarray
    upsilon: tuple[int, ...]


def masks(geom: WellGeometry, grid: Grid3, upsilon) -> WellMasks:
    ups = validate_upsilon(upsilon, geom.k)
    rs = _center_distances(geom, grid)
    omega = tuple(r < b.radius for r, b in zip(rs, geom.wells))
    omega_p = tuple(r < b.radius + geom.margin for r, b in zip(rs, geom.wells))
    om_u = np.logical_or.reduce([omega[j] for j in ups])
    omp_u = np.logical_or.reduce([omega_p[j] for j in ups])
    return WellMasks(omega, omega_p, om_u, omp_u, omp_u.astype(np.float64), ups)

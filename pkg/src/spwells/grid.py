"""Uniform grid on the truncated box [-L, L]^3, quadrature and stencils.

Fields are ``(n, n, n)`` float arrays indexed ``[z, y, x]``; ``ravel()``
therefore yields the x-fastest lexicographic order used for dumps.
Integrals are node sums ``sum(f) * h**3`` over all ``n**3`` lattice points,
so the constant 1 on ``[-1, 1]^3`` with ``n = 17`` integrates to
``17**3 / 8**3 = 9.595703125`` rather than 8.

The Dirichlet energy is the edge sum ``sum_edges (u_i - u_j)**2 * h``,
including the edges to zero-valued ghosts just outside the box. Its exact
gradient is ``-apply_laplacian(u)``, which keeps energies and gradients
consistent to rounding.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _kernels


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid3:
    n: int
    L: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 8:
            raise GridError(f"grid too coarse: n={self.n} (need n >= 8)")
        if not self.L > 0:
            raise GridError(f"half-width must be positive, got L={self.L}")

    @property
    def h(self) -> float:
        return 2.0 * self.L / (self.n - 1)

    @property
    def cell_volume(self) -> float:
        return self.h**3

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @cached_property
    def axis(self) -> np.ndarray:
        # (i - (n-1)/2) * h is exactly antisymmetric, which keeps mirror
        # configurations bit-symmetric.
        return (np.arange(self.n) - 0.5 * (self.n - 1)) * self.h

    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Coordinate arrays ``(x, y, z)``, each of shape ``(n, n, n)``."""
        z, y, x = np.meshgrid(self.axis, self.axis, self.axis, indexing="ij")
        return x, y, z

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    @cached_property
    def interior(self) -> np.ndarray:
        """Mask of points off the outer boundary layer."""
        m = np.zeros(self.shape, dtype=bool)
        m[1:-1, 1:-1, 1:-1] = True
        return m

    def check(self, f, name="field") -> np.ndarray:
        f = np.asarray(f)
        if f.shape != self.shape:
            raise GridError(f"{name} has shape {f.shape}, grid expects {self.shape}")
        return f


def build_grid(n: int, L: float) -> Grid3:
    return Grid3(int(n) if int(n) == n else n, float(L))


def integrate(grid: Grid3, f, mask=None) -> float:
    f = grid.check(f)
    if mask is not None:
        mask = grid.check(mask, "mask")
        f = np.where(mask, f, 0.0)
    return float(np.sum(f) * grid.cell_volume)


def inner(grid: Grid3, u, v) -> float:
    """Discrete L2 inner product."""
    return float(np.vdot(grid.check(u), grid.check(v)) * grid.cell_volume)


def l2_norm(grid: Grid3, u, mask=None) -> float:
    u = grid.check(u)
    if mask is not None:
        u = np.where(mask, u, 0.0)
    return float(np.sqrt(np.vdot(u, u) * grid.cell_volume))


def grad_density(grid: Grid3, u) -> np.ndarray:
    """Pointwise |grad u|^2 whose node sum is the full edge energy."""
    return _kernels.grad_density(grid.check(u), grid.h)


def apply_laplacian(grid: Grid3, u) -> np.ndarray:
    """7-point Laplacian with zero ghost values outside the box."""
    return _kernels.laplacian(grid.check(u), grid.h)


def norm_lambda(grid: Grid3, u, a=None, lam: float = 0.0, mask=None) -> float:
    """(int_O |grad u|^2 + (lam a + 1) u^2)^(1/2) over ``mask`` (whole box if None)."""
    if lam < 0:
        raise ValueError(f"lambda must be non-negative, got {lam}")
    u = grid.check(u)
    weight = 1.0
    if a is not None:
        a = grid.check(a, "potential")
        if np.any(a < 0):
            raise ValueError("potential a(x) has negative entries")
        weight = lam * a + 1.0
    dens = grad_density(grid, u) + weight * u * u
    return float(np.sqrt(integrate(grid, dens, mask)))

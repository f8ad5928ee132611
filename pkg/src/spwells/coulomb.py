"""Free-space potential phi_u solving -Laplace(phi) = u^2 on R^3.

Two kernels are available. ``"lattice"`` (default) is the Green function of
the 7-point Laplacian on the infinite lattice, so ``-apply_laplacian(phi)``
reproduces ``u**2`` to rounding and discrete Green identities hold exactly.
``"newton"`` samples 1/(4 pi |x|) and replaces the singular cell by the
analytic cell average. Both are applied by zero-padded FFT convolution
(2n per axis) and by an O(N^2) direct sum used as an oracle.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.fft as sfft
from scipy.special import ive

from . import _kernels
from .grid import Grid3, GridError

# integral of 1/|x| over the unit cube centred at the origin
CUBE_INV_R = 3.0 * np.log(2.0 + np.sqrt(3.0)) - 0.5 * np.pi
DIRECT_MAX_POINTS = 32**3


@lru_cache(maxsize=8)
def lattice_green(m: int) -> np.ndarray:
    """G[a, b, c] for 0 <= a, b, c < m, unit lattice spacing.

    Uses G(m) = int_0^inf prod_i exp(-2t) I_{m_i}(2t) dt, integrated with
    the trapezoid rule in log t plus the leading two asymptotic tail terms.
    """
    idx = np.arange(m)
    t_max = 1e4 * max(m, 4) ** 2
    ds = 0.02
    s = np.arange(np.log(1e-16), np.log(t_max), ds)
    t = np.exp(s)
    w = ds * t
    w[0] *= 0.5
    w[-1] *= 0.5
    E = ive(idx[:, None], 2.0 * t[None, :])
    pairs = (E[:, None, :] * E[None, :, :]).reshape(m * m, -1)
    G = (pairs @ (E * w).T).reshape(m, m, m)
    T = t[-1]
    S = 4.0 * (idx[:, None, None] ** 2 + idx[None, :, None] ** 2 + idx[None, None, :] ** 2) - 3.0
    G += (4.0 * np.pi) ** -1.5 * (2.0 * T**-0.5 - S / 24.0 * T**-1.5)
    return G


def newton_table(m: int) -> np.ndarray:
    """1/(4 pi |m|) at unit spacing, singular cell replaced by its average."""
    a, b, c = np.meshgrid(*(np.arange(m),) * 3, indexing="ij")
    r = np.sqrt(a * a + b * b + c * c, dtype=np.float64)
    r[0, 0, 0] = 1.0
    G = 1.0 / (4.0 * np.pi * r)
    G[0, 0, 0] = CUBE_INV_R / (4.0 * np.pi)
    return G


def _periodic_kernel(table: np.ndarray, P: int) -> np.ndarray:
    """Wrap a table of |offset| weights onto a circular grid of size P."""
    m = table.shape[0]
    off = np.arange(P)
    off = np.where(off <= P // 2, off, P - off)
    valid = off < m
    off = np.where(valid, off, 0)
    K = table[np.ix_(off, off, off)]
    K = K * (valid[:, None, None] & valid[None, :, None] & valid[None, None, :])
    return K


class CoulombSolver:
    """Convolution engine bound to one grid.

    ``scale`` multiplies the kernel; values other than 1 exist only to
    inject faults into the check suite.
    """

    def __init__(self, grid: Grid3, kernel: str = "lattice", scale: float = 1.0):
        if kernel not in ("lattice", "newton"):
            raise ValueError(f"unknown kernel {kernel!r}")
        self.grid = grid
        self.kernel = kernel
        self.scale = float(scale)
        n = grid.n
        self.table = self._table(n)
        self.singular_weight = float(self.table[0, 0, 0])
        self._P = 2 * n
        self._khat = sfft.rfftn(_periodic_kernel(self.table, self._P))
        self._ext = None

    def _table(self, m):
        base = lattice_green(m) if self.kernel == "lattice" else newton_table(m)
        return self.scale * self.grid.h**2 * base

    def potential(self, rho) -> np.ndarray:
        """Convolve a density (e.g. u**2) with the kernel."""
        rho = self.grid.check(rho, "density")
        if not np.all(np.isfinite(rho)):
            raise ValueError("density contains non-finite values")
        n = self.grid.n
        if not np.any(rho):
            return np.zeros_like(rho, dtype=np.float64)
        rhat = sfft.rfftn(rho, s=(self._P,) * 3)
        out = sfft.irfftn(rhat * self._khat, s=(self._P,) * 3)
        return np.ascontiguousarray(out[:n, :n, :n])

    def __call__(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        return self.potential(u * u)

    def potential_extended(self, rho) -> np.ndarray:
        """Potential on the box grown by one lattice layer, shape (n+2)^3."""
        rho = self.grid.check(rho, "density")
        n = self.grid.n
        P = 2 * n + 2
        if self._ext is None:
            self._ext = sfft.rfftn(_periodic_kernel(self._table(n + 2), P))
        buf = np.zeros((P,) * 3)
        buf[1 : n + 1, 1 : n + 1, 1 : n + 1] = rho
        out = sfft.irfftn(sfft.rfftn(buf) * self._ext, s=(P,) * 3)
        return np.ascontiguousarray(out[: n + 2, : n + 2, : n + 2])


def poisson_fft(solver: CoulombSolver, u) -> np.ndarray:
    return solver(u)


def poisson_direct(solver: CoulombSolver, u) -> np.ndarray:
    """Brute-force convolution with the same kernel table (oracle)."""
    u = solver.grid.check(np.asarray(u, dtype=np.float64))
    if u.size > DIRECT_MAX_POINTS:
        raise GridError(f"direct summation limited to {DIRECT_MAX_POINTS} points, got {u.size}")
    if not np.all(np.isfinite(u)):
        raise ValueError("input contains non-finite values")
    return _kernels.direct_convolve(u * u, solver.table)


def nonlocal_energy(solver: CoulombSolver, u, phi=None) -> float:
    """int phi_u u^2 dx."""
    u = np.asarray(u, dtype=np.float64)
    if phi is None:
        phi = solver(u)
    return float(np.vdot(phi, u * u) * solver.grid.cell_volume)


def field_energy(solver: CoulombSolver, u) -> float:
    """int_{R^3} |grad phi_u|^2 by lattice differences.

    Edges inside the box are summed directly. The exterior contribution is
    the discrete flux term sum phi_i (phi_i - phi_j) h over edges leaving
    the box, which equals the exterior edge energy when phi is discrete
    harmonic outside the box.
    """
    u = np.asarray(u, dtype=np.float64)
    E = solver.potential_extended(u * u)
    B = E[1:-1, 1:-1, 1:-1]
    h = solver.grid.h
    total = 0.0
    for ax in range(3):
        d = np.diff(B, axis=ax)
        total += float(np.sum(d * d))
    inner = (slice(1, -1),) * 3
    for ax in range(3):
        for side_b, side_e in ((0, 0), (-1, -1)):
            sb = [slice(None)] * 3
            sb[ax] = side_b
            se = list(inner)
            se[ax] = side_e
            pb = B[tuple(sb)]
            pe = E[tuple(se)]
            total += float(np.sum(pb * (pb - pe)))
    return total * h

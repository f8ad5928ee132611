"""Energy functionals and their L2 gradients.

Three functionals share one implementation (``Functional``):

``penalized``  phi_lambda on the whole box (u pinned to 0 on the box face)
``limit``      J = I_Υ on H^1_0(Ω_Υ): zero extension off the Ω_Υ mask
``neumann``    phi_{lambda,Υ} on Ω'_Υ: only lattice edges inside the mask count

The quadratic part of ``limit`` is the full edge energy of the zero
extension, so for u supported in Ω_Υ the three agree exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .coulomb import CoulombSolver
from .grid import Grid3, grad_density, inner, integrate
from .model import F_eval, G_eval, ModelParams, f_eval, g_eval
from .wells import WellGeometry, WellMasks, masks, sample_potential

SUPPORT_TOL = 1e-12


class SupportError(ValueError):
    pass


@dataclass
class Context:
    grid: Grid3
    geometry: WellGeometry
    params: ModelParams
    upsilon: tuple[int, ...]
    coulomb: CoulombSolver
    a: np.ndarray = field(repr=False)
    wm: WellMasks = field(repr=False)

    @property
    def lam(self) -> float:
        return self.params.lam

    def with_lambda(self, lam: float) -> "Context":
        return replace(self, params=self.params.with_lambda(lam))

    def with_upsilon(self, upsilon) -> "Context":
        wm = masks(self.geometry, self.grid, upsilon)
        return replace(self, upsilon=wm.upsilon, wm=wm)


def make_context(grid, geometry, params, upsilon, coulomb=None) -> Context:
    wm = masks(geometry, grid, upsilon)
    if coulomb is None:
        coulomb = CoulombSolver(grid)
    return Context(grid, geometry, params, wm.upsilon, coulomb, sample_potential(geometry, grid), wm)


@dataclass(frozen=True)
class EnergyBreakdown:
    quadratic: float
    nonlocal_: float
    potential: float

    @property
    def total(self) -> float:
        return self.quadratic + self.nonlocal_ - self.potential


KINDS = ("penalized", "limit", "neumann")


class Functional:
    """One of the three energies, bound to a context.

    ``free`` marks the degrees of freedom; ``components`` are the masks on
    which per-component Nehari constraints act.
    """

    def __init__(self, ctx: Context, kind: str):
        if kind not in KINDS:
            raise ValueError(f"unknown functional {kind!r}, expected one of {KINDS}")
        self.ctx = ctx
        self.kind = kind
        wm = ctx.wm
        grid = ctx.grid
        if kind == "penalized":
            self.free = grid.interior.copy()
            self.components = [wm.omega_prime[j] for j in ctx.upsilon]
            self.weight = ctx.lam * ctx.a + 1.0
        elif kind == "limit":
            self.free = wm.omega_ups & grid.interior
            self.components = [wm.omega[j] & grid.interior for j in ctx.upsilon]
            self.weight = np.ones(grid.shape)
        else:
            self.free = wm.omega_prime_ups & grid.interior
            self.components = [wm.omega_prime[j] & grid.interior for j in ctx.upsilon]
            self.weight = ctx.lam * ctx.a + 1.0
        self.support = wm.omega_prime_ups if kind == "neumann" else (wm.omega_ups if kind == "limit" else None)

    # -- helpers -----------------------------------------------------------
    def restrict(self, u) -> np.ndarray:
        """Check that u lives on this functional's domain and zero the rest."""
        u = self.ctx.grid.check(np.asarray(u, dtype=np.float64))
        if not np.all(np.isfinite(u)):
            raise ValueError("field contains non-finite values")
        if self.support is None:
            return u
        off = np.where(self.support, 0.0, u)
        if np.any(off):
            total = np.linalg.norm(u)
            if np.linalg.norm(off) > SUPPORT_TOL * max(total, 1e-300):
                where = "Ω_Υ" if self.kind == "limit" else "Ω'_Υ"
                raise SupportError(f"field has mass outside {where}")
        return np.where(self.support, u, 0.0)

    def phi(self, u) -> np.ndarray:
        return self.ctx.coulomb(u)

    def lin_op(self, u) -> np.ndarray:
        """L u with L the operator of the quadratic part (its L2 gradient)."""
        h = self.ctx.grid.h
        if self.kind == "neumann":
            lap = _kernels.neumann_laplacian(u, self.support, h)
            return np.where(self.support, -lap + self.weight * u, 0.0)
        return -_kernels.laplacian(u, h) + self.weight * u

    def lin_diag(self) -> np.ndarray:
        return 6.0 / self.ctx.grid.h ** 2 + self.weight

    def source(self, u) -> np.ndarray:
        p = self.ctx.params
        if self.kind == "penalized":
            return g_eval(self.ctx.wm.omega_prime_ups, u, p)
        return f_eval(u, p.q)

    def primitive(self, u) -> np.ndarray:
        p = self.ctx.params
        if self.kind == "penalized":
            return G_eval(self.ctx.wm.omega_prime_ups, u, p)
        return F_eval(u, p.q)

    # -- energy and gradient -------------------------------------------------
    def energy(self, u, phi=None) -> EnergyBreakdown:
        u = self.restrict(u)
        grid = self.ctx.grid
        if self.kind == "neumann":
            dens = _kernels.neumann_grad_density(u, self.support, grid.h)
        else:
            dens = grad_density(grid, u)
        # limit: the zero extension has edge energy just outside the mask
        quad_mask = self.support if self.kind == "neumann" else None
        quad = 0.5 * integrate(grid, dens + self.weight * u * u, quad_mask)
        if phi is None:
            phi = self.phi(u)
        nonloc = 0.25 * float(np.vdot(phi, u * u) * grid.cell_volume)
        pot = integrate(grid, self.primitive(u), self.support)
        return EnergyBreakdown(quad, nonloc, pot)

    def grad(self, u, phi=None) -> np.ndarray:
        u = self.restrict(u)
        if phi is None:
            phi = self.phi(u)
        g = self.lin_op(u) + phi * u - self.source(u)
        if self.support is not None:
            g = np.where(self.support, g, 0.0)
        return g

    def derivative(self, u, v, phi=None) -> float:
        """Directional derivative E'(u) v."""
        return inner(self.ctx.grid, self.grad(u, phi), v)


def energy_phi_lambda(u, ctx: Context) -> EnergyBreakdown:
    return Functional(ctx, "penalized").energy(u)


def grad_phi_lambda(u, ctx: Context) -> np.ndarray:
    return Functional(ctx, "penalized").grad(u)


def energy_J_limit(u, ctx: Context) -> EnergyBreakdown:
    return Functional(ctx, "limit").energy(u)


def grad_J_limit(u, ctx: Context) -> np.ndarray:
    return Functional(ctx, "limit").grad(u)


def energy_phi_lambda_upsilon(u, ctx: Context) -> EnergyBreakdown:
    return Functional(ctx, "neumann").energy(u)


def grad_phi_lambda_upsilon(u, ctx: Context) -> np.ndarray:
    return Functional(ctx, "neumann").grad(u)


def constraint_values(u, partition, ctx: Context, kind: str = "limit") -> list[float]:
    """Per-component Nehari residuals E'(u)(u restricted to each mask)."""
    partition = [ctx.grid.check(m, "mask").astype(bool) for m in partition]
    for i in range(len(partition)):
        for j in range(i + 1, len(partition)):
            if np.any(partition[i] & partition[j]):
                raise ValueError(f"partition masks {i} and {j} overlap")
    fn = Functional(ctx, kind)
    u = fn.restrict(u)
    g = fn.grad(u)
    return [inner(ctx.grid, g, np.where(m, u, 0.0)) for m in partition]

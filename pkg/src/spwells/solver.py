"""Penalized problem, lambda continuation, and the minimax path bounds."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field as dc_field

import numpy as np

from .functionals import Context, EnergyBreakdown, Functional, energy_phi_lambda
from .grid import integrate, l2_norm, norm_lambda
from .nehari import ComponentCollapse, ConvergenceError, TauR, descend

AUXILIARY = "auxiliary-only"
ORIGINAL = "original"


class TrivialAttractor(ConvergenceError):
    pass


class ContinuationError(RuntimeError):
    def __init__(self, msg, partial, index):
        super().__init__(msg)
        self.partial = partial
        self.index = index


@dataclass
class SolveResult:
    field: np.ndarray = dc_field(repr=False)
    energy: EnergyBreakdown
    residual: float
    lam: float
    upsilon: tuple[int, ...]
    iterations: int
    classification: str = AUXILIARY
    history: list = dc_field(default_factory=list, repr=False)


@dataclass(frozen=True)
class ContinuationSchedule:
    lambdas: tuple[float, ...]
    warm_start: bool = True

    def __post_init__(self):
        lams = tuple(float(x) for x in self.lambdas)
        if not lams:
            raise ValueError("empty lambda schedule")
        if any(x < 1 for x in lams):
            raise ValueError("lambda values must be >= 1")
        if any(b <= a for a, b in zip(lams, lams[1:])):
            raise ValueError("lambda schedule must be strictly increasing")
        object.__setattr__(self, "lambdas", lams)


def seed_node(center, grid) -> np.ndarray:
    """Grid node nearest to ``center``; ties go to the lower index on each axis."""
    return np.array([grid.axis[int(np.argmin(np.abs(grid.axis - c)))] for c in center])


def initial_guess(upsilon, ctx: Context, amplitude: float = 2.0) -> np.ndarray:
    """Sum of cos^2 bumps, one per selected well, each vanishing inside its well.

    Bumps are centred on the grid node nearest the well centre. On coarse
    grids the least-energy states are node-centred, and a bump centred
    between nodes keeps a symmetry that steers descent to a higher
    critical point.
    """
    x, y, z = ctx.grid.mesh()
    u = ctx.grid.zeros()
    for j in upsilon:
        b = ctx.geometry.wells[j]
        c = seed_node(b.center, ctx.grid)
        rad = b.radius - float(np.linalg.norm(c - np.asarray(b.center)))
        r = np.sqrt((x - c[0]) ** 2 + (y - c[1]) ** 2 + (z - c[2]) ** 2)
        u += np.where(r < rad, amplitude * np.cos(0.5 * np.pi * r / rad) ** 2, 0.0)
    return u


def solve_penalized(lam, upsilon, init, ctx: Context, tol=1e-6, max_iter=3000) -> SolveResult:
    """Critical point of phi_lambda seeded in the wells of Υ.

    Descent on phi_lambda over the set where each Ω'_j component (j in Υ)
    satisfies its Nehari constraint; at convergence the full L2 gradient
    -Δu + (λa+1)u + φ_u u - g(x,u) is below ``tol * ||u||``.
    """
    ctx = ctx.with_lambda(lam)
    if tuple(upsilon) != ctx.upsilon:
        ctx = ctx.with_upsilon(upsilon)
    fn = Functional(ctx, "penalized")
    try:
        d = descend(fn, init, tol=tol, max_iter=max_iter)
    except ComponentCollapse as exc:
        raise TrivialAttractor(
            f"trivial attractor at lambda={lam:g}: component {exc.component} collapsed; "
            "try a stronger initial bump"
        ) from exc
    return SolveResult(d.field, d.energy, d.residual, float(lam), ctx.upsilon, d.iterations, AUXILIARY, d.history)


def outside_sup(u, ctx: Context) -> float:
    outside = ~ctx.wm.omega_prime_ups
    return float(np.max(np.where(outside, u, 0.0))) if np.any(outside) else 0.0


def verify_original(r: SolveResult, ctx: Context) -> bool:
    """True iff u <= a_cut at every grid point outside Ω'_Υ; updates r."""
    if tuple(r.upsilon) != ctx.upsilon:
        ctx = ctx.with_upsilon(r.upsilon)
    ok = outside_sup(r.field, ctx) <= ctx.params.a_cut
    r.classification = ORIGINAL if ok else AUXILIARY
    return ok


def continuation(schedule: ContinuationSchedule, upsilon, ctx: Context, init, tol=1e-6, max_iter=3000):
    """Solve along increasing lambda, warm-starting from the previous solution."""
    results = []
    guess = init
    for i, lam in enumerate(schedule.lambdas):
        try:
            r = solve_penalized(lam, upsilon, guess, ctx, tol=tol, max_iter=max_iter)
        except ConvergenceError as exc:
            raise ContinuationError(f"solve failed at lambda={lam:g}: {exc}", results, i) from exc
        verify_original(r, ctx.with_upsilon(upsilon))
        results.append(r)
        if schedule.warm_start:
            guess = r.field
    return results


# ---------------------------------------------------------------------------
# path bounds and membership
# ---------------------------------------------------------------------------

@dataclass
class PathScan:
    b_hat: float
    boundary_max: float
    argmax: tuple[float, ...]
    values: np.ndarray = dc_field(repr=False)
    ts: np.ndarray = dc_field(repr=False)


def _path_coefficients(w, ctx: Context, lam):
    """Energy of sum s_j w_j as a polynomial in s (disjoint supports)."""
    lctx = ctx.with_lambda(lam)
    fn = Functional(lctx, "penalized")
    grid = ctx.grid
    q = ctx.params.q
    parts = [np.where(ctx.wm.omega[j], w, 0.0) for j in ctx.upsilon]
    quad = np.array([2.0 * energy_phi_lambda(c, lctx).quadratic for c in parts])
    phis = [fn.phi(c) for c in parts]
    B = np.array([[float(np.vdot(phis[j], parts[i] ** 2) * grid.cell_volume) for j in range(len(parts))]
                  for i in range(len(parts))])
    P = np.array([integrate(grid, fn.primitive(c)) for c in parts])
    return quad, B, P, q, parts


def gamma0_path_scan(w, R, lam, resolution, ctx: Context) -> PathScan:
    """phi_lambda along gamma_0(t) = sum_j t_j R w_j on [1/R^2, 1]^l.

    The energy of a sum of disjointly supported non-negative parts is an
    exact polynomial in the scalings; its coefficients come from
    phi_lambda evaluated on each part.
    """
    quad, B, P, q, _ = _path_coefficients(w, ctx, lam)
    l = len(quad)
    if int(resolution) < 2:
        raise ValueError("path scan needs at least 2 points per axis")
    # the Nehari scaling t = 1/R is where the path peaks; keep it on the grid
    axis = np.union1d(np.linspace(1.0 / R**2, 1.0, int(resolution)), [1.0 / R])
    ts = np.array(list(itertools.product(axis, repeat=l)))
    s = R * ts
    s2 = s * s
    vals = 0.5 * s2 @ quad + 0.25 * np.einsum("ni,ij,nj->n", s2, B, s2) - s ** (q + 1.0) @ P
    on_boundary = np.any((ts == axis[0]) | (ts == axis[-1]), axis=1)
    k = int(np.argmax(vals))
    return PathScan(float(vals[k]), float(vals[on_boundary].max()), tuple(ts[k]), vals, ts)


def path_energy(w, R, lam, t, ctx: Context) -> float:
    """phi_lambda(gamma_0(t)) by direct field evaluation."""
    lctx = ctx.with_lambda(lam)
    u = sum(tj * R * np.where(ctx.wm.omega[j], w, 0.0) for tj, j in zip(t, ctx.upsilon))
    return energy_phi_lambda(u, lctx).total


def theta_floor(tau, R):
    """Relaxed norm floor tau/(8R) - 2 delta_theta with delta_theta = tau/(48R)."""
    delta_theta = tau / (48.0 * R)
    return tau / (8.0 * R) - 2.0 * delta_theta


def a_mu_membership(u, lam, mu, tau_r: TauR, c_ups, ctx: Context) -> bool:
    """u in A_mu^lambda: component norms above the floor and |phi_lambda(u) - c_Υ| <= mu."""
    lctx = ctx.with_lambda(lam)
    floor = theta_floor(tau_r.tau, tau_r.R)
    for j in ctx.upsilon:
        if not norm_lambda(ctx.grid, u, ctx.a, lam, ctx.wm.omega_prime[j]) > floor:
            return False
    return abs(energy_phi_lambda(u, lctx).total - c_ups) <= mu


def mass_fraction_outside(u, ctx: Context) -> float:
    total = l2_norm(ctx.grid, u) ** 2
    if total == 0:
        return 0.0
    return l2_norm(ctx.grid, u, ~ctx.wm.omega_prime_ups) ** 2 / total


def penalty_mass(u, lam, ctx: Context) -> float:
    return lam * integrate(ctx.grid, ctx.a * u * u)


def tail_norm_sq(u, lam, ctx: Context) -> float:
    return norm_lambda(ctx.grid, u, ctx.a, lam, ~ctx.wm.omega_prime_ups) ** 2

"""Per-component Nehari constraints, projection onto M_Υ and minimization.

For fields split into disjointly supported parts c_1..c_l (plus an optional
fixed remainder r), the constraint E'(U)(t_i c_i) = 0 for
U = sum t_j c_j + r reduces, after division by t_i^2, to

    A_i + E_i / t_i + sum_j B_ij t_j^2 = C_i t_i^(q-1)

with A_i = <L c_i, c_i> + int phi_r c_i^2, E_i = <L c_i, r>,
B_ij = int phi_{c_j} c_i^2 and C_i = int (c_i^+)^(q+1).
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.optimize import brentq

from .functionals import Context, EnergyBreakdown, Functional
from .grid import inner, l2_norm

T_BOX = (2.0**-8, 2.0**8)
COMPONENT_FLOOR = 1e-6


class TSystemError(RuntimeError):
    pass


class ComponentCollapse(RuntimeError):
    def __init__(self, j, msg=None):
        self.component = j
        super().__init__(msg or f"component collapse: component {j} vanished (u_j = 0)")


class ConvergenceError(RuntimeError):
    def __init__(self, msg, result=None):
        super().__init__(msg)
        self.result = result


@dataclass
class NehariCoefficients:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    E: np.ndarray | None = None

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=np.float64)
        self.B = np.atleast_2d(np.asarray(self.B, dtype=np.float64))
        self.C = np.asarray(self.C, dtype=np.float64)
        self.E = np.zeros_like(self.A) if self.E is None else np.asarray(self.E, dtype=np.float64)

    @property
    def l(self) -> int:
        return self.A.size

    def rows(self, t, q) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        return self.A + self.E / t + self.B @ (t * t) - self.C * t ** (q - 1.0)

    def scale(self, t, q) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        return self.A + np.abs(self.E) / t + self.B @ (t * t) + self.C * t ** (q - 1.0)

    def relative_residual(self, t, q) -> np.ndarray:
        return np.abs(self.rows(t, q)) / self.scale(t, q)


def _split(fn: Functional, u, partition=None):
    partition = fn.components if partition is None else partition
    for i in range(len(partition)):
        for j in range(i + 1, len(partition)):
            if np.any(partition[i] & partition[j]):
                raise ValueError(f"component supports {i} and {j} overlap")
    parts = [np.where(m, u, 0.0) for m in partition]
    union = np.logical_or.reduce(partition)
    rest = np.where(fn.free & ~union, u, 0.0)
    return parts, (rest if np.any(rest) else None)


def _coefficients(fn: Functional, parts, rest=None):
    grid = fn.ctx.grid
    q = fn.ctx.params.q
    l = len(parts)
    phis = [fn.phi(c) for c in parts]
    A = np.array([inner(grid, fn.lin_op(c), c) for c in parts])
    B = np.array([[inner(grid, phis[j], parts[i] ** 2) for j in range(l)] for i in range(l)])
    C = np.array([float(np.sum(np.maximum(c, 0.0) ** (q + 1.0)) * grid.cell_volume) for c in parts])
    E = np.zeros(l)
    phi_r = None
    if rest is not None:
        phi_r = fn.phi(rest)
        A = A + np.array([inner(grid, phi_r, c * c) for c in parts])
        E = np.array([inner(grid, fn.lin_op(c), rest) for c in parts])
    return NehariCoefficients(A, B, C, E), phis, phi_r


def component_coeffs(parts, ctx: Context, kind: str = "limit", rest=None) -> NehariCoefficients:
    """Coefficients of the t-system for disjointly supported parts."""
    fn = Functional(ctx, kind)
    parts = [fn.restrict(p) for p in parts]
    for i in range(len(parts)):
        for j in range(i + 1, len(parts)):
            if np.any((parts[i] != 0) & (parts[j] != 0)):
                raise ValueError(f"parts {i} and {j} have overlapping supports")
    return _coefficients(fn, parts, rest)[0]


def _miranda_ok(c: NehariCoefficients, q, lo, hi) -> bool:
    l = c.l
    low = c.rows(np.full(l, lo), q)
    high = c.rows(np.full(l, hi), q)
    return bool(np.all(low > 0) and np.all(high < 0))


def _bisection_sweeps(c: NehariCoefficients, q, lo, hi, max_sweeps=400):
    t = np.full(c.l, lo)
    for _ in range(max_sweeps):
        prev = t.copy()
        for i in range(c.l):
            def row(x, i=i):
                tt = t.copy()
                tt[i] = np.exp(x)
                return c.rows(tt, q)[i]
            t[i] = np.exp(brentq(row, np.log(lo), np.log(hi), xtol=1e-15, rtol=1e-15))
        if np.max(np.abs(t - prev) / t) < 1e-14:
            break
    return t


def _newton(c: NehariCoefficients, q, t0, tol, max_iter):
    x = np.log(t0)
    for _ in range(max_iter):
        t = np.exp(x)
        r = c.rows(t, q)
        s = c.scale(t, q)
        err = np.max(np.abs(r) / s)
        if err < tol:
            return t
        # d r_i / d x_j = t_j d r_i / d t_j
        J = 2.0 * c.B * (t * t)[None, :]
        J[np.diag_indices(c.l)] -= c.E / t + (q - 1.0) * c.C * t ** (q - 1.0)
        try:
            dx = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            return None
        step = 1.0
        while step > 1e-8:
            xn = x + step * np.clip(dx, -2.0, 2.0)
            tn = np.exp(xn)
            if np.max(np.abs(c.rows(tn, q)) / c.scale(tn, q)) < err:
                break
            step *= 0.5
        else:
            return None
        x = xn
    t = np.exp(x)
    return t if np.max(c.relative_residual(t, q)) < tol else None


def solve_t_system(coeffs: NehariCoefficients, q: float, t0=None, tol=1e-12, max_iter=100) -> np.ndarray:
    """Positive solution t of the per-component Nehari system.

    Damped Newton in log t from ``t0`` (default (A/C)^(1/(q-1))); if it
    fails, coordinate bisection sweeps inside the box [2^-8, 2^8]^l after
    checking the box's face signs.
    """
    c = coeffs
    if np.any(c.A <= 0) or np.any(c.C <= 0):
        bad = int(np.flatnonzero((c.A <= 0) | (c.C <= 0))[0])
        raise ComponentCollapse(bad)
    if t0 is None:
        t0 = (c.A / c.C) ** (1.0 / (q - 1.0))
    t = _newton(c, q, np.asarray(t0, dtype=np.float64), tol, max_iter)
    if t is not None:
        return t
    lo, hi = T_BOX
    if not _miranda_ok(c, q, lo, hi):
        raise TSystemError(f"no sign-change box found in [{lo:g}, {hi:g}]^{c.l}")
    t = _bisection_sweeps(c, q, lo, hi)
    polished = _newton(c, q, t, tol, max_iter)
    t = t if polished is None else polished
    if np.max(c.relative_residual(t, q)) >= tol:
        raise TSystemError(f"t-system residual {np.max(c.relative_residual(t, q)):.3e} above {tol:g}")
    return t


@dataclass
class ProjectionResult:
    t: np.ndarray
    field: np.ndarray
    residuals: np.ndarray
    iterations: int = 0
    phi: np.ndarray | None = dc_field(default=None, repr=False)


def _project(fn: Functional, u, partition=None, t0=None) -> ProjectionResult:
    grid = fn.ctx.grid
    q = fn.ctx.params.q
    parts, rest = _split(fn, u, partition)
    total = np.sqrt(max(inner(grid, fn.lin_op(u), u), 0.0))
    coeffs, phis, phi_r = _coefficients(fn, parts, rest)
    for j, a in enumerate(coeffs.A):
        if not a > 0 or np.sqrt(a) < COMPONENT_FLOOR * total or coeffs.C[j] <= 0:
            raise ComponentCollapse(fn.ctx.upsilon[j] if partition is None else j)
    t = solve_t_system(coeffs, q, t0=t0)
    out = sum(tj * c for tj, c in zip(t, parts))
    phi = sum(tj * tj * p for tj, p in zip(t, phis))
    if rest is not None:
        out = out + rest
        phi = phi + phi_r
    g = fn.grad(out, phi)
    res = np.array([inner(grid, g, tj * c) for tj, c in zip(t, parts)])
    return ProjectionResult(t, out, res, 0, phi)


def project_to_M(u, ctx: Context, partition=None, kind: str = "limit") -> ProjectionResult:
    """Rescale each component of u so every per-component constraint holds."""
    fn = Functional(ctx, kind)
    u = fn.restrict(u)
    if partition is not None:
        partition = [ctx.grid.check(m, "mask").astype(bool) for m in partition]
    return _project(fn, u, partition)


# ---------------------------------------------------------------------------
# constrained descent
# ---------------------------------------------------------------------------

@dataclass
class DescentResult:
    field: np.ndarray
    energy: EnergyBreakdown
    residual: float
    iterations: int
    converged: bool
    t: np.ndarray
    history: list = dc_field(default_factory=list, repr=False)
    phi: np.ndarray | None = dc_field(default=None, repr=False)


def precondition(fn: Functional, g, rtol=1e-3, max_iter=80) -> np.ndarray:
    """Approximate L^{-1} g on the free set by Jacobi-preconditioned CG."""
    free = fn.free
    b = np.where(free, g, 0.0)
    minv = np.where(free, 1.0 / fn.lin_diag(), 0.0)
    x = np.zeros_like(b)
    r = b.copy()
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return x
    z = minv * r
    p = z.copy()
    rz = np.vdot(r, z)
    for _ in range(max_iter):
        Ap = np.where(free, fn.lin_op(p), 0.0)
        alpha = rz / np.vdot(p, Ap)
        x += alpha * p
        r -= alpha * Ap
        if np.linalg.norm(r) <= rtol * bnorm:
            break
        z = minv * r
        rz_new = np.vdot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x


def descend(fn: Functional, u0, tol=1e-6, max_iter=2000, armijo=1e-4) -> DescentResult:
    """Minimize the functional over its per-component Nehari set.

    Each iteration takes a preconditioned gradient step with a
    Barzilai-Borwein length, clips negative values, rescales every
    component back onto the constraint set and backtracks until the energy
    decreases (Armijo). Stops when ||E'(u)||_2 <= tol ||u||_2.
    """
    grid = fn.ctx.grid
    free = fn.free
    u = np.where(free, np.maximum(fn.restrict(u0), 0.0), 0.0)
    pr = _project(fn, u)
    u, t_last, phi = pr.field, pr.t, pr.phi
    en = fn.energy(u, phi)
    history = [en.total]
    g = np.where(free, fn.grad(u, phi), 0.0)
    alpha = 1.0
    prev = None
    res = l2_norm(grid, g) / l2_norm(grid, u)
    it = 0
    for it in range(1, max_iter + 1):
        if res <= tol:
            return DescentResult(u, en, res, it - 1, True, t_last, history, phi)
        p = precondition(fn, g)
        slope = inner(grid, g, p)
        if prev is not None:
            s = u - prev[0]
            y = g - prev[1]
            sy = inner(grid, s, y)
            if sy > 0:
                alpha = float(np.clip(inner(grid, s, fn.lin_op(s)) / sy, 1e-3, 1e3))
        accepted = False
        while alpha > 1e-12:
            cand = np.where(free, np.maximum(u - alpha * p, 0.0), 0.0)
            try:
                cp = _project(fn, cand, t0=np.ones(len(fn.components)))
            except (ComponentCollapse, TSystemError):
                alpha *= 0.5
                continue
            ce = fn.energy(cp.field, cp.phi)
            decrease = en.total - ce.total
            if decrease >= armijo * alpha * slope:
                accepted = True
                break
            # energy changes below round-off: fall back to gradient decrease
            if abs(decrease) <= 1e-12 * abs(en.total):
                cg = np.where(free, fn.grad(cp.field, cp.phi), 0.0)
                if l2_norm(grid, cg) / l2_norm(grid, cp.field) < res:
                    accepted = True
                    break
            alpha *= 0.5
        if not accepted:
            break
        prev = (u, g)
        u, t_last, phi, en = cp.field, cp.t, cp.phi, ce
        history.append(en.total)
        g = np.where(free, fn.grad(u, phi), 0.0)
        res = l2_norm(grid, g) / l2_norm(grid, u)
    result = DescentResult(u, en, res, it, res <= tol, t_last, history, phi)
    if res <= tol:
        return result
    raise ConvergenceError(
        f"{fn.kind} descent stopped after {it} iterations with relative residual {res:.3e} (tol {tol:g})",
        result,
    )


# ---------------------------------------------------------------------------
# least energy levels
# ---------------------------------------------------------------------------

@dataclass
class MinimizeResult:
    w: np.ndarray
    c: float
    residual: float
    iterations: int
    energy: EnergyBreakdown
    t: np.ndarray
    history: list = dc_field(default_factory=list, repr=False)


def _as_result(d: DescentResult) -> MinimizeResult:
    return MinimizeResult(d.field, d.energy.total, d.residual, d.iterations, d.energy, d.t, d.history)


def minimize_limit(upsilon, ctx: Context, init, tol=1e-6, max_iter=2000) -> MinimizeResult:
    """w_Υ and c_Υ: minimum of J over the discrete M_Υ."""
    if tuple(upsilon) != ctx.upsilon:
        ctx = ctx.with_upsilon(upsilon)
    fn = Functional(ctx, "limit")
    return _as_result(descend(fn, np.where(fn.support, init, 0.0), tol, max_iter))


def minimize_neumann(upsilon, lam, ctx: Context, init, tol=1e-6, max_iter=2000) -> MinimizeResult:
    """w_{λ,Υ} and c_{λ,Υ}: minimum of phi_{λ,Υ} over the discrete M'_Υ."""
    if tuple(upsilon) != ctx.upsilon:
        ctx = ctx.with_upsilon(upsilon)
    ctx = ctx.with_lambda(lam)
    fn = Functional(ctx, "neumann")
    return _as_result(descend(fn, np.where(fn.support, init, 0.0), tol, max_iter))


@dataclass
class TauR:
    tau: float
    R: float
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray


def single_component_rate(A, B, C, q, s):
    """I_j'(s w_j)(s w_j) / s^2 = A + B s^2 - C s^(q-1)."""
    return A + B * s * s - C * s ** (q - 1.0)


def estimate_tau_R(w, ctx: Context, safety=0.9, max_power=10) -> TauR:
    """Norm floor tau and path scale R (a power of 2) for a limit minimizer."""
    fn = Functional(ctx, "limit")
    w = fn.restrict(w)
    q = ctx.params.q
    parts = [np.where(m, w, 0.0) for m in fn.components]
    grid = ctx.grid
    A = np.array([inner(grid, fn.lin_op(c), c) for c in parts])
    B = np.array([inner(grid, fn.phi(c), c * c) for c in parts])
    C = np.array([float(np.sum(np.maximum(c, 0.0) ** (q + 1.0)) * grid.cell_volume) for c in parts])
    if np.any(A <= 0) or np.any(C <= 0):
        raise ComponentCollapse(int(np.flatnonzero((A <= 0) | (C <= 0))[0]))
    tau = safety * float(np.sqrt(A.min()))
    for k in range(1, max_power + 1):
        R = 2.0**k
        if np.all(single_component_rate(A, B, C, q, 1.0 / R) > 0) and np.all(
            single_component_rate(A, B, C, q, R) < 0
        ):
            return TauR(tau, R, A, B, C)
    raise TSystemError(f"sign conditions for R not met for R <= 2^{max_power}")

"""Acceptance criteria 1-9, one test each; a pass/fail line per criterion is
printed at the end of the pytest session (and by ``python tests/test_acceptance.py``)."""
import dataclasses
import time

import numpy as np
import pytest
from scipy.optimize import bisect

from conftest import ACCEPTANCE_LINES
from spwells.coulomb import CoulombSolver, field_energy, nonlocal_energy, poisson_direct, poisson_fft
from spwells.experiment import grid_search_t, inner_norm_sq, load_config, default_config_path, neumann_levels, run
from spwells.functionals import Functional, energy_phi_lambda, make_context
from spwells.grid import build_grid, l2_norm, norm_lambda
from spwells.model import ModelParams
from spwells.nehari import NehariCoefficients, estimate_tau_R, project_to_M, solve_t_system
from spwells.solver import ContinuationSchedule, continuation, gamma0_path_scan, mass_fraction_outside, penalty_mass
from spwells.wells import build_geometry

SCHEDULE = (10.0, 100.0, 1000.0)


def report(k, ok, detail):
    ACCEPTANCE_LINES[k] = f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(ACCEPTANCE_LINES[k])
    assert ok, ACCEPTANCE_LINES[k]


@pytest.fixture(scope="module")
def small_two_well():
    grid = build_grid(16, 4.0)
    geom = build_geometry([((-2.0, 0.0, 0.0), 1.2), ((2.0, 0.0, 0.0), 1.2)], margin=0.5, ramp_width=0.5)
    return make_context(grid, geom, ModelParams(lam=10.0), (0, 1), CoulombSolver(grid))


def test_criterion_1_poisson_oracle():
    grid = build_grid(16, 4.0)
    rng = np.random.default_rng(1)
    u = rng.normal(size=grid.shape)
    t0 = time.perf_counter()
    solver = CoulombSolver(grid)
    a = poisson_fft(solver, u)
    b = poisson_direct(solver, u)
    elapsed = time.perf_counter() - t0
    err = float(np.max(np.abs(a - b)) / np.max(np.abs(b)))
    report(1, err < 1e-6 and elapsed < 5.0, f"max rel err {err:.2e} (< 1e-6), runtime {elapsed:.2f} s (< 5 s)")


def test_criterion_2_potential_properties():
    rng = np.random.default_rng(2)
    grid = build_grid(16, 4.0)
    solver = CoulombSolver(grid)
    min_phi = np.inf
    scale_err = 0.0
    for _ in range(100):
        u = rng.normal(size=grid.shape)
        phi = solver(u)
        min_phi = min(min_phi, float(phi.min()))
        for t in (0.5, 2.0, 3.0):
            scale_err = max(scale_err, float(np.max(np.abs(solver(t * u) - t * t * phi)) / np.max(t * t * phi)))
    g24 = build_grid(24, 3.0)
    s24 = CoulombSolver(g24)
    u = rng.uniform(size=g24.shape)
    fe, ne = field_energy(s24, u), nonlocal_energy(s24, u)
    ident = abs(fe - ne) / ne
    ok = min_phi >= 0.0 and scale_err <= 1e-13 and ident < 1e-4
    report(2, ok, f"min φ {min_phi:.3e} (>= 0), scaling err {scale_err:.1e} (<= 1e-13), "
                  f"field-energy identity err {ident:.1e} on 24^3 (< 1e-4)")


def test_criterion_3_gradient_checks(small_two_well):
    rng = np.random.default_rng(3)
    worst = {}
    eps = 1e-4
    for kind in ("penalized", "limit", "neumann"):
        fn = Functional(small_two_well, kind)
        err = 0.0
        for _ in range(10):
            u = np.where(fn.free, rng.uniform(0.2, 1.2, fn.free.shape), 0.0)
            v = np.where(fn.free, rng.normal(size=fn.free.shape), 0.0)
            fd = (fn.energy(u + eps * v).total - fn.energy(u - eps * v).total) / (2 * eps)
            exact = fn.derivative(u, v)
            err = max(err, abs(fd - exact) / abs(exact))
        worst[kind] = err
    ok = all(e < 1e-5 for e in worst.values())
    report(3, ok, "max rel FD err " + ", ".join(f"{k} {e:.1e}" for k, e in worst.items()) + " (< 1e-5)")


def test_criterion_4_t_system():
    closed = abs(solve_t_system(NehariCoefficients([2.0], [[0.0]], [16.0]), 4.0)[0] - 0.5)
    t = solve_t_system(NehariCoefficients([1.0], [[1.0]], [1.0]), 4.0)[0]
    ref = bisect(lambda x: x**3 - x * x - 1.0, 1.0, 2.0, xtol=1e-15)
    cubic = abs(t - ref)
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(50):
        c = NehariCoefficients(rng.uniform(0.1, 10, 2), rng.uniform(0, 5, (2, 2)), rng.uniform(0.1, 10, 2))
        worst = max(worst, float(np.max(np.abs(solve_t_system(c, 4.0) - grid_search_t(c, 4.0)))))
    ok = closed <= 1e-12 and cubic <= 1e-10 and worst <= 1e-6
    report(4, ok, f"closed form err {closed:.1e}, cubic root {t:.11f} err {cubic:.1e}, "
                  f"50 random l=2 max err {worst:.1e}")


def test_criterion_5_nehari_lower_bound(small_two_well):
    rng = np.random.default_rng(5)
    ctx = small_two_well
    fn = Functional(ctx, "limit")
    worst_gap = np.inf
    floor = np.inf
    for i in range(100):
        amp = 10.0 ** rng.uniform(-3, 3)
        u = np.where(fn.free, amp * rng.uniform(0.0, 1.0, fn.free.shape), 0.0)
        w = project_to_M(u, ctx).field
        worst_gap = min(worst_gap, fn.energy(w).total - 0.25 * inner_norm_sq(fn, w))
        for m in fn.components:
            floor = min(floor, np.sqrt(inner_norm_sq(fn, np.where(m, w, 0.0))))
    ok = worst_gap >= -1e-8 and floor > 0
    report(5, ok, f"min J(u) - ||u||^2/4 = {worst_gap:.3e} (>= -1e-8), component norm floor {floor:.4f} (> 0)")


# ---------------------------------------------------------------------------
# reference configuration: 48^3, L = 8, q = 4, delta = 1/2
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def reference_runs(standard_ctx, standard_limits):
    cfg = load_config(default_config_path())
    t0 = time.perf_counter()
    out = {}
    for ups in [(0,), (1,), (0, 1)]:
        ctx = standard_ctx.with_upsilon(ups)
        out[ups] = continuation(ContinuationSchedule(SCHEDULE), ups, ctx, standard_limits[ups].w,
                                tol=cfg.solver.tol, max_iter=cfg.solver.max_iter)
    return out, time.perf_counter() - t0


def test_criterion_6_level_ordering(standard_ctx, standard_limits):
    cfg = load_config(default_config_path())
    m = standard_limits[(0,)]
    tr = estimate_tau_R(m.w, standard_ctx)
    lams = [1.0, 10.0, 100.0]
    levels = neumann_levels(cfg, standard_ctx, m.w, lams)
    b_hats = [gamma0_path_scan(m.w, tr.R, lam, cfg.solver.path_resolution, standard_ctx).b_hat for lam in lams]
    ordered = all(c <= b <= m.c + 1e-6 for c, b in zip(levels, b_hats))
    gaps = [m.c - c for c in levels]
    decreasing = all(b < a for a, b in zip(gaps, gaps[1:]))
    detail = "; ".join(f"λ={lam:g}: c_λΥ {c:.6f} <= b_hat {b:.6f} <= c_Υ {m.c:.6f}"
                       for lam, c, b in zip(lams, levels, b_hats))
    report(6, ordered and decreasing, detail + f"; gaps {', '.join(f'{g:.4e}' for g in gaps)} strictly decreasing")


def test_criterion_7_multi_bump(standard_ctx, standard_limits, reference_runs):
    runs, elapsed = reference_runs
    parts = []
    ok = True
    finals = {}
    for ups, results in runs.items():
        ctx = standard_ctx.with_upsilon(ups)
        c_ups = standard_limits[ups].c
        last = results[-1]
        finals[ups] = last.field
        tail = mass_fraction_outside(last.field, ctx)
        pens = [penalty_mass(r.field, r.lam, ctx) for r in results]
        monotone = all(b < a for a, b in zip(pens, pens[1:]))
        gap = abs(last.energy.total - c_ups) / c_ups
        converged = all(r.residual <= 1e-6 for r in results) and len(results) == len(SCHEDULE)
        sel_ok = converged and last.classification == "original" and tail < 0.02 and monotone and gap < 0.05
        ok &= sel_ok
        parts.append(f"Υ={list(ups)}: {last.classification}, tail {tail:.1e}, penalty "
                     f"{'/'.join(f'{p:.1e}' for p in pens)}, energy gap {gap:.2e}")
    keys = list(finals)
    grid = standard_ctx.grid
    dmin = min(l2_norm(grid, finals[a] - finals[b]) for i, a in enumerate(keys) for b in keys[i + 1:])
    distinct = dmin > 10 * 1e-6
    ok = ok and distinct and elapsed <= 1800
    report(7, ok, "; ".join(parts) + f"; min pairwise L2 distance {dmin:.3f}; continuation time {elapsed:.0f} s")


def test_criterion_8_mirror_symmetry(standard_ctx, standard_limits, reference_runs):
    runs, _ = reference_runs
    grid = standard_ctx.grid
    # arrays are indexed [z, y, x]; x -> -x reverses the last axis
    u0, u1 = runs[(0,)][-1], runs[(1,)][-1]
    mirror = l2_norm(grid, u0.field[:, :, ::-1] - u1.field) / l2_norm(grid, u1.field)
    w0, w1 = standard_limits[(0,)], standard_limits[(1,)]
    mirror_w = l2_norm(grid, w0.w[:, :, ::-1] - w1.w) / l2_norm(grid, w1.w)
    e_rel = abs(u0.energy.total - u1.energy.total) / abs(u1.energy.total)
    ok = mirror < 1e-6 and mirror_w < 1e-6 and e_rel < 1e-8
    report(8, ok, f"λ=1000 mirror L2 err {mirror:.1e}, limit mirror err {mirror_w:.1e} (< 1e-6), "
                  f"energy rel diff {e_rel:.1e} (< 1e-8)")


def test_criterion_9_reproducible_csv(tmp_path):
    cfg = dataclasses.replace(load_config(default_config_path()), seed=2024, perturbation=0.05)
    run(cfg, tmp_path / "a", dump_fields=False)
    run(cfg, tmp_path / "b", dump_fields=False)
    a = (tmp_path / "a" / "diagnostics.csv").read_bytes()
    b = (tmp_path / "b" / "diagnostics.csv").read_bytes()
    lines = a.decode().count("\n")
    report(9, a == b and lines == 1 + len(cfg.lambdas),
           f"two runs with seed {cfg.seed}: {'bit-identical' if a == b else 'DIFFERENT'} CSV ({lines} lines)")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))

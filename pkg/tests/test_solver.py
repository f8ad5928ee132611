import numpy as np
import pytest

from spwells.functionals import energy_phi_lambda
from spwells.grid import build_grid, l2_norm
from spwells.nehari import ConvergenceError, TauR, estimate_tau_R
from spwells.solver import (
    AUXILIARY,
    ORIGINAL,
    ContinuationError,
    ContinuationSchedule,
    SolveResult,
    TrivialAttractor,
    a_mu_membership,
    continuation,
    gamma0_path_scan,
    initial_guess,
    mass_fraction_outside,
    outside_sup,
    path_energy,
    penalty_mass,
    seed_node,
    solve_penalized,
    tail_norm_sq,
    theta_floor,
    verify_original,
)


@pytest.mark.parametrize("lams", [[], [0.5, 2.0], [10.0, 10.0], [100.0, 10.0]])
def test_schedule_validation(lams):
    with pytest.raises(ValueError):
        ContinuationSchedule(tuple(lams))


def test_schedule_coerces_to_float():
    assert ContinuationSchedule((1, 10)).lambdas == (1.0, 10.0)


def test_seed_node_breaks_ties_low():
    g = build_grid(48, 8.0)
    c = seed_node((3.5, 0.0, 0.0), g)
    assert c[0] in g.axis and c[1] == g.axis[23] and c[2] == g.axis[23]
    assert np.min(np.abs(g.axis - 3.5)) == abs(c[0] - 3.5)


def test_initial_guess_support(small_ctx):
    u = initial_guess((0, 1), small_ctx)
    assert np.all(u >= 0) and u.max() > 0
    assert not np.any(u[~small_ctx.wm.omega_ups])
    one = initial_guess((1,), small_ctx)
    assert not np.any(one[small_ctx.wm.omega[0]])


def fake_result(u, ctx):
    return SolveResult(u, energy_phi_lambda(u, ctx), 0.0, ctx.lam, ctx.upsilon, 0)


def test_verify_original_examples(small_ctx):
    grid = small_ctx.grid
    a_cut = small_ctx.params.a_cut
    outside = ~small_ctx.wm.omega_prime_ups & grid.interior
    u = np.where(outside, a_cut / 2, 1.0) * grid.interior
    r = fake_result(u, small_ctx)
    assert verify_original(r, small_ctx) and r.classification == ORIGINAL
    k = tuple(np.argwhere(outside)[0])
    u[k] = 2 * a_cut
    r = fake_result(u, small_ctx)
    assert not verify_original(r, small_ctx) and r.classification == AUXILIARY
    assert outside_sup(u, small_ctx) == 2 * a_cut


def test_mass_diagnostics(small_ctx):
    g = small_ctx.grid
    inside = initial_guess((0, 1), small_ctx)
    assert mass_fraction_outside(inside, small_ctx) == 0.0
    assert penalty_mass(inside, 10.0, small_ctx) == 0.0
    assert tail_norm_sq(inside, 10.0, small_ctx) == 0.0
    assert mass_fraction_outside(g.zeros(), small_ctx) == 0.0
    flat = g.interior.astype(float)
    assert 0.0 < mass_fraction_outside(flat, small_ctx) < 1.0
    assert penalty_mass(flat, 20.0, small_ctx) == pytest.approx(2 * penalty_mass(flat, 10.0, small_ctx))


def test_theta_floor():
    assert theta_floor(3.0, 2.0) == pytest.approx(3.0 / 24.0)


def test_small_solve_and_continuation(small_ctx):
    init = initial_guess((0, 1), small_ctx)
    r = solve_penalized(10.0, (0, 1), init, small_ctx)
    assert r.residual <= 1e-6 and r.upsilon == (0, 1) and r.lam == 10.0
    assert np.all(r.field >= 0)
    res = continuation(ContinuationSchedule((10.0, 100.0)), (0, 1), small_ctx, init)
    assert [x.lam for x in res] == [10.0, 100.0]
    assert all(x.classification in (ORIGINAL, AUXILIARY) for x in res)
    assert res[0].energy.total == pytest.approx(r.energy.total, rel=1e-6)


def test_trivial_attractor_and_partial_continuation(small_ctx):
    with pytest.raises(TrivialAttractor, match="collapsed"):
        solve_penalized(10.0, (0, 1), initial_guess((0,), small_ctx), small_ctx)
    assert issubclass(TrivialAttractor, ConvergenceError)
    init = initial_guess((0, 1), small_ctx)
    with pytest.raises(ContinuationError) as exc:
        continuation(ContinuationSchedule((10.0, 100.0)), (0, 1), small_ctx, init, max_iter=1)
    assert exc.value.index == 0 and exc.value.partial == []


# ---------------------------------------------------------------------------
# reference configuration (48^3)
# ---------------------------------------------------------------------------

def test_path_scan_bounds(standard_ctx, standard_limits):
    m = standard_limits[(0,)]
    tr = estimate_tau_R(m.w, standard_ctx)
    scan = gamma0_path_scan(m.w, tr.R, 10.0, 21, standard_ctx)
    assert scan.boundary_max < m.c
    # the path peaks at the Nehari scaling t = 1/R, where it passes through w
    assert scan.argmax[0] == pytest.approx(1.0 / tr.R)
    assert scan.b_hat == pytest.approx(m.c, rel=1e-9)
    for k in (0, 7, 20):
        t = scan.ts[k]
        assert path_energy(m.w, tr.R, 10.0, t, standard_ctx) == pytest.approx(scan.values[k], rel=1e-9, abs=1e-12)
    with pytest.raises(ValueError):
        gamma0_path_scan(m.w, tr.R, 10.0, 1, standard_ctx)


def test_a_mu_membership(standard_ctx, standard_limits):
    m = standard_limits[(0,)]
    tr = estimate_tau_R(m.w, standard_ctx)
    mu = 0.1 * m.c
    assert a_mu_membership(m.w, 10.0, mu, tr, m.c, standard_ctx)
    assert not a_mu_membership(standard_ctx.grid.zeros(), 10.0, mu, tr, m.c, standard_ctx)
    assert not a_mu_membership(10 * m.w, 10.0, mu, tr, m.c, standard_ctx)
    assert isinstance(tr, TauR)


def test_penalized_concentrates_in_well(standard_ctx, standard_limits):
    m = standard_limits[(1,)]
    ctx = standard_ctx.with_upsilon((1,))
    r = solve_penalized(100.0, (1,), m.w, ctx)
    inside = l2_norm(ctx.grid, r.field, ctx.wm.omega_prime[1]) ** 2
    assert inside / l2_norm(ctx.grid, r.field) ** 2 > 0.95
    rng = np.random.default_rng(7)
    seed2 = m.w * (1 + 0.05 * rng.uniform(-1, 1, m.w.shape))
    r2 = solve_penalized(100.0, (1,), seed2, ctx)
    assert r2.energy.total == pytest.approx(r.energy.total, rel=1e-4)
    assert l2_norm(ctx.grid, r2.field - r.field) / l2_norm(ctx.grid, r.field) < 1e-2

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from blowuplab.barriers import keller_osserman_power
from blowuplab.errors import ConfigError, DivergenceError, NonConvergenceError
from blowuplab.geometry import Disk, Rectangle, build_grid
from blowuplab.nonlinearity import NonlinearitySpec
from blowuplab.operators import ConstantField, OperatorSpec, discretize, laplacian
from blowuplab.solver import (GridFunction, Transform, residual, solve_blowup_exhaustion,
                              solve_blowup_ladder, solve_dirichlet, transformed_residual_u)

POW2, POW3, EXP = NonlinearitySpec.power(2), NonlinearitySpec.power(3), NonlinearitySpec.exponential()
SLAB = Rectangle((0.5, -0.5), (1.5, 0.5))


def setup(domain, h, op=None):
    grid = build_grid(domain, h)
    return grid, discretize(op or laplacian(), grid)


def test_zero_data_gives_zero_solution():
    grid, dop = setup(Disk(), 1 / 16)
    u, step = solve_dirichlet(grid, dop, POW3, 0.0)
    assert np.all(u.values == 0) and step.iterations == 0


def test_residual_of_constant():
    grid, dop = setup(Disk(), 1 / 16)
    C = 1.7
    u = GridFunction(grid, np.full(grid.n_interior, C), np.full(grid.n_slots, C))
    assert np.allclose(residual(grid, dop, POW3, u), -C**3, rtol=1e-12)


def slab_error(h):
    grid, dop = setup(SLAB, h)
    u, _ = solve_dirichlet(grid, dop, EXP, oracles.slab_log, tol=1e-9)
    return np.abs(u.values - oracles.slab_log(grid.points)).max()


def test_slab_dirichlet_second_order():
    errs = [slab_error(h) for h in (1 / 8, 1 / 16, 1 / 32)]
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    # a non-polynomial solution, so the truncation error is visible
    assert errs[-1] > 1e-8
    assert all(3.5 < r < 4.5 for r in ratios), ratios


def test_newton_converges_quadratically():
    grid, dop = setup(SLAB, 1 / 32)
    _, step = solve_dirichlet(grid, dop, EXP, oracles.slab_log, u_init=np.zeros(grid.n_interior), tol=1e-9)
    assert step.converged and step.iterations >= 3
    r = step.residuals
    # once in the basin, each residual is at most a multiple of the square of the previous one
    assert any(r[k] <= 10 * r[k - 1] ** 2 and r[k - 1] < 1e-2 for k in range(1, len(r)))
    assert step.residuals[-1] <= 1e-9


@pytest.mark.parametrize("nl, g", [(EXP, oracles.slab_log), (POW3, oracles.half_plane_cubic)])
def test_newton_tail_ratios(nl, g):
    grid, dop = setup(SLAB, 1 / 32)
    _, step = solve_dirichlet(grid, dop, nl, g, tol=1e-9)
    assert step.tail_ratios() and all(r <= 0.5 for r in step.tail_ratios())


def test_ladder_rungs_have_quadratic_tails():
    grid, dop = setup(Disk(), 1 / 32)
    _, rep = solve_blowup_ladder(grid, dop, POW2, factor=16.0, finalize=True)
    for step in rep.steps:
        assert step.converged and all(r <= 0.5 for r in step.tail_ratios())


def test_solve_dirichlet_reports_nonconvergence():
    grid, dop = setup(SLAB, 1 / 16)
    with pytest.raises(NonConvergenceError) as info:
        solve_dirichlet(grid, dop, EXP, oracles.slab_log, tol=1e-9, max_iter=1)
    assert len(info.value.history) == 2


def test_solve_dirichlet_rejects_infinite_data():
    grid, dop = setup(Disk(), 1 / 8)
    with pytest.raises(ConfigError):
        solve_dirichlet(grid, dop, POW2, np.inf)


def test_exponential_overflow_is_a_divergence():
    with pytest.raises(DivergenceError):
        EXP.f(np.array([1.0, 800.0]))


@settings(max_examples=15)
@given(st.floats(0.0, 5.0), st.floats(0.0, 5.0))
def test_comparison_of_boundary_data(g1, dg):
    grid, dop = setup(Disk(), 1 / 8)
    u1, _ = solve_dirichlet(grid, dop, POW2, g1)
    u2, _ = solve_dirichlet(grid, dop, POW2, g1 + dg)
    assert np.all(u2.values >= u1.values - 1e-9)
    assert np.all(u1.values <= g1 + 1e-9)


@given(st.sampled_from([POW2, POW3, NonlinearitySpec.power(1.5), EXP, NonlinearitySpec.exponential(4.0)]),
       st.floats(0.1, 50.0))
def test_transform_round_trip(nl, u):
    tr = Transform(nl)
    assert tr.phi(tr.psi(np.array([u])))[0] == pytest.approx(u, rel=1e-12)


def test_transform_limit_is_zero():
    for nl in (POW2, EXP):
        assert Transform(nl).psi(np.array([np.inf]))[0] == 0.0


def first_rung_gap(h):
    grid, dop = setup(Disk(), h)
    a, _ = solve_blowup_ladder(grid, dop, POW2, M0=5.0, stop_tol=np.inf, method="transformed")
    b, _ = solve_blowup_ladder(grid, dop, POW2, M0=5.0, stop_tol=np.inf, method="direct")
    return np.max(np.abs(a.values - b.values))


def test_direct_and_transformed_schemes_agree_to_second_order():
    # two consistent discretizations of the same Dirichlet problem
    coarse, fine = first_rung_gap(1 / 16), first_rung_gap(1 / 32)
    assert coarse < 1e-2
    assert coarse / fine > 3


def test_infinite_stop_tol_returns_after_first_rung():
    grid, dop = setup(Disk(), 1 / 8)
    _, rep = solve_blowup_ladder(grid, dop, POW2, stop_tol=np.inf)
    assert rep.labels == [1.0] and rep.converged


def test_ladder_is_monotone_and_bounded_by_barrier():
    grid, dop = setup(Disk(), 1 / 16)
    sol, rep = solve_blowup_ladder(grid, dop, POW2, factor=4.0, finalize=True)
    assert rep.converged and rep.finalized and rep.labels[-1] == np.inf
    assert rep.monotone_violations == 0 and rep.min_increment >= 0
    assert np.all(np.diff(rep.labels) > 0)
    # away from the rim the discrete solution sits below the Keller-Osserman barrier
    deep = grid.d >= 0.25
    upper = keller_osserman_power(2, 2.0, 1.0, 1.0, 0.0).value(grid.points[deep])
    assert sol.values.min() > 0
    assert np.all(sol.values[deep] <= upper)


def test_ladder_cap_raises_with_report():
    grid, dop = setup(Disk(), 1 / 8)
    with pytest.raises(NonConvergenceError) as info:
        solve_blowup_ladder(grid, dop, POW2, cap=1, stop_tol=0.0)
    rep = info.value.report
    assert len(rep.labels) == 2 and not rep.converged
    assert info.value.iterate is not None


@pytest.mark.parametrize("kw", [{"M0": 0.0}, {"factor": 1.0}, {"rho": 0.01}, {"rho": 5.0},
                                {"method": "bogus"}])
def test_ladder_argument_checks(kw):
    grid, dop = setup(Disk(), 1 / 8)
    with pytest.raises(ConfigError):
        solve_blowup_ladder(grid, dop, POW2, **kw)


def test_ladder_callback_sees_each_rung():
    grid, dop = setup(Disk(), 1 / 8)
    seen = []
    _, rep = solve_blowup_ladder(grid, dop, POW2, factor=4.0, callback=lambda k, M, u, d: seen.append((k, d)))
    assert [d for _, d in seen] == rep.compact_deltas


def test_exhaustion_decreases_with_offset():
    ladder = {"factor": 4.0, "finalize": True}
    sol, rep = solve_blowup_exhaustion(Disk(), laplacian(), POW2, 1 / 16, (0.2, 0.1, 0.05), ladder, rho=0.5)
    assert rep.monotone_violations == 0 and rep.min_increment >= 0
    assert len(rep.sub_reports) == 3 and len(rep.compact_deltas) == 2
    # the deltas shrink as the offsets approach the boundary
    assert rep.compact_deltas[1] < rep.compact_deltas[0]
    assert sol.grid.points.shape[0] == sol.values.shape[0]


@pytest.mark.parametrize("offsets", [(), (0.1, 0.2), (0.1, -0.05), (0.1, 0.1)])
def test_exhaustion_offset_checks(offsets):
    with pytest.raises(ConfigError):
        solve_blowup_exhaustion(Disk(), laplacian(), POW2, 1 / 8, offsets)


def test_exhaustion_resolution_flag():
    with pytest.raises(ConfigError):
        solve_blowup_exhaustion(Disk(), laplacian(), POW2, 1 / 8, (0.1,), require_resolved=True)


def test_anisotropic_ladder_converges():
    op = OperatorSpec(ConstantField(((2.0, 0.3), (0.3, 1.0)), b=(0.5, 0.0)), 0.9, 2.1, 0.25)
    grid, dop = setup(Disk(), 1 / 16, op)
    sol, rep = solve_blowup_ladder(grid, dop, POW3, factor=4.0, finalize=True)
    assert dop.monotone and rep.monotone_violations == 0
    assert np.abs(transformed_residual_u(dop, POW3, sol)).max() < 1e-6 * sol.values.max() ** 3

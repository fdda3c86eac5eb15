import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from fdafem import boundary as bd
from fdafem import diagnostics as dg
from fdafem import femcore as fc
from fdafem.mesh import criss_cross_box
from fdafem.uzawa import UzawaParams, compute_tolerance, g_h1_norm, run_uzawa, uzawa_rates

from conftest import partition


@pytest.fixture(scope="module")
def small_run(problem):
    tau0 = criss_cross_box()
    snaps = []

    def progress(row):
        mask = np.zeros(tau0._tri.n, bool)
        mask[tau0.active_ids] = True
        snaps.append((row, mask))

    trace = run_uzawa(problem.volume_data(), problem.g, problem.curve,
                      UzawaParams(K=3, I=4), problem=problem, tau0=tau0, g_norm=0.0,
                      progress=progress)
    return trace, snaps, tau0


def test_level_bookkeeping(small_run):
    trace, _, _ = small_run
    assert len(trace.rows) == 4 * 3
    for r in trace.rows:
        assert r.n_sigma == 2 ** (r.i + 2)
        assert len(r.chi) == len(r.lam) == r.n_sigma
    assert trace.final_lambda.level == 4 and trace.final_lambda.partition.size == 64
    assert [r.i for r in trace.last_rows()] == [1, 2, 3, 4]


def test_mesh_monotonicity(small_run):
    trace, snaps, tau0 = small_run
    assert trace.final_mesh is tau0
    for (r0, m0), (r1, m1) in zip(snaps[:-1], snaps[1:]):
        assert r1.n_tri >= r0.n_tri and r1.mesh_version >= r0.mesh_version
    # the final mesh refines every intermediate one
    for _, mask in snaps:
        tau0.ancestor_in(tau0.active_ids, mask)
    assert trace.marked_total >= (tau0.n_triangles - trace.n_bottom) / 50.0


def test_prolongation_between_outer_iterations(small_run):
    trace, _, _ = small_run
    rows = trace.rows
    for prev, nxt in zip(rows[:-1], rows[1:]):
        if nxt.i == prev.i + 1:
            assert np.array_equal(nxt.chi, np.repeat(prev.lam, 2))
        else:
            assert np.array_equal(nxt.chi, prev.lam)
    assert np.all(trace.rows[0].chi == 0.0)


def test_update_matches_uzawa_estimator(small_run):
    # lam - chi = beta M^{-1} r, so (M (lam - chi)/beta)(.) = <M^{-1} r, r> = E_Uzawa^2
    trace, _, _ = small_run
    beta = trace.params.beta
    for r in trace.rows:
        p = partition(trace.final_lambda.partition.curve, r.i)
        step = (r.lam - r.chi) / beta
        assert math.sqrt(bd.precond_apply(step, p)) == pytest.approx(r.E_Uzawa, rel=1e-9)


def test_zero_residual_leaves_multiplier(curve):
    p = partition(curve, 3)
    step, form = bd.precond_apply_inverse(np.zeros(p.size), p)
    assert np.all(step == 0.0) and form == 0.0


def test_tolerance_schedule():
    L = compute_tolerance(0, 9.0, 1.0, 0.1, math.sqrt(2))
    assert L == pytest.approx(1.0)
    for i in range(1, 12):
        t = compute_tolerance(i, 9.0, 1.0, 0.1, math.sqrt(2))
        assert compute_tolerance(i + 2, 9.0, 1.0, 0.1, math.sqrt(2)) == pytest.approx(t / 2)
    with pytest.raises(ValueError):
        compute_tolerance(1, -1.0, 0.0, 0.1, 2.0)


@given(st.floats(1e-3, 1e3), st.floats(0, 10), st.floats(0, 10), st.integers(1, 10))
def test_tolerance_homogeneous(c, fn, gn, i):
    a = compute_tolerance(i, c * fn, c * gn, 0.1, math.sqrt(2))
    b = c * compute_tolerance(i, fn, gn, 0.1, math.sqrt(2))
    assert a == pytest.approx(b, rel=1e-12, abs=1e-300)


def test_L_from_forcing_norm(small_run, problem):
    trace, _, _ = small_run

    def f2(r, phi):
        return problem.f(r * np.cos(phi), r * np.sin(phi)) ** 2 * r

    # cartesian evaluator integrated in polar coordinates over the annular sector
    val = integrate.dblquad(f2, -np.pi / 2, np.pi, 0.25, 0.75, epsabs=1e-13, epsrel=1e-12)[0]
    assert trace.L == pytest.approx(0.1 * math.sqrt(val), rel=1e-8)


def test_self_consistency_at_converged_multiplier(problem, curve):
    # on a fixed mesh the exact discrete Schur solution is a fixed point of the update
    tau = criss_cross_box()
    for _ in range(4):
        tau.uniform_refine()
    p = partition(curve, 1)
    cg_ = fc.intersect_curve_mesh(tau, curve, p)
    f = problem.volume_data()
    S = dg.schur_matrix(tau, p, cg_)
    u0 = fc.solve(tau, f, bd.MultiplierFn(p), cg_)
    r0 = fc.boundary_residual(u0, problem.g, p, cg_)
    lam_star = np.linalg.solve(S, r0)
    u = fc.solve(tau, f, bd.MultiplierFn(p, lam_star), cg_)
    r = fc.boundary_residual(u, problem.g, p, cg_)
    assert np.linalg.norm(r) <= 1e-9 * np.linalg.norm(r0)
    step, _ = bd.precond_apply_inverse(r, p)
    assert np.linalg.norm(2.5 * step) <= 1e-8 * np.linalg.norm(lam_star)


def test_problem_free_run_and_rates(problem):
    trace = run_uzawa(problem.volume_data(), None, problem.curve, UzawaParams(K=2, I=4),
                      g_norm=0.0)
    assert all(math.isnan(r.e_u) for r in trace.rows)
    rates = uzawa_rates(trace, skip=1)
    assert set(rates) >= {"E_inner", "E_outer", "E_Uzawa"}
    assert 0.2 < rates["E_inner"] < 1.0


def test_vanishing_data_rejected(curve):
    with pytest.raises(ValueError):
        run_uzawa(fc.ZeroForcing(), None, curve, UzawaParams(I=1, K=1), g_norm=0.0)


@pytest.mark.parametrize("kw", [{"K": 0}, {"I": 0}, {"beta": 0}, {"zeta": 1.0}, {"theta": 1.0},
                                {"Lbar": -1}, {"c_upp": 0}, {"n0": 1}, {"K": 2.5}])
def test_param_validation(kw):
    with pytest.raises(ValueError):
        UzawaParams(**kw)


def test_g_h1_norm(curve):
    assert g_h1_norm(np.sin, np.cos, curve) == pytest.approx(math.sqrt(8.0), rel=1e-12)
    assert g_h1_norm(np.sin, None, curve) == pytest.approx(math.sqrt(8.0), rel=1e-8)
    assert g_h1_norm(None, None, curve) == 0.0
    # linear data along the arc: int_0^8 (s^2 + 1) ds
    assert g_h1_norm(lambda s: s, lambda s: np.ones_like(s), curve) == pytest.approx(
        math.sqrt(512 / 3 + 8), rel=1e-12)

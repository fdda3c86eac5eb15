import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from fdafem import boundary as bd
from fdafem import diagnostics as dg

from conftest import partition


def test_partition_sizes_and_corners(curve):
    assert curve.length == pytest.approx(8.0)
    p1 = partition(curve, 1)
    assert p1.size == 8 and p1.h == pytest.approx(1.0)
    p3 = partition(curve, 3)
    assert p3.size == 32
    assert np.diff(p3.breakpoints).sum() == pytest.approx(8.0)
    # every corner of the L-shape is a breakpoint of the coarsest partition
    assert set(np.round(curve.corners(), 12)) <= set(np.round(p1.breakpoints, 12))


def test_curve_points(curve):
    assert np.allclose(curve.point([0.0, 1.0, 2.0, 4.0, 7.0, 8.0]),
                       [[0, 0], [0, -1], [1, -1], [1, 1], [-1, 0], [0, 0]])
    assert curve.inside(1.5)


def test_curve_validation():
    with pytest.raises(ValueError):
        bd.BoundaryCurve([(0, 0), (0, 1), (1, 1), (1, 0)])   # clockwise
    with pytest.raises(ValueError):
        bd.BoundaryCurve([(0, 0), (1, 0)])
    with pytest.raises(ValueError):
        bd.make_partition(bd.BoundaryCurve([(0, 0), (1, 0), (0, 1)]), 8, 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2 ** 31))
def test_prolongation_preserves_values(level, seed):
    from fdafem.testproblem import LShapeProblem

    c = LShapeProblem().curve
    rng = np.random.default_rng(seed)
    chi = bd.MultiplierFn(partition(c, level), rng.normal(size=8 * 2 ** (level - 1)))
    fine = bd.prolongate(chi)
    s = rng.uniform(0, 8, 200)
    assert fine.level == level + 1
    assert np.array_equal(fine(s), chi(s))
    assert fine.l2_norm() == pytest.approx(chi.l2_norm(), rel=1e-13)
    assert np.array_equal(bd.prolongate_to(chi, level + 3)(s), chi(s))


def test_project_l2_reproduces_constants_and_averages(curve):
    p = partition(curve, 3)
    assert np.allclose(bd.project_l2(lambda s: np.full_like(s, 2.5), p).coefficients, 2.5)
    mid = 0.5 * (p.breakpoints[:-1] + p.breakpoints[1:])
    assert np.allclose(bd.project_l2(lambda s: 3 * s - 1, p).coefficients, 3 * mid - 1)


def test_project_l2_exact_multiplier_vs_quad_oracle(problem, curve):
    p = partition(curve, 6)
    got = dg.lambda_projection(problem, p).coefficients
    # cells at the corner: mean of -(2/3) r^(-1/3) over (0, h) is -h^(-1/3); at the
    # seam s -> 8 arc lengths below eps * 8 are unrepresentable, hence 1e-9
    assert got[0] == pytest.approx(-p.h ** (-1 / 3), rel=1e-12)
    assert got[-1] == pytest.approx(-p.h ** (-1 / 3), rel=1e-9)
    edges = p.breakpoints
    sing = set(problem.lambda_breakpoints) | {0.0, 8.0}
    for k in range(1, p.size - 1, 7):
        a, b = edges[k], edges[k + 1]
        pts = [x for x in sing if a < x < b]
        val, _ = integrate.quad(problem.lam, a, b, points=pts or None, limit=10_000,
                                epsabs=1e-14, epsrel=1e-13)
        assert got[k] == pytest.approx(val / p.h, rel=1e-10, abs=1e-12)


@pytest.mark.parametrize("kind", ["haar", "cdf13"])
@pytest.mark.parametrize("level", [1, 2, 4, 6])
def test_transforms_are_mutually_inverse(curve, rng, kind, level):
    H = bd.HaarPreconditioner(partition(curve, level), kind)
    v = rng.normal(size=H.size)
    assert np.allclose(H.inverse_synthesis(H.synthesis(v)), v, atol=1e-12, rtol=0)
    assert np.allclose(H.synthesis(H.inverse_synthesis(v)), v, atol=1e-12, rtol=0)
    assert np.allclose(H.inverse_analysis(H.analysis(v)), v, atol=1e-12, rtol=0)
    assert np.allclose(H.analysis(H.inverse_analysis(v)), v, atol=1e-12, rtol=0)
    T = H.matrix_T()
    w = rng.normal(size=H.size)
    # analysis is the transpose of synthesis
    assert H.analysis(w) @ v == pytest.approx(w @ H.synthesis(v), rel=1e-12)
    assert np.allclose(T @ v, H.synthesis(v), atol=1e-13)


@pytest.mark.parametrize("kind", ["haar", "cdf13"])
def test_quadratic_forms_spd_and_mutually_inverse(curve, rng, kind):
    p = partition(curve, 5)
    H = bd.HaarPreconditioner(p, kind)
    T = H.matrix_T()
    Minv = T @ T.T
    M = np.column_stack([H.apply(e)[0] for e in np.eye(H.size)])
    assert np.allclose(Minv, Minv.T, atol=1e-12)
    assert np.allclose(M, M.T, rtol=1e-12, atol=1e-12 * np.abs(M).max())
    assert np.linalg.eigvalsh(Minv).min() > 0
    assert np.linalg.eigvalsh(0.5 * (M + M.T)).min() > 0
    assert np.allclose(M @ Minv, np.eye(H.size), atol=1e-10)
    r = rng.normal(size=H.size)
    mu, form = H.apply_inverse(r)
    back, form2 = H.apply(mu)
    assert np.allclose(back, r, atol=1e-10)
    assert form == pytest.approx(form2, rel=1e-12)
    assert form == pytest.approx(r @ Minv @ r, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(-5, 5).filter(lambda a: abs(a) > 1e-3))
def test_forms_linear_and_homogeneous(seed, alpha):
    from fdafem.testproblem import LShapeProblem

    p = partition(LShapeProblem().curve, 4)
    rng = np.random.default_rng(seed)
    r, q = rng.normal(size=(2, p.size))
    mu_r, f_r = bd.precond_apply_inverse(r, p)
    mu_q, _ = bd.precond_apply_inverse(q, p)
    mu_s, f_s = bd.precond_apply_inverse(alpha * r + q, p)
    assert np.allclose(mu_s, alpha * mu_r + mu_q, atol=1e-10)
    assert bd.precond_apply_inverse(alpha * r, p)[1] == pytest.approx(alpha ** 2 * f_r, rel=1e-11)
    assert bd.precond_apply(alpha * r, p) == pytest.approx(alpha ** 2 * bd.precond_apply(r, p),
                                                           rel=1e-11)


def test_wavelet_l2_norm_scaling(curve):
    # a level-l wavelet has unit H^{-1/2} coefficient and L2 norm 2^{l/2}
    H = bd.HaarPreconditioner(partition(curve, 7), "haar")
    T = H.matrix_T()
    h = H.partition.h
    pos = 8
    for lev in range(1, 7):
        n = 8 * 2 ** (lev - 1)
        norms = np.sqrt(h * np.sum(T[:, pos:pos + n] ** 2, axis=0))
        assert np.all(norms >= 2 ** (lev / 2) / 2) and np.all(norms <= 2 * 2 ** (lev / 2))
        pos += n


def test_cdf13_wavelets_have_vanishing_moments(curve):
    H = bd.HaarPreconditioner(partition(curve, 6), "cdf13")
    T = H.matrix_T()
    mid = 0.5 * (H.partition.breakpoints[:-1] + H.partition.breakpoints[1:])
    # a level-3 wavelet away from the periodic seam
    col = T[:, 8 + 8 + 16 + 20]
    for m in range(3):
        exact = np.sum(col * ((mid + H.partition.h / 2) ** (m + 1)
                              - (mid - H.partition.h / 2) ** (m + 1)) / (m + 1))
        assert abs(exact) < 1e-9 * np.abs(col).max()


def test_unknown_wavelet_and_shape_errors(curve):
    with pytest.raises(ValueError):
        bd.HaarPreconditioner(partition(curve, 2), "db4")
    H = bd.HaarPreconditioner(partition(curve, 2))
    with pytest.raises(ValueError):
        H.synthesis(np.zeros(3))


def test_norm_of_coarse_function_is_reference_invariant(curve, rng):
    chi = bd.MultiplierFn(partition(curve, 3), rng.normal(size=32))
    vals = [bd.h_minus_half_norm(chi, r) for r in (3, 5, 8, 9)]
    assert np.allclose(vals, vals[0], rtol=1e-12)


@pytest.mark.parametrize("I", [3, 5, 8])
def test_h_minus_half_saturation(problem, curve, I):
    # norm of the projected exact multiplier at reference levels I+2 and I+3
    zero = bd.MultiplierFn(partition(curve, I))
    a = dg.multiplier_error(zero, problem, I + 2)
    b = dg.multiplier_error(zero, problem, I + 3)
    assert abs(a - b) <= 0.02 * b


def test_multiplier_json(curve):
    chi = bd.MultiplierFn(partition(curve, 1), np.arange(8.0))
    assert '"level": 1' in chi.to_json()
    with pytest.raises(ValueError):
        bd.MultiplierFn(partition(curve, 1), np.zeros(3))

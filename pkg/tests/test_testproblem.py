import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdafem import diagnostics as dg
from fdafem import femcore as fc
from fdafem.mesh import criss_cross_box
from fdafem.testproblem import R_IN, R_OUT, cutoff, in_physical

from conftest import partition


def test_solution_values(problem):
    # r = 1/8 on the positive x axis: phi = 0, alpha = pi/3, h = 1
    assert problem.u(0.125, 0.0) == pytest.approx(0.125 ** (2 / 3) * math.sin(math.pi / 3),
                                                  rel=1e-14)
    assert problem.u(-0.3, -0.2) == 0.0
    assert problem.u(0.9, 0.0) == 0.0  # beyond the cutoff
    # vanishes on both legs through the corner
    assert problem.u(0.0, -0.3) == pytest.approx(0.0, abs=1e-15)
    assert problem.u(-0.3, 0.0) == pytest.approx(0.0, abs=1e-15)


def test_forcing_support(problem, rng):
    r = rng.uniform(0, R_IN, 200)
    phi = rng.uniform(-np.pi / 2, np.pi, 200)
    assert np.all(problem.f(r * np.cos(phi), r * np.sin(phi)) == 0.0)
    r = rng.uniform(R_OUT, 1.4, 200)
    assert np.all(problem.f(r * np.cos(phi), r * np.sin(phi)) == 0.0)


def test_forcing_bounded(problem):
    x, y = np.meshgrid(np.linspace(-1.5, 1.5, 601), np.linspace(-1.5, 1.5, 601))
    v = problem.f(x, y)
    assert np.isfinite(v).all() and np.abs(v).max() < 100


@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(-0.49 * np.pi, 0.99 * np.pi))
def test_gradient_vs_finite_differences(r, phi):
    from fdafem.testproblem import LShapeProblem

    pb = LShapeProblem()
    if min(abs(r - R_IN), abs(r - R_OUT)) < 1e-3:
        return
    x, y = r * math.cos(phi), r * math.sin(phi)
    if not in_physical(x, y) or min(abs(x), abs(y)) < 1e-3:
        return
    h = 1e-6
    fd = np.array([(pb.u(x + h, y) - pb.u(x - h, y)) / (2 * h),
                   (pb.u(x, y + h) - pb.u(x, y - h)) / (2 * h)])
    g = pb.grad_u(x, y)
    assert np.linalg.norm(g - fd) <= 1e-5 * max(np.linalg.norm(g), 1e-3)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.01, 0.99))
def test_multiplier_vs_normal_derivative(t):
    from fdafem.testproblem import LShapeProblem

    pb = LShapeProblem()
    h = 1e-6
    # leg 0 runs down the y axis; the outward normal of the physical domain is -x
    s = t
    y = -s
    # second-order one-sided difference into the domain
    dn2 = -(4 * pb.u(h, y) - pb.u(2 * h, y) - 3 * pb.u(0.0, y)) / (2 * h)
    if abs(s - R_IN) < 1e-3 or abs(s - R_OUT) < 1e-3:
        return
    assert dn2 == pytest.approx(pb.lam(s), rel=1e-5, abs=1e-9)
    # last leg runs along the negative x axis toward the corner; outward normal -y
    s2 = 8.0 - t
    x = -t
    dn3 = -(4 * pb.u(x, h) - pb.u(x, 2 * h) - 3 * pb.u(x, 0.0)) / (2 * h)
    assert dn3 == pytest.approx(pb.lam(s2), rel=1e-5, abs=1e-9)


def test_multiplier_support(problem):
    s = np.linspace(1.0, 7.0, 101)
    assert np.all(problem.lam(s) == 0.0)
    assert problem.lam(0.1) < 0 and problem.lam(7.9) < 0


@pytest.mark.parametrize("r0", [R_IN, R_OUT])
def test_cutoff_is_C1_across_kinks(r0):
    for d in (0, 1):
        left = cutoff(r0 - 1e-9, d)
        right = cutoff(r0 + 1e-9, d)
        assert abs(left - right) < 1e-7
    # derivatives against finite differences away from the kinks
    r = np.linspace(R_IN + 0.01, R_OUT - 0.01, 50)
    h = 1e-6
    assert np.allclose(cutoff(r, 1), (cutoff(r + h) - cutoff(r - h)) / (2 * h), rtol=1e-5,
                       atol=1e-8)
    assert np.allclose(cutoff(r, 2), (cutoff(r + h, 1) - cutoff(r - h, 1)) / (2 * h),
                       rtol=1e-5, atol=1e-6)
    with pytest.raises(ValueError):
        cutoff(0.5, 3)


def test_forcing_matches_laplacian(problem, rng):
    # -Laplace u by a five-point stencil at interior points of the annulus
    h = 1e-4
    for _ in range(20):
        r = rng.uniform(R_IN + 0.02, R_OUT - 0.02)
        phi = rng.uniform(-np.pi / 2 + 0.1, np.pi - 0.1)
        x, y = r * np.cos(phi), r * np.sin(phi)
        if min(abs(x), abs(y)) < 0.01:
            continue
        lap = (problem.u(x + h, y) + problem.u(x - h, y) + problem.u(x, y + h)
               + problem.u(x, y - h) - 4 * problem.u(x, y)) / h ** 2
        assert -lap == pytest.approx(float(problem.f(x, y)), rel=1e-5, abs=1e-5)


def test_norm_constants(problem):
    assert problem.f_norm() == pytest.approx(9.384943184180026, rel=1e-12)
    assert problem.u_h1_seminorm() == pytest.approx(1.1835922678700892, rel=1e-12)


def test_consistency_under_uniform_refinement(problem, curve):
    chi = dg.lambda_projection(problem, partition(curve, 9))
    f = problem.volume_data()
    tau = criss_cross_box()
    for _ in range(2):
        tau.uniform_refine()
    errs = []
    for _ in range(4):
        tau.uniform_refine()
        cg_ = fc.intersect_curve_mesh(tau, curve, chi.partition)
        errs.append(dg.h1_error(fc.solve(tau, f, chi, cg_), problem))
    assert all(b < a for a, b in zip(errs[:-1], errs[1:]))
    assert errs[-1] < 0.5 * errs[0]

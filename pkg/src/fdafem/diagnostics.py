"""Error estimators, exact errors, rate fitting and the Schur-complement study."""

from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from . import boundary as bd
from .femcore import (_trace_values, assemble_stiffness, curve_load, intersect_curve_mesh,
                      solve_system)


@dataclass
class ErrorBreakdown:
    E_outer: float
    E_Uzawa: float
    E_inner: float
    E_outer_alt: float = float("nan")


@dataclass
class SpectralReport:
    n_sigma: int
    n_tri: int
    kappa_S: float
    kappa_MS: float
    rho_MinvS: float
    rho_MSinv: float
    lam_S: tuple = ()


# ----------------------------------------------------------------------
# localized H^{1/2} seminorm


def _P(k, c, ell):
    """int_0^ell Y^k ln(c + Y) dY for k = 0, 1."""
    Z1 = c + ell
    if k == 0:
        return xlogy(Z1, Z1) - xlogy(c, c) - ell
    F2 = lambda Z: 0.5 * xlogy(Z * Z, Z) - 0.25 * Z * Z
    F1 = lambda Z: xlogy(Z, Z) - Z
    return F2(Z1) - F2(c) - c * (F1(Z1) - F1(c))


def _Q(k, c, ell):
    """int_0^ell Y^k / (c + Y) dY for k = 0, 1, 2 (c > 0; limits at c = 0 for k >= 1)."""
    pos = c > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        q0 = np.where(pos, np.log1p(ell / np.where(pos, c, 1.0)), np.inf)
        cq0 = np.where(pos, c * q0, 0.0)
    if k == 0:
        return q0
    if k == 1:
        return ell - cq0
    return 0.5 * ell * ell - c * ell + c * cq0


def pair_seminorm_sq(x, w):
    """|w|^2_{H^{1/2}} on an interval for continuous piecewise-linear w.

    ``x`` are increasing nodes, ``w`` nodal values. Closed form of
    ``int int (w(a) - w(b))^2 / (a - b)^2``.
    """
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    ell = np.diff(x)
    slope = np.diff(w) / ell
    total = float(np.sum(slope ** 2 * ell ** 2))
    n = len(ell)
    if n < 2:
        return total
    p, q = np.triu_indices(n, 1)
    l1, l2 = ell[p], ell[q]
    b1, b2 = slope[p], slope[q]
    gap = x[q] - x[p + 1]
    Delta = w[q] - w[p + 1]
    E = Delta - b1 * gap
    dlt = b2 - b1
    t1 = b1 * b1 * l1 * l2
    t2 = 2 * b1 * (E * (_P(0, gap + l1, l2) - _P(0, gap, l2))
                   + dlt * (_P(1, gap + l1, l2) - _P(1, gap, l2)))
    with np.errstate(invalid="ignore"):
        t3a = np.where(E == 0, 0.0, E * E * (_Q(0, gap, l2) - _Q(0, gap + l1, l2)))
        t3b = np.where(E == 0, 0.0, 2 * E * dlt * (_Q(1, gap, l2) - _Q(1, gap + l1, l2)))
    t3c = dlt * dlt * (_Q(2, gap, l2) - _Q(2, gap + l1, l2))
    return total + 2.0 * float(np.sum(t1 + t2 + t3a + t3b + t3c))


def _curve_mismatch(u, g, cg_):
    """Nodes (arc length) and values of w = g - u at the piece ends; piece sigma ids."""
    u0, _ = _trace_values(u, cg_)
    s = cg_.s0
    w = -u0
    if g is not None:
        w = w + np.asarray(g(s), dtype=float)
    return s, w


def faermann_outer(u, g, partition, cg_):
    """Square root of the sum of pair seminorms over adjacent interval pairs.

    ``g`` is sampled at the piece ends and interpolated linearly, which is
    exact for piecewise-linear data.
    """
    cg_.check(u.tau, partition)
    s, w = _curve_mismatch(u, g, cg_)
    L = partition.curve.length
    n = partition.size
    start = np.searchsorted(cg_.sigma, np.arange(n + 1))
    S = np.append(s, L)
    W = np.append(w, w[0])
    total = 0.0
    for k in range(n):
        if k + 1 < n:
            xs = S[start[k]:start[k + 2] + 1]
            ws = W[start[k]:start[k + 2] + 1]
        else:
            xs = np.concatenate([S[start[k]:], S[1:start[1] + 1] + L])
            ws = np.concatenate([W[start[k]:], W[1:start[1] + 1]])
        total += pair_seminorm_sq(xs - xs[0], ws)
    return float(np.sqrt(total))


def alt_outer_estimate(u, g, partition, cg_, dg=None):
    """2^(-i/2) * ||g - u||_{H^1(gamma)} using the piecewise-linear interpolant of w."""
    cg_.check(u.tau, partition)
    s, w = _curve_mismatch(u, g, cg_)
    s = np.append(s, partition.curve.length)
    w = np.append(w, w[0])
    ell = np.diff(s)
    dw = np.diff(w)
    l2 = np.sum(ell * (w[:-1] ** 2 + w[:-1] * w[1:] + w[1:] ** 2) / 3.0)
    h1 = np.sum(dw ** 2 / ell)
    return float(2.0 ** (-partition.level / 2.0) * np.sqrt(l2 + h1))


def uzawa_error(r, partition):
    _, form = bd.precond_apply_inverse(r, partition)
    return float(np.sqrt(max(form, 0.0)))


def inner_error(fld):
    return fld.scaled


# ----------------------------------------------------------------------
# exact errors


def h1_error(u, problem):
    """|u_exact - u_h|_{H^1} from exact per-triangle gradient moments."""
    tau = u.tau
    from .femcore import _tid_cached

    mom = _tid_cached(tau, ("grad-moments", id(problem)), 3, problem.gradient_moments)
    gh = u.gradients()
    area = tau.areas
    val = mom[:, 2] - 2.0 * np.sum(gh * mom[:, :2], axis=1) + area * np.sum(gh * gh, axis=1)
    return float(np.sqrt(max(val.sum(), 0.0)))


def lambda_projection(problem, partition):
    cache = problem._lambda_proj
    key = (partition.n0, partition.level)
    if key not in cache:
        cache[key] = bd.project_l2(problem.lam, partition, breakpoints=problem.lambda_breakpoints,
                                   singular=problem.lambda_singular)
    return cache[key]


def multiplier_error(lam, problem, ref_level):
    ref = bd.make_partition(lam.partition.curve, lam.partition.n0, ref_level)
    mu = lambda_projection(problem, ref).coefficients - bd.prolongate_to(lam, ref_level).coefficients
    return float(np.sqrt(max(bd.precond_apply(mu, ref), 0.0)))


def exact_errors(u, lam, problem, ref_level):
    return h1_error(u, problem), multiplier_error(lam, problem, ref_level)


# ----------------------------------------------------------------------
# rates


def fit_rate(points, skip=3):
    """Least-squares slope of log(err) against -log(N) after dropping ``skip`` points."""
    pts = [(float(n), float(e)) for n, e in points][skip:]
    pts = [(n, e) for n, e in pts if n > 0 and e > 0 and np.isfinite(e)]
    if len(pts) < 2:
        raise ValueError("need at least two usable points")
    N, err = np.array(pts).T
    slope = np.polyfit(-np.log(N), np.log(err), 1)[0]
    return float(slope)


# ----------------------------------------------------------------------
# Schur complement conditioning

# triangles meeting the curve get diameter below LBB_FACTOR * |I|
LBB_FACTOR = 0.25


def lbb_mesh(tau, curve, partition, factor=LBB_FACTOR, max_rounds=60):
    """Refine triangles meeting the curve until their diameter is below factor*|I|."""
    target = factor * partition.h
    for _ in range(max_rounds):
        cg_ = intersect_curve_mesh(tau, curve, partition)
        P = tau.points[tau.triangles[np.unique(cg_.tpos)]]
        diam = np.max(np.linalg.norm(P - np.roll(P, 1, axis=1), axis=2), axis=1)
        bad = np.unique(cg_.tpos)[diam >= target]
        if len(bad) == 0:
            return tau
        tau.refine(np.unique(tau.triangles[bad]))
    raise RuntimeError("sizing rule not reached")


def schur_matrix(tau, partition, cg_):
    """Dense S = B A^{-1} B^T with B_{k,z} = int_{I_k} phi_z ds."""
    n = partition.size
    free = tau.free_vertices
    B = np.empty((n, len(free)))
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        B[k] = curve_load(tau, e, cg_)[free]
    X = np.column_stack([solve_system(tau, B[k]) for k in range(n)])
    S = B @ X
    return S


def schur_spectrum(level, curve, n0=8, factor=LBB_FACTOR, base_mesh=None, wavelet=None):
    from .mesh import criss_cross_box

    partition = bd.make_partition(curve, n0, level)
    tau = base_mesh.copy() if base_mesh is not None else criss_cross_box()
    lbb_mesh(tau, curve, partition, factor)
    cg_ = intersect_curve_mesh(tau, curve, partition)
    S = schur_matrix(tau, partition, cg_)
    asym = np.linalg.norm(S - S.T) / np.linalg.norm(S)
    Ss = 0.5 * (S + S.T)
    ev = np.linalg.eigvalsh(Ss)
    T = bd.preconditioner(partition, wavelet).matrix_T()
    evp = np.linalg.eigvalsh(T.T @ Ss @ T)
    rep = SpectralReport(partition.size, tau.n_triangles, ev[-1] / ev[0], evp[-1] / evp[0],
                         evp[-1], 1.0 / evp[0], (ev[0], ev[-1]))
    rep.asymmetry = asym
    return rep

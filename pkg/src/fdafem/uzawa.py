"""Nested inexact preconditioned Uzawa driver.

Outer iteration ``i`` works with the multiplier partition of level ``i``.
Each of its ``K`` inner steps runs the adaptive solver with tolerance
``L * zeta^(-i)`` on the mesh carried over from the previous step and then
applies the damped preconditioned Richardson update
``lambda <- lambda + beta * M^{-1} r`` with ``r_k = int_{I_k} (g - u) ds``.
"""

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import boundary as bd
from . import diagnostics as diag
from .afem import afem
from .femcore import as_forcing, boundary_residual
from .mesh import criss_cross_box
from .quadrature import gauss_legendre


@dataclass
class UzawaParams:
    """Knobs of the nested Uzawa iteration."""

    K: int = 6
    beta: float = 2.5
    Lbar: float = 0.1
    zeta: float = math.sqrt(2.0)
    theta: float = 0.1
    I: int = 8
    n0: int = 8
    c_upp: float = 1.0  # multiplies the scaled estimator in the afem stopping test

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise ValueError("K must be a positive integer")
        if int(self.I) != self.I or self.I < 1:
            raise ValueError("I must be a positive integer")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if not self.zeta > 1:
            raise ValueError("zeta must exceed 1")
        if not 0 < self.theta < 1:
            raise ValueError("theta must lie in (0, 1)")
        if not self.Lbar > 0:
            raise ValueError("Lbar must be positive")
        if not self.c_upp > 0:
            raise ValueError("c_upp must be positive")
        if int(self.n0) != self.n0 or self.n0 < 2:
            raise ValueError("n0 must be an integer >= 2")
        self.K, self.I, self.n0 = int(self.K), int(self.I), int(self.n0)

    def to_dict(self):
        return asdict(self)


@dataclass
class UzawaRow:
    """State after inner step ``j`` of outer iteration ``i``.

    ``chi`` is the multiplier fed to the inner solver (the iterate before
    the update) and ``lam`` the updated one.  The estimators and exact
    errors refer to ``u`` computed with ``chi``.
    """

    i: int
    j: int
    n_tri: int
    n_sigma: int
    mesh_version: int
    afem_rounds: int
    n_marked: int
    tolerance: float
    E_outer: float
    E_Uzawa: float
    E_inner: float
    E_outer_alt: float
    e_u: float = float("nan")
    e_lambda: float = float("nan")
    chi: np.ndarray = field(default=None, repr=False)
    lam: np.ndarray = field(default=None, repr=False)

    @property
    def refined(self):
        return self.afem_rounds > 0


@dataclass
class UzawaTrace:
    params: UzawaParams
    rows: list = field(default_factory=list)
    L: float = float("nan")
    final_mesh: object = None
    final_lambda: object = None
    final_u: object = None
    marked_total: int = 0
    n_bottom: int = 0

    def last_rows(self):
        """Rows with ``j = K``, one per outer iteration."""
        return [r for r in self.rows if r.j == self.params.K]

    def refinement_table(self):
        """``{i: [j, ...]}`` listing the inner steps in which afem refined."""
        out = {}
        for r in self.rows:
            out.setdefault(r.i, [])
            if r.refined:
                out[r.i].append(r.j)
        return out


def g_h1_norm(g, dg_ds, curve, n_gauss=8, pieces=8, step=1e-6):
    """||g||_{H^1(gamma)} by composite Gauss between corners.

    Without ``dg_ds`` the tangential derivative is taken by central
    differences; the Gauss points lie strictly inside each straight leg.
    """
    if g is None:
        return 0.0
    if dg_ds is None:
        def dg_ds(s):
            return (np.asarray(g(s + step), float) - np.asarray(g(s - step), float)) / (2 * step)
    total = 0.0
    cum = curve.cum
    for a, b in zip(cum[:-1], cum[1:]):
        edges = np.linspace(a, b, pieces + 1)
        for lo, hi in zip(edges[:-1], edges[1:]):
            x, w = gauss_legendre(n_gauss, lo, hi)
            gv = np.asarray(g(x), dtype=float)
            dv = np.asarray(dg_ds(x), dtype=float)
            total += float(np.sum(w * (gv ** 2 + dv ** 2)))
    return math.sqrt(total)


def compute_tolerance(i, f_norm, g_norm, Lbar, zeta):
    """Inner tolerance ``Lbar * (||f|| + ||g||_{H^1}) * zeta^(-i)``."""
    if f_norm < 0 or g_norm < 0:
        raise ValueError("norms must be nonnegative")
    return Lbar * (f_norm + g_norm) * zeta ** (-i)


def run_uzawa(f, g, curve, params=None, problem=None, tau0=None, g_norm=None,
              ref_level=None, exact=True, progress=None, dg=None):
    """Run the nested inexact Uzawa iteration.

    Parameters
    ----------
    f : forcing accepted by :func:`fdafem.femcore.as_forcing`
        Must expose ``norm()`` (the L2 norm used in the tolerance).
    g : callable or None
        Dirichlet data as a function of arc length.
    curve : BoundaryCurve
    params : UzawaParams
    problem : object, optional
        Supplies exact ``u`` and ``lambda``; enables ``e_u`` and ``e_lambda``.
    tau0 : Triangulation, optional
        Starting mesh (default: criss-cross box); refined in place.
    g_norm : float, optional
        ``||g||_{H^1(gamma)}``; computed from ``g`` and ``dg`` if omitted.
    ref_level : int, optional
        Reference level for ``e_lambda`` (default ``I + 2``).
    exact : bool
        Evaluate exact errors on every row when ``problem`` is given.
    progress : callable, optional
        Called with each finished row.
    dg : callable, optional
        Tangential derivative of ``g``.
    """
    params = params or UzawaParams()
    forcing = as_forcing(f)
    f_norm = forcing.norm()
    if f_norm is None:
        raise ValueError("forcing must provide its L2 norm")
    if g_norm is None:
        g_norm = g_h1_norm(g, dg, curve)
    L = params.Lbar * (f_norm + g_norm)
    if not L > 0:
        raise ValueError("f and g vanish; nothing to solve")
    ref_level = ref_level if ref_level is not None else params.I + 2
    tau = tau0 if tau0 is not None else criss_cross_box()
    trace = UzawaTrace(params, L=L, n_bottom=tau.n_triangles)

    lam = bd.MultiplierFn(bd.make_partition(curve, params.n0, 1))
    for i in range(1, params.I + 1):
        if i > 1:
            lam = bd.prolongate(lam)
        partition = lam.partition
        tol = compute_tolerance(i, f_norm, g_norm, params.Lbar, params.zeta)
        for j in range(1, params.K + 1):
            res = afem(tau, forcing, lam, tol, params.theta, curve, partition, inplace=True,
                       c_upp=params.c_upp)
            trace.marked_total += res.marked_total
            u, cg_ = res.u, res.cg
            r = boundary_residual(u, g, partition, cg_)
            step, form = bd.precond_apply_inverse(r, partition)
            row = UzawaRow(
                i=i, j=j, n_tri=tau.n_triangles, n_sigma=partition.size,
                mesh_version=tau.version, afem_rounds=res.rounds, n_marked=res.marked_total,
                tolerance=tol,
                E_outer=diag.faermann_outer(u, g, partition, cg_),
                E_Uzawa=float(np.sqrt(max(form, 0.0))),
                E_inner=diag.inner_error(res.field),
                E_outer_alt=diag.alt_outer_estimate(u, g, partition, cg_),
                chi=lam.coefficients.copy(),
            )
            if problem is not None and exact:
                row.e_u, row.e_lambda = diag.exact_errors(u, lam, problem, ref_level)
            lam = bd.MultiplierFn(partition, lam.coefficients + params.beta * step)
            row.lam = lam.coefficients.copy()
            trace.rows.append(row)
            trace.final_u = u
            if progress is not None:
                progress(row)
    trace.final_mesh = tau
    trace.final_lambda = lam
    return trace


def uzawa_rates(trace, skip=3):
    """Fitted rates on the ``j = K`` rows.

    ``e_u`` and ``E_inner`` are fitted against ``#tau``, the multiplier
    quantities against ``#sigma``.
    """
    from .report import rates_from_rows, uzawa_row_dicts

    return rates_from_rows(uzawa_row_dicts(trace), trace.params.K, skip)

"""P1 Galerkin solver on the box with volume and curve data.

The discrete problem is ``a(U, v) = (f, v) + (chi, v)_gamma`` for all hat
functions ``v`` on the free (interior) vertices; ``U`` vanishes on the box
boundary.  The curve enters only through :class:`CouplingGeometry`, a list
of straight pieces of ``gamma`` each lying in one triangle and one interval
of the multiplier partition.
"""

import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg, splu

from .mesh import MeshError
from .quadrature import dunavant4, gauss_legendre, subdivide_barycentric

# sparse LU below this many unknowns, Jacobi-preconditioned CG above
SOLVER_OPTIONS = {"rtol": 1e-10, "direct_limit": 200_000}


class SolverError(RuntimeError):
    """Linear solve failed to reach the requested residual."""


# ----------------------------------------------------------------------
# volume data


def _tid_cached(tau, key, width, compute):
    """Per-triangle-id values, computed once per triangle of the forest."""
    store = tau._persistent.get(key)
    n_all = tau._tri.n
    if store is None:
        store = [np.zeros((0, width)), np.zeros(0, bool)]
        tau._persistent[key] = store
    if len(store[1]) < n_all:
        grow = n_all - len(store[1])
        store[0] = np.vstack([store[0], np.zeros((grow, width))])
        store[1] = np.concatenate([store[1], np.zeros(grow, bool)])
    ids = tau.active_ids
    todo = ids[~store[1][ids]]
    if len(todo):
        P = tau._xy.view()[tau._tri.view()[todo]]
        store[0][todo] = compute(P)
        store[1][todo] = True
    return store[0][ids]


class MomentForcing:
    """Volume data given by a routine returning per-triangle moments.

    ``moments(P)`` maps corners (n, 3, 2) to ``[int f phi_i, int f^2 phi_i]``
    for i = 0, 1, 2, shape (n, 6).
    """

    def __init__(self, moments, pointwise=None, norm=None):
        self._moments = moments
        self.pointwise = pointwise
        self._norm = norm
        self.key = ("forcing", id(self))

    def moments(self, tau):
        return _tid_cached(tau, self.key, 6, self._moments)

    def norm(self):
        if self._norm is None:
            raise ValueError("L2 norm of the forcing is unknown")
        return self._norm


class CallableForcing(MomentForcing):
    """Pointwise forcing integrated with the 6-point degree-4 rule.

    Triangles selected by ``flag(P)`` (for example those crossing a known
    discontinuity) use the rule on a ``depth``-fold uniform subdivision.
    """

    def __init__(self, f, flag=None, depth=1, norm=None):
        self.f = f
        self.flag = flag
        self.depth = depth
        super().__init__(self._compute, pointwise=f, norm=norm)

    def _rule_moments(self, P, pts, wts):
        d1 = P[:, 1] - P[:, 0]
        d2 = P[:, 2] - P[:, 0]
        area = 0.5 * np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        X = np.einsum("qk,nkd->nqd", pts, P)
        fv = np.asarray(self.f(X[..., 0], X[..., 1]), dtype=float).reshape(X.shape[:2])
        wf = fv * wts * area[:, None]
        return np.column_stack([wf @ pts, (wf * fv) @ pts])

    def _compute(self, P):
        pts, wts = dunavant4()
        out = self._rule_moments(P, pts, wts)
        if self.flag is not None and self.depth > 0:
            sel = np.asarray(self.flag(P), bool)
            if sel.any():
                sp_, sw = subdivide_barycentric(pts, wts, self.depth)
                out[sel] = self._rule_moments(P[sel], sp_, sw)
        return out


class ZeroForcing(MomentForcing):
    def __init__(self):
        super().__init__(lambda P: np.zeros((len(P), 6)), pointwise=lambda x, y: np.zeros_like(x), norm=0.0)


def as_forcing(f):
    if f is None or (np.isscalar(f) and f == 0):
        return ZeroForcing()
    if isinstance(f, MomentForcing):
        return f
    if callable(f):
        return CallableForcing(f)
    raise TypeError("forcing must be None, 0, a callable or a MomentForcing")


# ----------------------------------------------------------------------
# functions on the mesh


@dataclass
class FemFn:
    """Continuous P1 function, zero on the box boundary."""

    tau: object
    values: np.ndarray  # at tau.free_vertices
    version: int = -1

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.tau.free_vertices),):
            raise ValueError("one value per free vertex required")
        if self.version < 0:
            self.version = self.tau.version

    def nodal(self):
        out = np.zeros(self.tau.n_vertices)
        out[self.tau.free_vertices] = self.values
        return out

    def gradients(self):
        """Constant gradient on every active triangle, shape (n, 2)."""
        G, _ = _shape_gradients(self.tau)
        return np.einsum("tkd,tk->td", G, self.nodal()[self.tau.triangles])

    def energy(self):
        return float(np.sum(self.tau.areas * np.sum(self.gradients() ** 2, axis=1)))

    def __call__(self, x, y):
        """Point evaluation by brute-force location (small inputs only)."""
        pts = np.atleast_2d(np.column_stack([np.ravel(x), np.ravel(y)]))
        P = self.tau.points[self.tau.triangles]
        vals = self.nodal()[self.tau.triangles]
        out = np.empty(len(pts))
        for k, p in enumerate(pts):
            bary = _barycentric(P, np.broadcast_to(p, (len(P), 2)))
            t = int(np.argmax(bary.min(axis=1)))
            out[k] = bary[t] @ vals[t]
        return out.reshape(np.shape(x))

    def to_json(self):
        return json.dumps({"values": self.nodal().tolist()})

    @classmethod
    def from_nodal(cls, tau, nodal):
        return cls(tau, np.asarray(nodal, float)[tau.free_vertices])

    @classmethod
    def zero(cls, tau):
        return cls(tau, np.zeros(len(tau.free_vertices)))


def _barycentric(P, X):
    J = np.stack([P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]], axis=2)
    l12 = np.linalg.solve(J, (X - P[:, 0])[..., None])[..., 0]
    return np.column_stack([1.0 - l12.sum(axis=1), l12])


def _shape_gradients(tau):
    c = tau._cache.get("shape_grad")
    if c is None:
        P = tau.points[tau.triangles]
        area = tau.areas
        if np.any(area <= 0):
            raise MeshError("degenerate triangle")
        G = np.empty((len(P), 3, 2))
        for i in range(3):
            a = P[:, (i + 1) % 3]
            b = P[:, (i + 2) % 3]
            e = b - a
            G[:, i, 0] = -e[:, 1] / (2 * area)
            G[:, i, 1] = e[:, 0] / (2 * area)
        c = (G, area)
        tau._cache["shape_grad"] = c
    return c


# ----------------------------------------------------------------------
# stiffness and solve


def local_stiffness(P):
    """P1 stiffness matrices for corners P (n, 3, 2)."""
    P = np.asarray(P, dtype=float)
    area = 0.5 * ((P[:, 1, 0] - P[:, 0, 0]) * (P[:, 2, 1] - P[:, 0, 1])
                  - (P[:, 1, 1] - P[:, 0, 1]) * (P[:, 2, 0] - P[:, 0, 0]))
    if np.any(np.abs(area) <= 0):
        raise MeshError("degenerate triangle")
    G = np.empty((len(P), 3, 2))
    for i in range(3):
        e = P[:, (i + 2) % 3] - P[:, (i + 1) % 3]
        G[:, i, 0] = -e[:, 1] / (2 * area)
        G[:, i, 1] = e[:, 0] / (2 * area)
    return np.abs(area)[:, None, None] * np.einsum("tid,tjd->tij", G, G)


def assemble_full_stiffness(tau):
    """Stiffness over all vertices, no boundary elimination (CSR)."""
    c = tau._cache.get("K_full")
    if c is None:
        tris = tau.triangles
        Kl = local_stiffness(tau.points[tris])
        rows = np.repeat(tris, 3, axis=1).ravel()
        cols = np.tile(tris, (1, 3)).ravel()
        n = tau.n_vertices
        c = sp.csr_matrix((Kl.ravel(), (rows, cols)), shape=(n, n))
        tau._cache["K_full"] = c
    return c


def assemble_stiffness(tau):
    """Stiffness restricted to free vertices (CSR, SPD)."""
    c = tau._cache.get("A")
    if c is None:
        K = assemble_full_stiffness(tau)
        free = tau.free_vertices
        c = K[free][:, free].tocsr()
        tau._cache["A"] = c
    return c


def _factor(tau):
    c = tau._cache.get("lu")
    if c is None:
        c = splu(assemble_stiffness(tau).tocsc())
        tau._cache["lu"] = c
    return c


def solve_system(tau, rhs, rtol=None, direct_limit=None):
    """Solve with the free-vertex stiffness; the relative residual is always checked."""
    rtol = SOLVER_OPTIONS["rtol"] if rtol is None else rtol
    direct_limit = SOLVER_OPTIONS["direct_limit"] if direct_limit is None else direct_limit
    A = assemble_stiffness(tau)
    rhs = np.asarray(rhs, dtype=float)
    nrm = np.linalg.norm(rhs)
    if nrm == 0:
        return np.zeros_like(rhs)
    if A.shape[0] <= direct_limit:
        x = _factor(tau).solve(rhs)
    else:
        d = A.diagonal()
        M = sp.diags(1.0 / d)
        # iterate a decade past the target so the true residual check passes
        x, info = cg(A, rhs, rtol=0.1 * rtol, atol=0.0, maxiter=20 * A.shape[0], M=M)
        if info != 0:
            raise SolverError(f"conjugate gradients did not converge (info={info})")
    res = np.linalg.norm(rhs - A @ x) / nrm
    if res > rtol:
        raise SolverError(f"relative residual {res:.2e} exceeds {rtol:.0e}")
    return x


# ----------------------------------------------------------------------
# curve coupling


@dataclass
class CouplingGeometry:
    """Pieces of the curve, each inside one triangle and one partition interval."""

    version: int
    mesh_id: int
    level: int
    n_sigma: int
    tid: np.ndarray  # host triangle id
    tpos: np.ndarray  # index into tau.triangles
    sigma: np.ndarray  # partition interval index
    s0: np.ndarray
    s1: np.ndarray
    x0: np.ndarray  # (n, 2)
    x1: np.ndarray
    bary0: np.ndarray  # (n, 3) w.r.t. host vertices
    bary1: np.ndarray
    verts: np.ndarray  # (n, 3) host vertex ids

    @property
    def length(self):
        return self.s1 - self.s0

    def check(self, tau, partition=None):
        if tau.version != self.version or id(tau) != self.mesh_id:
            raise ValueError("coupling geometry does not match the mesh")
        if partition is not None and partition.size != self.n_sigma:
            raise ValueError("coupling geometry does not match the partition")


def intersect_curve_mesh(tau, curve, partition, tol=1e-12):
    """Split ``curve`` at triangle edges, corners and partition breakpoints."""
    key = ("cg", partition.n0, partition.level, id(curve))
    c = tau._cache.get(key)
    if c is not None:
        return c
    pts = tau.points
    tris = tau.triangles
    P = pts[tris]
    lo = P.min(axis=1)
    hi = P.max(axis=1)
    span = np.ptp(pts, axis=0).max()
    eps = tol * span
    box_lo, box_hi = pts.min(axis=0), pts.max(axis=0)
    if np.any(curve.vertices <= box_lo + eps) or np.any(curve.vertices >= box_hi - eps):
        raise MeshError("curve is not strictly inside the mesh")
    h = partition.h
    sig_bp = partition.breakpoints
    out = {k: [] for k in ("tpos", "s0", "s1", "t0", "t1", "leg")}
    for k in range(curve.n_legs):
        a, b, s_start = curve.leg(k)
        d = b - a
        ell = float(np.hypot(*d))
        tol_t = eps / ell
        cand = np.flatnonzero(np.all(lo <= np.maximum(a, b) + eps, axis=1)
                              & np.all(hi >= np.minimum(a, b) - eps, axis=1))
        Q = P[cand]
        t_in = np.zeros(len(cand))
        t_out = np.ones(len(cand))
        for i in range(3):
            E = Q[:, (i + 1) % 3] - Q[:, i]
            lenE = np.hypot(E[:, 0], E[:, 1])
            w = a - Q[:, i]
            num = E[:, 0] * w[:, 1] - E[:, 1] * w[:, 0]
            den = E[:, 0] * d[1] - E[:, 1] * d[0]
            # legs running along an edge are accepted within the snap tolerance
            par = np.abs(den) <= 1e-13 * lenE * ell
            with np.errstate(divide="ignore", invalid="ignore"):
                q = -num / den
            t_in = np.where(~par & (den > 0), np.maximum(t_in, q), t_in)
            t_out = np.where(~par & (den < 0), np.minimum(t_out, q), t_out)
            t_out = np.where(par & (num < -eps * lenE), -1.0, t_out)
        keep = t_out - t_in > tol_t
        cand, t_in, t_out = cand[keep], t_in[keep], t_out[keep]
        sb = (sig_bp[(sig_bp > s_start) & (sig_bp < s_start + ell)] - s_start) / ell
        bp = np.concatenate([[0.0, 1.0], sb, t_in, t_out])
        prio = np.concatenate([np.ones(2 + len(sb)), np.zeros(2 * len(t_in))])
        inside = (bp >= 0) & (bp <= 1)
        bp, prio = bp[inside], prio[inside]
        order = np.argsort(bp, kind="stable")
        bp, prio = bp[order], prio[order]
        # snap clusters of near-equal breakpoints onto one exact representative
        cluster = np.concatenate([[0], np.cumsum(np.diff(bp) > 4 * tol_t)])
        pick = np.lexsort((-prio, cluster))
        first = np.concatenate([[True], cluster[pick][1:] != cluster[pick][:-1]])
        bp = np.sort(bp[pick][first])
        mid = 0.5 * (bp[:-1] + bp[1:])
        k0 = np.searchsorted(mid, t_in, side="left")
        k1 = np.searchsorted(mid, t_out, side="right")
        cnt = np.maximum(k1 - k0, 0)
        owner = np.repeat(np.arange(len(cand)), cnt)
        piece = np.repeat(k0, cnt) + (np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt))
        host = np.full(len(mid), np.iinfo(np.int64).max)
        np.minimum.at(host, piece, cand[owner])
        if np.any(host == np.iinfo(np.int64).max):
            raise MeshError("curve piece without host triangle")
        out["tpos"].append(host)
        out["t0"].append(bp[:-1])
        out["t1"].append(bp[1:])
        out["s0"].append(s_start + bp[:-1] * ell)
        out["s1"].append(s_start + bp[1:] * ell)
        out["leg"].append(np.full(len(mid), k))
    tpos = np.concatenate(out["tpos"])
    s0 = np.concatenate(out["s0"])
    s1 = np.concatenate(out["s1"])
    legs = np.concatenate(out["leg"])
    t0 = np.concatenate(out["t0"])
    t1 = np.concatenate(out["t1"])
    A = curve.vertices[legs]
    B = np.roll(curve.vertices, -1, axis=0)[legs]
    x0 = A + t0[:, None] * (B - A)
    x1 = A + t1[:, None] * (B - A)
    Ph = P[tpos]
    sig = np.minimum((0.5 * (s0 + s1) / h).astype(np.int64), partition.size - 1)
    c = CouplingGeometry(
        version=tau.version, mesh_id=id(tau), level=partition.level, n_sigma=partition.size,
        tid=tau.active_ids[tpos], tpos=tpos, sigma=sig, s0=s0, s1=s1, x0=x0, x1=x1,
        bary0=_barycentric(Ph, x0), bary1=_barycentric(Ph, x1), verts=tris[tpos])
    tau._cache[key] = c
    return c


# ----------------------------------------------------------------------
# right-hand sides and curve functionals


def curve_load(tau, chi_coef, cg_):
    """Full-vertex vector of int_gamma chi phi_z ds."""
    coef = np.asarray(chi_coef, dtype=float)[cg_.sigma] * cg_.length
    w = 0.5 * (cg_.bary0 + cg_.bary1) * coef[:, None]
    return np.bincount(cg_.verts.ravel(), weights=w.ravel(), minlength=tau.n_vertices)


def volume_load(tau, forcing):
    m = forcing.moments(tau)
    return np.bincount(tau.triangles.ravel(), weights=m[:, :3].ravel(), minlength=tau.n_vertices)


def assemble_load(tau, f, chi, cg_, full=False):
    """Load vector ``(f, phi_z) + (chi, phi_z)_gamma`` over free vertices."""
    forcing = as_forcing(f)
    b = volume_load(tau, forcing)
    if chi is not None:
        cg_.check(tau, chi.partition)
        b = b + curve_load(tau, chi.coefficients, cg_)
    return b if full else b[tau.free_vertices]


def solve(tau, f, chi, cg_, rtol=None):
    """Galerkin approximation on ``tau`` for volume data ``f`` and multiplier ``chi``."""
    rhs = assemble_load(tau, f, chi, cg_)
    return FemFn(tau, solve_system(tau, rhs, rtol=rtol))


def _trace_values(u, cg_):
    cg_.check(u.tau)
    nod = u.nodal()[cg_.verts]
    return np.sum(cg_.bary0 * nod, axis=1), np.sum(cg_.bary1 * nod, axis=1)


def boundary_residual(u, g, partition, cg_, n_gauss=4):
    """r_k = int_{I_k} (g - u) ds for every partition interval."""
    cg_.check(u.tau, partition)
    u0, u1 = _trace_values(u, cg_)
    ell = cg_.length
    r = -0.5 * ell * (u0 + u1)
    if g is not None:
        xg, wg = gauss_legendre(n_gauss, 0.0, 1.0)
        s = cg_.s0[:, None] + ell[:, None] * xg
        r = r + ell * (np.asarray(g(s), dtype=float) @ wg)
    return np.bincount(cg_.sigma, weights=r, minlength=partition.size)


class CurveTrace:
    """Continuous piecewise-linear function of arc length."""

    def __init__(self, s, values, length):
        self.s = np.asarray(s, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.length = float(length)

    def __call__(self, s):
        s = np.mod(np.asarray(s, dtype=float), self.length)
        return np.interp(s, self.s, self.values)


def trace_on_curve(u, cg_):
    u0, u1 = _trace_values(u, cg_)
    s = np.concatenate([cg_.s0, cg_.s1[-1:]])
    vals = np.concatenate([u0, u1[-1:]])
    return CurveTrace(s, vals, cg_.s1[-1])


def trace_jumps(u, cg_):
    """Mismatch of the trace at consecutive piece ends (continuity check)."""
    u0, u1 = _trace_values(u, cg_)
    return np.abs(u1 - np.roll(u0, -1))

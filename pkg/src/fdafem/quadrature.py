"""Quadrature rules on the reference triangle and on intervals."""

import numpy as np


def _sym_points(a):
    b = 1.0 - 2.0 * a
    return [(a, a, b), (a, b, a), (b, a, a)]


def dunavant4():
    """6-point rule, exact for polynomials of degree 4.

    Returns barycentric points (n, 3) and weights summing to one.
    """
    a1, w1 = 0.445948490915965, 0.223381589678011
    a2, w2 = 0.091576213509771, 0.109951743655322
    pts = np.array(_sym_points(a1) + _sym_points(a2))
    wts = np.array([w1] * 3 + [w2] * 3)
    return pts, wts


def radon7():
    """7-point rule, exact for polynomials of degree 5."""
    s = np.sqrt(15.0)
    a1, w1 = (6.0 - s) / 21.0, (155.0 - s) / 1200.0
    a2, w2 = (6.0 + s) / 21.0, (155.0 + s) / 1200.0
    pts = np.array([(1 / 3, 1 / 3, 1 / 3)] + _sym_points(a1) + _sym_points(a2))
    wts = np.array([9.0 / 40.0] + [w1] * 3 + [w2] * 3)
    return pts, wts


def subdivide_barycentric(pts, wts, depth):
    """Repeat a barycentric rule over the 4**depth uniform red subtriangles."""
    # corners of subtriangles in barycentric coordinates of the parent
    tris = [np.eye(3)]
    for _ in range(depth):
        nxt = []
        for c in tris:
            m01 = 0.5 * (c[0] + c[1])
            m12 = 0.5 * (c[1] + c[2])
            m20 = 0.5 * (c[2] + c[0])
            nxt += [np.array([c[0], m01, m20]), np.array([m01, c[1], m12]),
                    np.array([m20, m12, c[2]]), np.array([m12, m20, m01])]
        tris = nxt
    corners = np.array(tris)  # (m, 3, 3)
    sub = np.einsum("qk,mkj->mqj", pts, corners).reshape(-1, 3)
    w = np.tile(wts, len(tris)) / len(tris)
    return sub, w


def gauss_legendre(n, a=0.0, b=1.0):
    """Gauss-Legendre nodes and weights on [a, b]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


def _ray_interval(P, e):
    """Radial extent [lo, hi] of rays with directions ``e`` inside CCW triangles ``P``.

    P : (n, 3, 2), e : (n, 2). Returns arrays lo, hi (empty where hi <= lo).
    """
    lo = np.zeros(len(P))
    hi = np.full(len(P), np.inf)
    for i in range(3):
        a = P[:, i]
        E = P[:, (i + 1) % 3] - a
        ce = E[:, 0] * e[:, 1] - E[:, 1] * e[:, 0]
        cp = E[:, 0] * a[:, 1] - E[:, 1] * a[:, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            q = cp / ce
        pos = ce > 0
        neg = ce < 0
        lo = np.where(pos, np.maximum(lo, q), lo)
        hi = np.where(neg, np.minimum(hi, q), hi)
        # ray parallel to an edge: inside only if the origin side is inside
        hi = np.where(~pos & ~neg & (cp > 0), -1.0, hi)
    return lo, hi


def _circle_angles(P, radii):
    """Polar angles of edge/circle intersections, NaN where absent. Shape (n, 6*len(radii))."""
    out = []
    for i in range(3):
        a = P[:, i]
        d = P[:, (i + 1) % 3] - a
        A = np.einsum("ij,ij->i", d, d)
        B = 2.0 * np.einsum("ij,ij->i", a, d)
        for R in radii:
            C = np.einsum("ij,ij->i", a, a) - R * R
            disc = B * B - 4.0 * A * C
            sq = np.sqrt(np.where(disc > 0, disc, np.nan))
            for t in ((-B - sq) / (2 * A), (-B + sq) / (2 * A)):
                ok = (t > 0) & (t < 1)
                x = a + np.where(ok, t, np.nan)[:, None] * d
                out.append(np.arctan2(x[:, 1], x[:, 0]))
    return np.column_stack(out)


def _foot_angles(P):
    """Angles of the points on each edge closest to the origin (NaN at edge ends)."""
    out = []
    for i in range(3):
        a = P[:, i]
        d = P[:, (i + 1) % 3] - a
        t = -np.einsum("ij,ij->i", a, d) / np.einsum("ij,ij->i", d, d)
        ok = (t > 0) & (t < 1)
        x = a + np.where(ok, t, np.nan)[:, None] * d
        out.append(np.arctan2(x[:, 1], x[:, 0]))
    return np.column_stack(out)


def polar_sector_integrals(P, integrand, n_out, bands, phi_range, n_phi=8, n_rad=8,
                           n_sub=2, max_angle=np.pi / 96, chunk=4000):
    """Integrate over ``T ∩ {phi_lo < phi < phi_hi, r in band}`` for each triangle.

    Polar coordinates are centred at the origin with phi from ``arctan2``.
    The angular range is split at vertex angles and at edge crossings of
    every band radius, so the integrand only has to be smooth on each
    annular band. The radial variable is mapped by ``r = t**3`` which makes
    r^(-1/3)-type singularities at the origin harmless.

    Parameters
    ----------
    P : (n, 3, 2) counterclockwise triangle corners
    integrand : callable(x, y, r, phi, bary) -> (m, n_out) array
    n_out : number of integrand components
    bands : sequence of (r_lo, r_hi)
    phi_range : (phi_lo, phi_hi) with -pi <= phi_lo < phi_hi <= pi
    n_sub, max_angle : every angular piece is split into at least ``n_sub``
        parts, each no wider than ``max_angle``

    Returns
    -------
    (n, n_out) array of integrals.

    Notes
    -----
    Accuracy relies on the origin being a vertex of the triangle or lying
    at a distance from every edge line comparable to the edge length, as
    is the case on shape-regular meshes having the origin as a vertex.
    """
    P = np.asarray(P, dtype=float)
    n = len(P)
    xg, wg = gauss_legendre(n_phi, 0.0, 1.0)
    xr, wr = gauss_legendre(n_rad, 0.0, 1.0)
    phi_lo, phi_hi = phi_range
    radii = sorted({r for b in bands for r in b if r > 0})
    results = []
    for start in range(0, n, chunk):
        Q = P[start:start + chunk]
        m = len(Q)
        vang = np.arctan2(Q[..., 1], Q[..., 0])
        vang[np.hypot(Q[..., 0], Q[..., 1]) < 1e-14] = np.nan
        bp = np.column_stack([np.full(m, phi_lo), np.full(m, phi_hi), vang,
                              _circle_angles(Q, radii), _foot_angles(Q)])
        bp = np.where(np.isnan(bp), phi_hi, np.clip(bp, phi_lo, phi_hi))
        bp.sort(axis=1)
        a, b = bp[:, :-1], bp[:, 1:]
        keep = (b - a) > 1e-14
        tri_idx = np.broadcast_to(np.arange(m)[:, None], a.shape)[keep]
        a, b = a[keep], b[keep]
        # at least n_sub pieces per angular interval, none wider than max_angle
        cnt = np.maximum(n_sub, np.ceil((b - a) / max_angle)).astype(np.int64)
        first = np.repeat(np.cumsum(cnt) - cnt, cnt)
        k = np.arange(cnt.sum()) - first
        width = np.repeat((b - a) / cnt, cnt)
        a = np.repeat(a, cnt) + k * width
        b = a + width
        tri_idx = np.repeat(tri_idx, cnt)
        # angular nodes
        ti = np.repeat(tri_idx, n_phi)
        phi = (a[:, None] + (b - a)[:, None] * xg).ravel()
        wphi = ((b - a)[:, None] * wg).ravel()
        e = np.column_stack([np.cos(phi), np.sin(phi)])
        lo, hi = _ray_interval(Q[ti], e)
        Tm = Q[ti]
        J = np.stack([Tm[:, 1] - Tm[:, 0], Tm[:, 2] - Tm[:, 0]], axis=2)  # columns
        Jinv = np.linalg.inv(J)
        acc = np.zeros((m, n_out))
        for r_lo, r_hi in bands:
            r0 = np.maximum(lo, r_lo)
            r1 = np.minimum(hi, r_hi)
            ok = r1 > r0
            if not ok.any():
                continue
            t0 = np.cbrt(r0[ok])
            t1 = np.cbrt(r1[ok])
            t = t0[:, None] + (t1 - t0)[:, None] * xr
            rho = t ** 3
            # area element rho drho dphi with drho = 3 t^2 dt
            w = wphi[ok][:, None] * (t1 - t0)[:, None] * wr * 3.0 * t ** 2 * rho
            ph = np.broadcast_to(phi[ok][:, None], rho.shape)
            x = rho * np.cos(ph)
            y = rho * np.sin(ph)
            rel = np.stack([x, y], axis=2) - Tm[ok][:, None, 0, :]
            l12 = np.einsum("qij,qpj->qpi", Jinv[ok], rel)
            bary = np.concatenate([1.0 - l12.sum(axis=2, keepdims=True), l12], axis=2)
            vals = integrand(x.ravel(), y.ravel(), rho.ravel(), ph.ravel(), bary.reshape(-1, 3))
            vals = np.asarray(vals).reshape(rho.size, -1)
            contrib = vals * w.reshape(-1, 1)
            owner = np.repeat(ti[ok], n_rad)
            for c in range(n_out):
                acc[:, c] += np.bincount(owner, weights=contrib[:, c], minlength=m)
        results.append(acc)
    if not results:
        return np.zeros((0, n_out))
    return np.vstack(results)

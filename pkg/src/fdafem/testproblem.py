"""Manufactured L-shaped test problem inside the box (-1.5, 1.5)^2.

The physical domain is ``(-1, 1)^2`` minus the closed lower-left quadrant.
With polar coordinates around the reentrant corner, ``phi`` in
``[-pi/2, pi]``, the exact solution is ``u = h(r) v`` with the harmonic
``v = r^(2/3) sin(2/3 (phi + pi/2))`` and a C^1 cutoff ``h`` that equals one
for ``r <= 1/4`` and vanishes for ``r >= 3/4``.  ``u`` is zero outside the
physical domain and ``g = 0`` on its boundary.

Multiplier sign convention: the variational problem is
``a(u, v) = (f, v) + (lambda, v)_gamma``, so ``lambda`` is the outward
normal derivative of ``u`` taken from inside the physical domain.  On the
two legs through the corner this is ``-(2/3) h(r) r^(-1/3)``.
"""

import numpy as np
from scipy import integrate

from .boundary import BoundaryCurve
from .quadrature import polar_sector_integrals

R_IN, R_OUT = 0.25, 0.75
PHI_LO, PHI_HI = -0.5 * np.pi, np.pi
BOX = 1.5
L_VERTICES = [(0.0, 0.0), (0.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0), (-1.0, 0.0)]


def cutoff(r, deriv=0):
    """h(r) = w(3/4 - r) / (w(r - 1/4) + w(3/4 - r)) with w(t) = t^2 for t > 0.

    ``deriv`` in {0, 1, 2}; the second derivative jumps at r = 1/4 and 3/4.
    """
    r = np.asarray(r, dtype=float)
    a = R_OUT - r
    b = r - R_IN
    mid = (b > 0) & (a > 0)
    N = a * a
    D = a * a + b * b
    Np = -2.0 * a
    Dp = 2.0 * (b - a)
    with np.errstate(divide="ignore", invalid="ignore"):
        if deriv == 0:
            val = np.where(mid, N / D, np.where(r <= R_IN, 1.0, 0.0))
        elif deriv == 1:
            val = np.where(mid, (Np * D - N * Dp) / D ** 2, 0.0)
        elif deriv == 2:
            num = Np * D - N * Dp
            val = np.where(mid, (2.0 * D - 4.0 * N) / D ** 2 - 2.0 * Dp * num / D ** 3, 0.0)
        else:
            raise ValueError("deriv must be 0, 1 or 2")
    return val


def _polar(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    y = np.where(y == 0, 0.0, y)  # drop signed zeros so phi(-x, 0) = pi
    return np.hypot(x, y), np.arctan2(y, x)


def in_physical(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    box = (np.abs(x) < 1) & (np.abs(y) < 1)
    return box & ~((x <= 0) & (y <= 0))


def _radial_forcing(r):
    """R with f = -sin(alpha) R(r), alpha = 2/3 (phi + pi/2)."""
    h1 = cutoff(r, 1)
    h2 = cutoff(r, 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = (4.0 / 3.0) * h1 * r ** (-1.0 / 3.0) + (h2 + h1 / r) * r ** (2.0 / 3.0)
    return np.where((r > R_IN) & (r < R_OUT), val, 0.0)


class LShapeProblem:
    """Exact data of the L-shaped benchmark.

    Attributes
    ----------
    curve : BoundaryCurve
        Counterclockwise boundary starting at the reentrant corner.
    half_width : float
        Half side of the fictitious box.
    """

    kink_radii = (R_IN, R_OUT)

    def __init__(self):
        self.curve = BoundaryCurve(L_VERTICES)
        self.half_width = BOX
        self._f_moment_cache = {}
        self._grad_moment_cache = {}
        self._lambda_proj = {}
        self._f_norm = None

    # -- pointwise evaluators -------------------------------------------

    def u(self, x, y):
        r, phi = _polar(x, y)
        inside = in_physical(x, y) & (phi >= PHI_LO)
        alpha = (2.0 / 3.0) * (phi + 0.5 * np.pi)
        val = cutoff(r) * r ** (2.0 / 3.0) * np.sin(alpha)
        return np.where(inside, val, 0.0)

    def grad_u(self, x, y):
        """Gradient of u, shape (..., 2); zero outside the physical domain."""
        r, phi = _polar(x, y)
        inside = in_physical(x, y) & (phi >= PHI_LO) & (r > 0)
        gr, gphi = self._grad_polar(r, phi)
        c, s = np.cos(phi), np.sin(phi)
        gx = np.where(inside, gr * c - gphi * s, 0.0)
        gy = np.where(inside, gr * s + gphi * c, 0.0)
        return np.stack([gx, gy], axis=-1)

    def _grad_polar(self, r, phi):
        alpha = (2.0 / 3.0) * (phi + 0.5 * np.pi)
        h = cutoff(r)
        h1 = cutoff(r, 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            rm = np.where(r > 0, r ** (-1.0 / 3.0), 0.0)
        gr = h1 * r ** (2.0 / 3.0) * np.sin(alpha) + h * (2.0 / 3.0) * rm * np.sin(alpha)
        gphi = h * (2.0 / 3.0) * rm * np.cos(alpha)
        return gr, gphi

    def eval_exact(self, x, y):
        return self.u(x, y), self.grad_u(x, y)

    def f(self, x, y):
        r, phi = _polar(x, y)
        inside = in_physical(x, y) & (phi >= PHI_LO)
        alpha = (2.0 / 3.0) * (phi + 0.5 * np.pi)
        return np.where(inside, -np.sin(alpha) * _radial_forcing(r), 0.0)

    eval_f = f

    def lam(self, s):
        """Exact multiplier as a function of arc length."""
        s = np.mod(np.asarray(s, dtype=float), self.curve.length)
        L = self.curve.length
        r = np.where(s <= 1.0, s, np.where(s >= L - 1.0, L - s, np.inf))
        with np.errstate(divide="ignore", invalid="ignore"):
            val = -(2.0 / 3.0) * cutoff(r) * r ** (-1.0 / 3.0)
        return np.where(np.isfinite(r) & (r > 0), val, 0.0)

    eval_lambda = lam

    def g(self, s):
        return np.zeros_like(np.asarray(s, dtype=float))

    def dg(self, s):
        return np.zeros_like(np.asarray(s, dtype=float))

    @property
    def lambda_breakpoints(self):
        L = self.curve.length
        return (R_IN, R_OUT, L - R_OUT, L - R_IN)

    @property
    def lambda_singular(self):
        return (0.0,)

    # -- norms ------------------------------------------------------------

    def f_norm(self):
        """L2 norm of f from its separable polar form."""
        if self._f_norm is None:
            val, _ = integrate.quad(lambda r: _radial_forcing(r) ** 2 * r, R_IN, R_OUT,
                                    epsabs=0, epsrel=1e-13, limit=200)
            self._f_norm = float(np.sqrt(0.75 * np.pi * val))
        return self._f_norm

    def g_h1_norm(self):
        return 0.0

    def u_h1_seminorm(self):
        def dens(r):
            h = cutoff(r)
            h1 = cutoff(r, 1)
            a = h1 * r ** (2.0 / 3.0) + (2.0 / 3.0) * h * r ** (-1.0 / 3.0)
            b = (2.0 / 3.0) * h * r ** (-1.0 / 3.0)
            return (a * a + b * b) * r
        val = sum(integrate.quad(dens, lo, hi, epsabs=0, epsrel=1e-13, limit=200)[0]
                  for lo, hi in ((0.0, R_IN), (R_IN, R_OUT)))
        return float(np.sqrt(0.75 * np.pi * val))

    # -- per-triangle moments (exact geometry) -----------------------------

    def _touching(self, P, r_lo, r_hi):
        """Triangles that can meet the annular sector r_lo < r < r_hi."""
        rad = np.hypot(P[..., 0], P[..., 1])
        far = rad.max(axis=1) > r_lo
        # distance from the origin to each triangle
        dmin = rad.min(axis=1)
        for i in range(3):
            a = P[:, i]
            d = P[:, (i + 1) % 3] - a
            t = np.clip(-np.einsum("ij,ij->i", a, d) / np.einsum("ij,ij->i", d, d), 0, 1)
            dmin = np.minimum(dmin, np.hypot(*(a + t[:, None] * d).T))
        return far & (dmin < r_hi)

    def forcing_moments(self, P):
        """Per triangle: int f*phi_i (3 values) and int f^2*phi_i (3 values)."""
        P = np.asarray(P, dtype=float)
        out = np.zeros((len(P), 6))
        sel = self._touching(P, R_IN, R_OUT)
        if sel.any():
            def integrand(x, y, r, phi, bary):
                alpha = (2.0 / 3.0) * (phi + 0.5 * np.pi)
                fv = -np.sin(alpha) * _radial_forcing(r)
                return np.column_stack([fv[:, None] * bary, (fv * fv)[:, None] * bary])
            out[sel] = polar_sector_integrals(P[sel], integrand, 6, [(R_IN, R_OUT)],
                                              (PHI_LO, PHI_HI))
        return out

    def gradient_moments(self, P):
        """Per triangle: int grad u (2 values) and int |grad u|^2."""
        P = np.asarray(P, dtype=float)
        out = np.zeros((len(P), 3))
        sel = self._touching(P, 0.0, R_OUT)
        if sel.any():
            def integrand(x, y, r, phi, bary):
                gr, gphi = self._grad_polar(r, phi)
                c, s = np.cos(phi), np.sin(phi)
                gx = gr * c - gphi * s
                gy = gr * s + gphi * c
                return np.column_stack([gx, gy, gx * gx + gy * gy])
            out[sel] = polar_sector_integrals(P[sel], integrand, 3,
                                              [(0.0, R_IN), (R_IN, R_OUT)], (PHI_LO, PHI_HI))
        return out

    def volume_data(self):
        """Forcing in the form consumed by :mod:`fdafem.femcore`."""
        from .femcore import MomentForcing
        return MomentForcing(self.forcing_moments, pointwise=self.f, norm=self.f_norm())

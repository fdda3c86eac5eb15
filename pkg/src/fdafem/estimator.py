"""Vertex-patch residual estimator and Doerfler marking.

For every vertex ``z`` of the mesh (box-boundary vertices included)

* ``j(z)^2``   = sum over interior edges at ``z`` of ``|e|^2 [grad U . n]^2``,
* ``dO(z)^2``  = ``|omega_z| * int f^2 phi_z``,
* ``dG(z)^2``  = ``|omega_z|^(1/2) * int_gamma chi^2 phi_z``,

with ``|omega_z|`` the largest triangle area in the patch of ``z``.
"""

from dataclasses import dataclass

import numpy as np

from .femcore import as_forcing

SCALE = np.sqrt(2.0) / 6.0


@dataclass
class EstimatorField:
    j2: np.ndarray
    dO2: np.ndarray
    dG2: np.ndarray

    @property
    def e2(self):
        return self.j2 + self.dO2 + self.dG2

    @property
    def e(self):
        return np.sqrt(self.e2)

    @property
    def total(self):
        """Unscaled aggregate over all vertices."""
        return float(np.sqrt(self.e2.sum()))

    @property
    def scaled(self):
        """Aggregate used in stopping tests (times sqrt(2)/6)."""
        return SCALE * self.total

    @property
    def J(self):
        return float(np.sqrt(self.j2.sum()))

    @property
    def D_omega(self):
        return float(np.sqrt(self.dO2.sum()))

    @property
    def D_gamma(self):
        return float(np.sqrt(self.dG2.sum()))

    @property
    def D(self):
        return float(np.sqrt(self.dO2.sum() + self.dG2.sum()))

    def subset(self, vertices):
        """Unscaled aggregate restricted to ``vertices``."""
        return float(np.sqrt(self.e2[np.asarray(list(vertices), dtype=np.int64)].sum()))


def jump_squares(tau, nodal):
    """Per-vertex sum of squared scaled normal jumps over incident interior edges."""
    from .femcore import _shape_gradients

    G, _ = _shape_gradients(tau)
    grads = np.einsum("tkd,tk->td", G, np.asarray(nodal)[tau.triangles])
    ed = tau.interior_edges()
    pa = tau.points[ed.vertices[:, 0]]
    pb = tau.points[ed.vertices[:, 1]]
    t = pb - pa
    diff = grads[ed.triangles[:, 0]] - grads[ed.triangles[:, 1]]
    # |e| n = t rotated, so |e|^2 (diff . n)^2 = (diff . perp(t))^2
    val = (diff[:, 0] * t[:, 1] - diff[:, 1] * t[:, 0]) ** 2
    out = np.bincount(ed.vertices[:, 0], weights=val, minlength=tau.n_vertices)
    out += np.bincount(ed.vertices[:, 1], weights=val, minlength=tau.n_vertices)
    return out


def estimate(U, f, chi, tau, cg_):
    """Indicators for the Galerkin function ``U`` (any P1 function on ``tau``)."""
    if U.tau is not tau or U.version != tau.version:
        raise ValueError("function does not live on this mesh")
    nodal = U.nodal()
    j2 = jump_squares(tau, nodal)
    weight = tau.patch_weights()
    mom = as_forcing(f).moments(tau)
    f2 = np.bincount(tau.triangles.ravel(), weights=mom[:, 3:].ravel(), minlength=tau.n_vertices)
    dO2 = weight * f2
    if chi is not None:
        cg_.check(tau, chi.partition)
        c2 = chi.coefficients[cg_.sigma] ** 2 * cg_.length
        w = 0.5 * (cg_.bary0 + cg_.bary1) * c2[:, None]
        g2 = np.bincount(cg_.verts.ravel(), weights=w.ravel(), minlength=tau.n_vertices)
        dG2 = np.sqrt(weight) * g2
    else:
        dG2 = np.zeros(tau.n_vertices)
    return EstimatorField(j2, dO2, np.maximum(dG2, 0.0))


def mark(indicators, theta):
    """Smallest vertex set carrying a ``theta^2`` share of the squared indicators.

    Ties are broken in favour of the smaller vertex id.
    """
    e = np.asarray(indicators, dtype=float)
    if e.size == 0:
        raise ValueError("empty indicator set")
    if not np.isfinite(e).all() or np.any(e < 0):
        raise ValueError("indicators must be finite and nonnegative")
    if not 0 < theta <= 1:
        raise ValueError("theta must lie in (0, 1]")
    e2 = e * e
    order = np.argsort(-e2, kind="stable")
    cum = np.cumsum(e2[order])
    total = cum[-1]
    if total == 0:
        return np.zeros(0, dtype=np.int64)
    n = int(np.searchsorted(cum, theta * theta * total, side="left")) + 1
    n = min(n, int(np.count_nonzero(e2)))
    return np.sort(order[:n])

"""Immersed boundary curve, dyadic partitions and the H^{-1/2} wavelet preconditioner.

Multipliers are piecewise constant on uniform arc-length partitions of a
closed polyline.  The preconditioner is ``M^{-1} = T T^T`` with ``T`` the
change of basis from a periodic Haar wavelet basis (scaled for H^{-1/2}) to
the characteristic functions of the finest intervals.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .quadrature import gauss_legendre


class BoundaryCurve:
    """Closed counterclockwise polyline parametrised by arc length.

    Parameters
    ----------
    vertices : (n, 2) array_like
        Corner points; the loop is closed implicitly. Arc length 0 sits at
        ``vertices[0]``.
    """

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise ValueError("need at least three (x, y) corners")
        if not np.isfinite(v).all():
            raise ValueError("corner coordinates must be finite")
        self.vertices = v
        seg = np.roll(v, -1, axis=0) - v
        self.seg_len = np.linalg.norm(seg, axis=1)
        if np.any(self.seg_len <= 0):
            raise ValueError("repeated corner")
        self.cum = np.concatenate([[0.0], np.cumsum(self.seg_len)])
        self.length = float(self.cum[-1])
        x, y = v[:, 0], v[:, 1]
        if 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y) <= 0:
            raise ValueError("curve must be oriented counterclockwise")

    @property
    def n_legs(self):
        return len(self.vertices)

    def leg(self, k):
        """Endpoints and starting arc length of straight piece ``k``."""
        a = self.vertices[k]
        b = self.vertices[(k + 1) % len(self.vertices)]
        return a, b, float(self.cum[k])

    def point(self, s):
        """Cartesian points at arc lengths ``s`` (taken modulo the length)."""
        s = np.mod(np.asarray(s, dtype=float), self.length)
        k = np.clip(np.searchsorted(self.cum, s, side="right") - 1, 0, self.n_legs - 1)
        t = (s - self.cum[k]) / self.seg_len[k]
        a = self.vertices[k]
        b = np.roll(self.vertices, -1, axis=0)[k]
        return a + t[..., None] * (b - a)

    def corners(self):
        return self.cum[:-1].copy()

    def inside(self, box_half_width):
        return bool(np.all(np.abs(self.vertices) < box_half_width))


@dataclass
class BoundaryPartition:
    curve: BoundaryCurve
    n0: int
    level: int

    @property
    def size(self):
        return self.n0 * 2 ** (self.level - 1)

    @property
    def h(self):
        return self.curve.length / self.size

    @property
    def breakpoints(self):
        return np.linspace(0.0, self.curve.length, self.size + 1)

    def finer(self):
        return BoundaryPartition(self.curve, self.n0, self.level + 1)


def make_partition(curve, n0, level):
    if n0 < 2:
        raise ValueError("bottom partition needs at least two intervals")
    if level < 1:
        raise ValueError("levels start at 1")
    return BoundaryPartition(curve, int(n0), int(level))


@dataclass
class MultiplierFn:
    """Piecewise constant function; one coefficient per partition interval."""

    partition: BoundaryPartition
    coefficients: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.coefficients is None:
            self.coefficients = np.zeros(self.partition.size)
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.shape != (self.partition.size,):
            raise ValueError("coefficient count must equal interval count")

    @property
    def level(self):
        return self.partition.level

    def __call__(self, s):
        s = np.mod(np.asarray(s, float), self.partition.curve.length)
        k = np.minimum((s / self.partition.h).astype(int), self.partition.size - 1)
        return self.coefficients[k]

    def l2_norm(self):
        return float(np.sqrt(self.partition.h * np.sum(self.coefficients ** 2)))

    def to_json(self):
        return json.dumps({"level": self.level, "coefficients": self.coefficients.tolist()})


def prolongate(chi):
    """Represent ``chi`` on the next finer partition (same function)."""
    return MultiplierFn(chi.partition.finer(), np.repeat(chi.coefficients, 2))


def prolongate_to(chi, level):
    if level < chi.level:
        raise ValueError("cannot prolongate to a coarser level")
    c = chi.coefficients
    for _ in range(level - chi.level):
        c = np.repeat(c, 2)
    return MultiplierFn(BoundaryPartition(chi.partition.curve, chi.partition.n0, level), c)


def _graded_pieces(a, b, at_left, at_right, ratio=0.5, depth=60):
    """Split [a, b] geometrically toward endpoints flagged as singular."""
    cuts = [a, b]
    if at_left and at_right:
        mid = 0.5 * (a + b)
        return (_graded_pieces(a, mid, True, False, ratio, depth)
                + _graded_pieces(mid, b, False, True, ratio, depth))
    if at_left:
        cuts = [a] + [a + (b - a) * ratio ** k for k in range(depth, -1, -1)]
    elif at_right:
        cuts = [b - (b - a) * ratio ** k for k in range(0, depth + 1)] + [b]
        cuts = sorted(cuts)
    return list(zip(cuts[:-1], cuts[1:]))


def project_l2(w, partition, breakpoints=(), singular=(), order=8):
    """L2(gamma) projection of ``w`` onto piecewise constants.

    ``w`` is a vectorised function of arc length.  Intervals are split at
    the curve corners and at any extra ``breakpoints``; pieces touching a
    ``singular`` arc length are graded geometrically toward it.
    """
    L = partition.curve.length
    edges = partition.breakpoints
    extra = np.concatenate([partition.curve.corners(), np.asarray(breakpoints, float)])
    extra = np.mod(extra, L)
    sing = np.mod(np.asarray(singular, float), L)
    sing = np.unique(np.concatenate([sing, sing[np.isclose(sing, 0.0)] + L]))
    xg, wg = gauss_legendre(order, 0.0, 1.0)
    tol = 1e-12 * L

    nodes, weights, owner = [], [], []
    for k in range(partition.size):
        a, b = edges[k], edges[k + 1]
        cuts = np.unique(np.concatenate([[a, b], extra[(extra > a + tol) & (extra < b - tol)]]))
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            left = np.any(np.abs(sing - lo) < tol)
            right = np.any(np.abs(sing - hi) < tol)
            for p, q in _graded_pieces(lo, hi, left, right):
                nodes.append(p + (q - p) * xg)
                weights.append((q - p) * wg)
                owner.append(np.full(order, k))
    nodes = np.concatenate(nodes)
    weights = np.concatenate(weights)
    owner = np.concatenate(owner)
    vals = np.asarray(w(nodes), dtype=float)
    if not np.isfinite(vals).all():
        raise ValueError("non-finite samples of the projected function")
    integ = np.bincount(owner, weights=vals * weights, minlength=partition.size)
    return MultiplierFn(partition, integ / partition.h)


WAVELETS = {
    # weight of the two neighbouring coarse cells in each wavelet
    "haar": 0.0,
    # piecewise constant, three vanishing moments (primal of the CDF(1,3) pair)
    "cdf13": 0.125,
}


class HaarPreconditioner:
    """Wavelet preconditioner ``M^{-1} = T T^T`` on a level-``i`` partition.

    Level-0 functions are L2(gamma)-normalised indicators of the bottom
    intervals.  A level-l wavelet (l >= 1) sits on interval k of the level-l
    partition and equals +c / -c on its two halves; for ``kind="cdf13"`` it
    also carries -c/8 on interval k-1 and +c/8 on interval k+1, which gives
    three vanishing moments.  Each wavelet is L2-normalised and scaled by
    2^(l/2).  All transforms cost O(n).
    """

    def __init__(self, partition, kind="cdf13"):
        if kind not in WAVELETS:
            raise ValueError(f"unknown wavelet {kind!r}")
        self.partition = partition
        self.kind = kind
        self.corr = WAVELETS[kind]
        self.level = partition.level
        self.n0 = partition.n0
        L = partition.curve.length
        self.length = L
        hm = {m: L / (self.n0 * 2 ** (m - 1)) for m in range(1, self.level + 1)}
        self.amp0 = hm[1] ** -0.5
        norm2 = 1.0 + 2.0 * self.corr ** 2  # squared L2 norm at unit amplitude over |I_l|
        self.amp = {l: 2 ** (l / 2) * (hm[l] * norm2) ** -0.5 for l in range(1, self.level)}

    @property
    def size(self):
        return self.partition.size

    def _check(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape != (self.size,):
            raise ValueError(f"expected vector of length {self.size}, got {v.shape}")
        return v

    def _e(self, d):
        return self.corr * (np.roll(d, 1) - np.roll(d, -1))

    def synthesis(self, coef):
        """T: wavelet coefficients -> single-scale coefficients."""
        coef = self._check(coef)
        n = self.n0
        a = self.amp0 * coef[:n]
        pos = n
        for l in range(1, self.level):
            c = self.amp[l]
            d = coef[pos:pos + len(a)]
            pos += len(a)
            e = self._e(d)
            nxt = np.empty(2 * len(a))
            nxt[0::2] = a + c * (d + e)
            nxt[1::2] = a + c * (e - d)
            a = nxt
        return a

    def analysis(self, r):
        """T^T: dual single-scale vector -> dual wavelet vector."""
        r = self._check(r).copy()
        parts = []
        for l in range(self.level - 1, 0, -1):
            c = self.amp[l]
            r0, r1 = r[0::2], r[1::2]
            s = r0 + r1
            parts.append(c * (r0 - r1) + c * self.corr * (np.roll(s, -1) - np.roll(s, 1)))
            r = s
        parts.append(self.amp0 * r)
        return np.concatenate(parts[::-1])

    def inverse_synthesis(self, a):
        """T^{-1}: single-scale coefficients -> wavelet coefficients."""
        a = self._check(a).copy()
        parts = []
        for l in range(self.level - 1, 0, -1):
            c = self.amp[l]
            f0, f1 = a[0::2], a[1::2]
            d = (f0 - f1) / (2.0 * c)
            parts.append(d)
            a = 0.5 * (f0 + f1) - c * self._e(d)
        parts.append(a / self.amp0)
        return np.concatenate(parts[::-1])

    def inverse_analysis(self, coef):
        """T^{-T}: inverse of :meth:`analysis`."""
        coef = self._check(coef)
        n = self.n0
        s = coef[:n] / self.amp0
        pos = n
        for l in range(1, self.level):
            c = self.amp[l]
            rd = coef[pos:pos + len(s)]
            pos += len(s)
            diff = (rd - c * self.corr * (np.roll(s, -1) - np.roll(s, 1))) / c
            nxt = np.empty(2 * len(s))
            nxt[0::2] = 0.5 * (s + diff)
            nxt[1::2] = 0.5 * (s - diff)
            s = nxt
        return s

    def apply_inverse(self, r):
        """Return ``M^{-1} r`` and the quadratic form ``<M^{-1} r, r>``."""
        t = self.analysis(r)
        return self.synthesis(t), float(t @ t)

    def apply(self, mu):
        """Return ``M mu`` and ``(M mu)(mu)``."""
        c = self.inverse_synthesis(mu)
        x = self.inverse_analysis(c)
        return x, float(np.asarray(mu) @ x)

    def matrix_T(self):
        return np.column_stack([self.synthesis(e) for e in np.eye(self.size)])


DEFAULT_WAVELET = "cdf13"
_PRECONDITIONERS = {}


def preconditioner(partition, kind=None):
    kind = kind or DEFAULT_WAVELET
    key = (id(partition.curve), partition.n0, partition.level, kind)
    p = _PRECONDITIONERS.get(key)
    if p is None or p.partition.curve is not partition.curve:
        p = HaarPreconditioner(partition, kind)
        _PRECONDITIONERS[key] = p
    return p


def precond_apply_inverse(r, partition, kind=None):
    return preconditioner(partition, kind).apply_inverse(r)


def precond_apply(mu, partition, kind=None):
    return preconditioner(partition, kind).apply(mu)[1]


def h_minus_half_norm(mu, reference_level=None, kind=None):
    """Wavelet-equivalent H^{-1/2}(gamma) norm of a multiplier."""
    if reference_level is not None:
        mu = prolongate_to(mu, reference_level)
    val = precond_apply(mu.coefficients, mu.partition, kind)
    return float(np.sqrt(max(val, 0.0)))

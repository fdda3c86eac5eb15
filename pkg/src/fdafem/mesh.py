"""Conforming newest-vertex-bisection triangulations of the fictitious box.

Triangles are stored as ``(v0, v1, v2)`` in counterclockwise order with ``v0``
the newest vertex, so the refinement edge is always ``(v1, v2)``.  All
triangles ever created are kept in a forest rooted at the bottom mesh; the
current triangulation is the set of active leaves.
"""

import json
from dataclasses import dataclass

import numpy as np


class MeshError(ValueError):
    """Invalid bottom mesh or inconsistent mesh operation."""


def _key(a, b):
    return (a << 32) | b if a < b else (b << 32) | a


@dataclass
class VertexPatch:
    center: int
    triangles: np.ndarray  # ids of active triangles containing the center
    edges: np.ndarray  # (m, 2) interior edges emanating from the center
    weight: float  # largest area in the patch


@dataclass
class EdgeData:
    """Interior edges with their two adjacent active triangles."""

    vertices: np.ndarray  # (m, 2), sorted within each row
    triangles: np.ndarray  # (m, 2) triangle ids


class _Grow:
    """Append-only numpy buffer with amortised doubling."""

    def __init__(self, shape_tail, dtype, fill):
        self.fill = fill
        self.data = np.full((16,) + shape_tail, fill, dtype=dtype)
        self.n = 0

    def reserve(self, k):
        need = self.n + k
        if need > len(self.data):
            cap = max(need, 2 * len(self.data))
            new = np.full((cap,) + self.data.shape[1:], self.fill, dtype=self.data.dtype)
            new[: self.n] = self.data[: self.n]
            self.data = new

    def append(self, row):
        self.reserve(1)
        self.data[self.n] = row
        self.n += 1
        return self.n - 1

    def view(self):
        return self.data[: self.n]

    def copy(self):
        g = _Grow.__new__(_Grow)
        g.fill = self.fill
        g.data = self.data[: max(self.n, 16)].copy()
        g.n = self.n
        return g


class Triangulation:
    """Conforming triangulation produced by newest vertex bisection.

    Use :func:`make_bottom_mesh` to construct one; refinement happens in place
    through :meth:`refine` or as a copy through :func:`refine`.
    """

    def __init__(self):
        self._xy = _Grow((2,), float, np.nan)
        self._vparent = _Grow((2,), np.int64, -1)
        self._vbnd = _Grow((), bool, False)
        self._tri = _Grow((3,), np.int64, -1)
        self._gen = _Grow((), np.int64, 0)
        self._parent = _Grow((), np.int64, -1)
        self._child = _Grow((2,), np.int64, -1)
        self._active = _Grow((), bool, False)
        self._edges = {}
        self._mid = {}
        self.n_bottom = 0
        self.version = 0
        self._cache = {}
        self._persistent = {}  # per-triangle-id data that survives refinement

    # ------------------------------------------------------------------
    # basic accessors

    @property
    def points(self):
        return self._xy.view()

    @property
    def n_vertices(self):
        return self._xy.n

    @property
    def active_ids(self):
        c = self._cache.get("active")
        if c is None:
            c = np.flatnonzero(self._active.view())
            self._cache["active"] = c
        return c

    @property
    def triangles(self):
        """Vertex ids of the active triangles, shape (n, 3)."""
        c = self._cache.get("tris")
        if c is None:
            c = self._tri.view()[self.active_ids]
            self._cache["tris"] = c
        return c

    @property
    def n_triangles(self):
        return len(self.active_ids)

    @property
    def generation(self):
        return self._gen.view()[self.active_ids]

    @property
    def boundary_mask(self):
        return self._vbnd.view()

    @property
    def free_vertices(self):
        c = self._cache.get("free")
        if c is None:
            c = np.flatnonzero(~self._vbnd.view())
            self._cache["free"] = c
        return c

    @property
    def areas(self):
        c = self._cache.get("areas")
        if c is None:
            p = self.points[self.triangles]
            d1 = p[:, 1] - p[:, 0]
            d2 = p[:, 2] - p[:, 0]
            c = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
            self._cache["areas"] = c
        return c

    def triangle_vertices(self, tid):
        return tuple(int(v) for v in self._tri.data[tid])

    def is_active(self, tid):
        return bool(self._active.data[tid])

    def parent_of(self, tid):
        return int(self._parent.data[tid])

    def generation_of(self, tid):
        return int(self._gen.data[tid])

    def children_of(self, tid):
        return tuple(int(c) for c in self._child.data[tid] if c >= 0)

    def copy(self):
        m = Triangulation.__new__(Triangulation)
        for name in ("_xy", "_vparent", "_vbnd", "_tri", "_gen", "_parent", "_child", "_active"):
            setattr(m, name, getattr(self, name).copy())
        m._edges = dict(self._edges)
        m._mid = dict(self._mid)
        m.n_bottom = self.n_bottom
        m.version = self.version
        m._cache = {}
        m._persistent = {k: [v[0].copy(), v[1].copy()] for k, v in self._persistent.items()}
        return m

    # ------------------------------------------------------------------
    # construction helpers

    def _add_vertex(self, x, y, boundary, parents=(-1, -1)):
        self._vparent.append(parents)
        self._vbnd.append(boundary)
        return self._xy.append((x, y))

    def _add_triangle(self, verts, gen, parent):
        t = self._tri.append(verts)
        self._gen.append(gen)
        self._parent.append(parent)
        self._child.append((-1, -1))
        self._active.append(True)
        a, b, c = verts
        for k in (_key(a, b), _key(b, c), _key(c, a)):
            self._edges[k] = self._edges.get(k, ()) + (t,)
        return t

    def _deactivate(self, t):
        self._active.data[t] = False
        a, b, c = (int(v) for v in self._tri.data[t])
        for k in (_key(a, b), _key(b, c), _key(c, a)):
            rest = tuple(s for s in self._edges[k] if s != t)
            if rest:
                self._edges[k] = rest
            else:
                del self._edges[k]

    def _touch(self):
        self.version += 1
        self._cache = {}

    # ------------------------------------------------------------------
    # bisection

    def _neighbor(self, t, key):
        for s in self._edges.get(key, ()):
            if s != t:
                return s
        return None

    def _split(self, t, m):
        v0, v1, v2 = (int(v) for v in self._tri.data[t])
        g = int(self._gen.data[t]) + 1
        self._deactivate(t)
        c0 = self._add_triangle((m, v0, v1), g, t)
        c1 = self._add_triangle((m, v2, v0), g, t)
        self._child.data[t] = (c0, c1)

    def _bisect(self, t):
        """Bisect active triangle ``t`` and whatever closure conformity needs."""
        v0, v1, v2 = (int(v) for v in self._tri.data[t])
        key = _key(v1, v2)
        nb = self._neighbor(t, key)
        if nb is not None:
            w = self._tri.data[nb]
            if _key(int(w[1]), int(w[2])) != key:
                self._bisect(nb)
                nb = self._neighbor(t, key)
                w = self._tri.data[nb]
                if _key(int(w[1]), int(w[2])) != key:
                    raise MeshError("bisection closure failed; incompatible newest vertices")
        m = self._mid.get(key)
        if m is None:
            p = self._xy.data
            x = 0.5 * (p[v1, 0] + p[v2, 0])
            y = 0.5 * (p[v1, 1] + p[v2, 1])
            m = self._add_vertex(x, y, nb is None, (min(v1, v2), max(v1, v2)))
            self._mid[key] = m
        self._split(t, m)
        if nb is not None:
            self._split(nb, m)

    def _refine_targets(self, targets):
        gen = self._gen
        child = self._child
        for t0 in sorted(int(t) for t in targets):
            goal = int(gen.data[t0]) + 2
            todo = [t0]
            while todo:
                t = todo.pop()
                if gen.data[t] >= goal:
                    continue
                if self._active.data[t]:
                    self._bisect(t)
                todo.extend(int(c) for c in child.data[t][::-1] if c >= 0)

    def refine(self, marked):
        """Refine in place so every triangle in a marked patch gets >= 4 descendants."""
        marked = np.unique(np.asarray(list(marked), dtype=np.int64))
        if marked.size == 0:
            return self
        if marked.min() < 0 or marked.max() >= self.n_vertices:
            raise MeshError("marked vertex id out of range")
        tris = self.triangles
        hit = np.isin(tris, marked).any(axis=1)
        targets = self.active_ids[hit]
        self._refine_targets(targets)
        self._touch()
        return self

    def uniform_refine(self):
        """Bisect every active triangle twice, in place."""
        self._refine_targets(self.active_ids)
        self._touch()
        return self

    # ------------------------------------------------------------------
    # queries

    def vertex_triangles(self):
        """CSR map vertex -> positions in :attr:`triangles` (offsets, indices)."""
        c = self._cache.get("v2t")
        if c is None:
            tris = self.triangles
            flat = tris.ravel()
            order = np.argsort(flat, kind="stable")
            counts = np.bincount(flat, minlength=self.n_vertices)
            offsets = np.concatenate([[0], np.cumsum(counts)])
            c = (offsets, order // 3)
            self._cache["v2t"] = c
        return c

    def patch_weights(self):
        """|omega_z| = largest triangle area touching each vertex."""
        c = self._cache.get("patchw")
        if c is None:
            c = np.zeros(self.n_vertices)
            a = np.repeat(self.areas, 3)
            np.maximum.at(c, self.triangles.ravel(), a)
            self._cache["patchw"] = c
        return c

    def interior_edges(self):
        """Edges not on the box boundary, each with its two active triangles."""
        c = self._cache.get("iedges")
        if c is None:
            tris = self.triangles
            e = np.concatenate([tris[:, [1, 2]], tris[:, [2, 0]], tris[:, [0, 1]]])
            e.sort(axis=1)
            owner = np.tile(np.arange(len(tris)), 3)
            order = np.lexsort((e[:, 1], e[:, 0]))
            e, owner = e[order], owner[order]
            same = (e[1:] == e[:-1]).all(axis=1)
            i = np.flatnonzero(same)
            c = EdgeData(e[i], np.column_stack([owner[i], owner[i + 1]]))
            self._cache["iedges"] = c
        return c

    def boundary_edges(self):
        tris = self.triangles
        e = np.concatenate([tris[:, [1, 2]], tris[:, [2, 0]], tris[:, [0, 1]]])
        e.sort(axis=1)
        u, cnt = np.unique(e, axis=0, return_counts=True)
        return u[cnt == 1]

    def patch_data(self, z):
        if not 0 <= z < self.n_vertices:
            raise MeshError(f"unknown vertex {z}")
        offsets, pos = self.vertex_triangles()
        local = pos[offsets[z]:offsets[z + 1]]
        tris = self.triangles[local]
        others = np.unique(tris[tris != z])
        inner = [(min(z, o), max(z, o)) for o in others
                 if len(self._edges.get(_key(z, int(o)), ())) == 2]
        weight = float(self.areas[local].max()) if len(local) else 0.0
        return VertexPatch(int(z), self.active_ids[local], np.array(inner, dtype=np.int64).reshape(-1, 2), weight)

    def check_conforming(self):
        """Raise MeshError unless the active triangles form a conforming mesh."""
        tris = self.triangles
        if np.any(self.areas <= 0):
            raise MeshError("non-positive triangle area")
        e = np.concatenate([tris[:, [1, 2]], tris[:, [2, 0]], tris[:, [0, 1]]])
        e.sort(axis=1)
        u, cnt = np.unique(e, axis=0, return_counts=True)
        if cnt.max() > 2:
            raise MeshError("edge shared by more than two triangles")
        bnd = u[cnt == 1]
        if not self.boundary_mask[bnd].all():
            raise MeshError("hanging vertex: unmatched interior edge")
        nv_used = len(np.unique(tris))
        if nv_used - len(u) + len(tris) != 1:
            raise MeshError("Euler characteristic violated")
        return True

    def prolongate(self, values, old_n_vertices):
        """Extend nodal values of a P1 function from an ancestor mesh."""
        out = np.empty(self.n_vertices)
        out[:old_n_vertices] = values[:old_n_vertices]
        par = self._vparent.view()
        for v in range(old_n_vertices, self.n_vertices):
            a, b = par[v]
            out[v] = 0.5 * (out[a] + out[b])
        return out

    def ancestor_in(self, tids, active_mask):
        """Map triangle ids to their ancestor that is set in ``active_mask``."""
        par = self._parent.view()
        out = np.array(tids, dtype=np.int64)
        n = len(active_mask)
        for _ in range(200):
            inside = out < n
            done = np.zeros(len(out), bool)
            done[inside] = active_mask[out[inside]]
            if done.all():
                return out
            out[~done] = par[out[~done]]
            if np.any(out < 0):
                raise MeshError("triangle is not a descendant of the given mesh")
        raise MeshError("ancestor search did not terminate")

    def to_json(self):
        tris = self.triangles
        return json.dumps({
            "vertices": self.points.tolist(),
            "triangles": [[int(a), int(b), int(c), int(g)]
                          for (a, b, c), g in zip(tris, self.generation)],
        })


def make_bottom_mesh(vertices, triangles, newest):
    """Build a generation-0 triangulation.

    Parameters
    ----------
    vertices : (n, 2) array_like
    triangles : (m, 3) array_like of vertex ids
    newest : sequence of length m; vertex id of the newest vertex of each triangle

    Raises
    ------
    MeshError
        Degenerate triangles, non-conforming input or a newest-vertex
        assignment violating the compatibility rule.
    """
    xy = np.asarray(vertices, dtype=float)
    tris = np.asarray(triangles, dtype=np.int64)
    if xy.ndim != 2 or xy.shape[1] != 2 or not np.isfinite(xy).all():
        raise MeshError("vertices must be a finite (n, 2) array")
    if tris.ndim != 2 or tris.shape[1] != 3 or len(newest) != len(tris):
        raise MeshError("triangles must be (m, 3) with one newest vertex each")
    if tris.min() < 0 or tris.max() >= len(xy) or len(np.unique(tris)) != len(xy):
        raise MeshError("vertex ids must be dense and used")

    ordered = []
    for t, nv in zip(tris.tolist(), newest):
        if nv not in t:
            raise MeshError(f"newest vertex {nv} not in triangle {t}")
        k = t.index(nv)
        t = t[k:] + t[:k]
        p = xy[t]
        u, v = p[1] - p[0], p[2] - p[0]
        area = 0.5 * (u[0] * v[1] - u[1] * v[0])
        scale = np.max(np.linalg.norm(p - p.mean(axis=0), axis=1)) ** 2
        if abs(area) <= 1e-14 * scale:
            raise MeshError(f"degenerate triangle {t}")
        if area < 0:
            t = [t[0], t[2], t[1]]
        ordered.append(t)

    edges = {}
    for i, (a, b, c) in enumerate(ordered):
        for pair in ((b, c), (c, a), (a, b)):
            edges.setdefault(_key(*pair), []).append(i)
    if max(len(v) for v in edges.values()) > 2:
        raise MeshError("non-conforming input: edge shared by more than two triangles")
    for k, owners in edges.items():
        if len(owners) == 2:
            flags = [_key(ordered[i][1], ordered[i][2]) == k for i in owners]
            if flags[0] != flags[1]:
                raise MeshError("incompatible newest-vertex assignment")
    # hanging vertices: a vertex in the relative interior of a boundary edge
    bnd = [k for k, v in edges.items() if len(v) == 1]
    for k in bnd:
        a, b = k >> 32, k & 0xFFFFFFFF
        pa, pb = xy[a], xy[b]
        d = pb - pa
        L2 = d @ d
        s = (xy - pa) @ d / L2
        w = xy - pa
        dist = np.abs(d[0] * w[:, 1] - d[1] * w[:, 0]) / np.sqrt(L2)
        inside = (s > 1e-12) & (s < 1 - 1e-12) & (dist < 1e-12 * np.sqrt(L2))
        if inside.any():
            raise MeshError("non-conforming input: hanging vertex")
    bverts = set()
    for k in bnd:
        bverts.update((k >> 32, k & 0xFFFFFFFF))

    m = Triangulation()
    for i, (x, y) in enumerate(xy):
        m._add_vertex(x, y, i in bverts)
    for t in ordered:
        m._add_triangle(tuple(t), 0, -1)
    m.n_bottom = len(ordered)
    m._touch()
    if len(bverts) and (len(np.unique(tris)) - len(edges) + len(tris)) != 1:
        raise MeshError("bottom mesh is not a simply connected triangulation")
    return m


def criss_cross_box(half_width=1.5):
    """Square (-w, w)^2 split into four triangles at its center.

    Newest vertices sit at two opposite corners so that the refinement edges
    are the two half-diagonals shared pairwise; this satisfies the
    compatibility rule.
    """
    w = half_width
    verts = [(0.0, 0.0), (-w, -w), (w, -w), (w, w), (-w, w)]
    tris = [(0, 1, 2), (0, 2, 3), (0, 3, 4), (0, 4, 1)]
    newest = [1, 3, 3, 1]
    return make_bottom_mesh(verts, tris, newest)


def refine(tau, marked):
    """Return a refined copy of ``tau``; see :meth:`Triangulation.refine`."""
    return tau.copy().refine(marked)


def uniform_refine(tau):
    return tau.copy().uniform_refine()


def patch_data(tau, z):
    return tau.patch_data(z)


def interior_edges(tau):
    return tau.interior_edges()

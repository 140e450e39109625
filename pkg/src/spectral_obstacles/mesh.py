"""Conforming triangulations of the box domains.

Disks are meshed by concentric rings (ring ``i`` carries ``6 i`` nodes,
consecutive rings are stitched by a merge sweep over the angle). Ellipses
and star-shaped polar domains are images of that disk mesh under the
affine or radial map onto the domain, and squares use a union-jack grid.

Small boundary obstacles are much thinner than a uniform mesh can
resolve, so disk-type meshes accept an optional :class:`BoundaryLayer`:
extra rings packed near the boundary with fine radial spacing that grows
geometrically inward.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from .errors import ParameterError, ResourceError
from .geometry.domains import DomainSpec, inradius

MAX_VERTICES = 2_000_000

INTERIOR, OUTER = 0, 1


@dataclass(frozen=True)
class BoundaryLayer:
    """Radially graded rings near the boundary.

    Rings sit at depths ``0, spacing, 2 spacing, ...`` up to
    ``uniform_depth``, after which the spacing grows by ``growth`` per ring
    until ``depth`` is reached. Depths are physical lengths.
    """

    depth: float = 0.03
    spacing: float = 5e-5
    growth: float = 1.03
    uniform_depth: float = 0.0

    def __post_init__(self):
        if not (self.depth > 0 and self.spacing > 0 and self.growth >= 1):
            raise ParameterError("boundary layer needs depth > 0, spacing > 0, growth >= 1")

    def depths(self, scale=1.0):
        out = [0.0]
        d = self.spacing
        while out[-1] + d < self.depth - 1e-15:
            out.append(out[-1] + d)
            if out[-1] >= self.uniform_depth:
                d *= self.growth
        return np.array(out) / scale


@dataclass(frozen=True, eq=False)
class Mesh:
    """Vertices, counterclockwise triangles and marked boundary edges."""

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    flags: np.ndarray
    h: float
    domain: DomainSpec | None = None

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def outer(self):
        return self.flags == OUTER

    @cached_property
    def areas(self):
        p = self.vertices[self.triangles]
        d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def edges(self):
        t = self.triangles
        e = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
        return np.unique(e, axis=0)

    def edge_lengths(self):
        e = self.edges
        return np.linalg.norm(self.vertices[e[:, 1]] - self.vertices[e[:, 0]], axis=1)

    def angles(self):
        """Interior angles in degrees, shape ``(n_triangles, 3)``."""
        p = self.vertices[self.triangles]
        out = []
        for i in range(3):
            a = p[:, (i + 1) % 3] - p[:, i]
            b = p[:, (i + 2) % 3] - p[:, i]
            cos = np.einsum("ij,ij->i", a, b) / np.linalg.norm(a, axis=1) / np.linalg.norm(b, axis=1)
            out.append(np.degrees(np.arccos(np.clip(cos, -1, 1))))
        return np.stack(out, 1)

    @property
    def total_area(self):
        return float(self.areas.sum())

    @cached_property
    def vertex_to_cells(self):
        """CSR-style adjacency: cells touching each vertex."""
        t = self.triangles.ravel()
        order = np.argsort(t, kind="stable")
        ptr = np.concatenate([[0], np.cumsum(np.bincount(t, minlength=self.n_vertices))])
        return ptr, order // 3

    def validate(self):
        """Raise ``ValueError`` if a structural invariant is broken."""
        if np.any(self.areas <= 0):
            raise ValueError("triangle with nonpositive signed area")
        t = self.triangles
        e = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
        uniq, count = np.unique(e, axis=0, return_counts=True)
        if np.any(count > 2):
            raise ValueError("edge shared by more than two triangles")
        single = uniq[count == 1]
        bnd = np.unique(np.sort(self.boundary_edges, axis=1), axis=0)
        if len(single) != len(bnd) or np.any(single != bnd):
            raise ValueError("boundary edges do not match the triangle boundary")
        deg = np.bincount(bnd.ravel(), minlength=self.n_vertices)
        if np.any(deg[deg > 0] != 2):
            raise ValueError("boundary edges do not form closed loops")
        pairs = cKDTree(self.vertices).query_pairs(1e-12)
        if pairs:
            raise ValueError("duplicate vertices")

    def to_text(self):
        buf = io.StringIO()
        buf.write("mesh v1\n")
        buf.write(f"{self.n_vertices}\n")
        for (x, y), f in zip(self.vertices, self.flags):
            buf.write(f"{float(x)!r} {float(y)!r} {int(f)}\n")
        buf.write(f"{self.n_triangles}\n")
        for i, j, k in self.triangles:
            buf.write(f"{i} {j} {k}\n")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text, h=math.nan, domain=None):
        lines = text.splitlines()
        if not lines or lines[0].strip() != "mesh v1":
            raise ParameterError("missing 'mesh v1' header")
        nv = int(lines[1])
        vf = np.array([ln.split() for ln in lines[2:2 + nv]], dtype=float).reshape(-1, 3)
        nt = int(lines[2 + nv])
        tri = np.array([ln.split() for ln in lines[3 + nv:3 + nv + nt]], dtype=np.int64).reshape(-1, 3)
        return _finish(vf[:, :2], tri, h, domain, flags=vf[:, 2].astype(np.int8))

    def locate(self, points):
        """Index of a triangle containing each point, or -1."""
        x = np.atleast_2d(np.asarray(points, dtype=float))
        p = self.vertices[self.triangles]
        tree = self._centroid_tree
        k = min(12, self.n_triangles)
        _, idx = tree.query(x, k=k)
        idx = idx.reshape(len(x), -1)
        out = np.full(len(x), -1)
        for j in range(idx.shape[1]):
            todo = out < 0
            if not np.any(todo):
                break
            cand = idx[todo, j]
            lam = barycentric(p[cand], x[todo])
            hit = np.all(lam >= -1e-12, axis=1)
            sub = np.flatnonzero(todo)[hit]
            out[sub] = cand[hit]
        return out

    @cached_property
    def _centroid_tree(self):
        return cKDTree(self.vertices[self.triangles].mean(1))

    def interpolate(self, field, points):
        """Evaluate a P1 field at points (NaN outside the mesh)."""
        x = np.atleast_2d(np.asarray(points, dtype=float))
        cell = self.locate(x)
        out = np.full(len(x), np.nan)
        ok = cell >= 0
        lam = barycentric(self.vertices[self.triangles[cell[ok]]], x[ok])
        out[ok] = np.einsum("ij,ij->i", lam, np.asarray(field)[self.triangles[cell[ok]]])
        return out


def barycentric(p, x):
    """Barycentric coordinates of ``x[i]`` in triangle ``p[i]``."""
    a = p[:, 0]
    v0, v1, v2 = p[:, 1] - a, p[:, 2] - a, x - a
    den = v0[:, 0] * v1[:, 1] - v0[:, 1] * v1[:, 0]
    l1 = (v2[:, 0] * v1[:, 1] - v2[:, 1] * v1[:, 0]) / den
    l2 = (v0[:, 0] * v2[:, 1] - v0[:, 1] * v2[:, 0]) / den
    return np.stack([1 - l1 - l2, l1, l2], -1)


def _finish(vertices, triangles, h, domain, flags=None):
    vertices = np.ascontiguousarray(vertices, dtype=float)
    triangles = np.ascontiguousarray(triangles, dtype=np.int64)
    t = triangles
    e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    key = np.sort(e, axis=1)
    _, inv, count = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    bnd = e[count[inv.ravel()] == 1]
    if flags is None:
        flags = np.zeros(len(vertices), dtype=np.int8)
        flags[bnd.ravel()] = OUTER
    return Mesh(vertices, triangles, bnd, np.asarray(flags, dtype=np.int8), float(h), domain)


def _check_budget(n):
    if n > MAX_VERTICES:
        raise ResourceError(f"mesh would have {n} vertices (limit {MAX_VERTICES})")


def _ring_mesh(domain, h, layer=None, tangential=0.9):
    """Rings that are scaled copies ``r * boundary`` of a star-shaped domain.

    Nodes on each ring are equally spaced in arc length. The ring scales
    are chosen so that the normal gap between rings is at most ``h``, which
    for the ellipse means the gap shrinks by ``b / a`` near the minor axis.
    """
    L = domain.boundary_length
    s = np.linspace(0, L, 2048, endpoint=False)
    p, dp, _ = domain.curve(domain.param_of_arc(s))
    n = np.stack([dp[:, 1], -dp[:, 0]], -1) / np.linalg.norm(dp, axis=1)[:, None]
    support = np.einsum("ij,ij->i", p, n)
    hi = float(support.max())

    n_rings = max(1, int(math.ceil(hi / (0.9 * h))))
    inner = 1.0
    extra = np.array([])
    if layer is not None:
        depths = layer.depths(scale=hi)
        inner = 1.0 - depths[-1]
        n_rings = max(1, int(math.ceil(inner * hi / (0.9 * h))))
        extra = 1.0 - depths[::-1]
        extra = extra[extra > inner + 1e-12]
    scales = [inner * i / n_rings for i in range(1, n_rings + 1)] + extra.tolist()
    counts = [max(6, int(round(r * L / (tangential * h)))) for r in scales[:n_rings]]
    counts += [counts[-1]] * len(extra)
    counts = [1] + counts
    _check_budget(sum(counts))

    verts = [np.zeros((1, 2))]
    for r, m in zip(scales, counts[1:]):
        verts.append(r * domain.curve(domain.param_of_arc(np.arange(m) * L / m))[0])
    start = np.concatenate([[0], np.cumsum(counts)[:-1]])
    tris = []
    for i in range(1, len(counts)):
        m0, m1, s0, s1 = counts[i - 1], counts[i], start[i - 1], start[i]
        k = np.arange(m1)
        if m0 == 1:
            tris.append(np.stack([np.zeros(m1, dtype=int), s1 + k, s1 + (k + 1) % m1], 1))
        elif m0 == m1:
            a, b = s0 + k, s0 + (k + 1) % m0
            c, d = s1 + k, s1 + (k + 1) % m1
            tris.append(np.stack([a, c, d], 1))
            tris.append(np.stack([a, d, b], 1))
        else:
            tris.append(_merge(m0, m1, s0, s1))
    return np.concatenate(verts), np.concatenate(tris)


def _merge(m0, m1, s0, s1):
    """Stitch two rings, advancing on whichever has the nearer next node."""
    out = []
    a = b = 0
    while a < m0 or b < m1:
        if b < m1 and (a >= m0 or (2 * b + 1) * m0 <= (2 * a + 1) * m1):
            out.append((s0 + a % m0, s1 + b % m1, s1 + (b + 1) % m1))
            b += 1
        else:
            out.append((s0 + a % m0, s1 + b % m1, s0 + (a + 1) % m0))
            a += 1
    return np.array(out)


def _union_jack(side, h):
    n = max(1, int(math.ceil(side / h - 1e-9)))
    _check_budget((n + 1) ** 2)
    g = np.linspace(0, side, n + 1)
    X, Y = np.meshgrid(g, g)
    verts = np.stack([X.ravel(), Y.ravel()], -1)
    i, j = np.meshgrid(np.arange(n), np.arange(n))
    i, j = i.ravel(), j.ravel()
    v00 = j * (n + 1) + i
    v10, v01, v11 = v00 + 1, v00 + n + 1, v00 + n + 2
    # diagonals radiate from the centre, so each corner cell is cut through the corner
    flip = (2 * i + 1 > n) != (2 * j + 1 > n)
    t1 = np.where(flip[:, None], np.stack([v00, v10, v01], 1), np.stack([v00, v10, v11], 1))
    t2 = np.where(flip[:, None], np.stack([v10, v11, v01], 1), np.stack([v00, v11, v01], 1))
    return verts, np.concatenate([t1, t2])


def triangulate(domain: DomainSpec, h: float, layer: BoundaryLayer | None = None) -> Mesh:
    """Deterministic triangulation of ``domain`` with target edge length ``h``."""
    if not 0 < h < inradius(domain):
        raise ParameterError(f"h={h} must lie in (0, inradius)")
    if domain.kind == "square":
        if layer is not None:
            raise ParameterError("boundary layers are only available for disk-type domains")
        v, t = _union_jack(domain.side, h)
        return _finish(v, t, h, domain)

    v, t = _ring_mesh(domain, h, layer)
    m = _finish(v, t, h, domain)
    return _project_outer(m)


def _project_outer(mesh):
    """Put outer vertices exactly on the boundary curve."""
    d = mesh.domain
    if d is None or d.kind == "square":
        return mesh
    idx = np.flatnonzero(mesh.outer)
    v = mesh.vertices.copy()
    v[idx] = d.curve(d.project(v[idx]))[0]
    return Mesh(v, mesh.triangles, mesh.boundary_edges, mesh.flags, mesh.h, d)


def refine(mesh: Mesh) -> Mesh:
    """Split every triangle into four; boundary midpoints go onto the curve."""
    edges = mesh.edges
    nv, ne = mesh.n_vertices, len(edges)
    _check_budget(nv + ne)
    mid = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    t = mesh.triangles
    key = edges[:, 0] * nv + edges[:, 1]

    def mid_index(a, b):
        k = np.minimum(a, b) * nv + np.maximum(a, b)
        return nv + np.searchsorted(key, k)

    m01 = mid_index(t[:, 0], t[:, 1])
    m12 = mid_index(t[:, 1], t[:, 2])
    m20 = mid_index(t[:, 2], t[:, 0])
    tris = np.concatenate([
        np.stack([t[:, 0], m01, m20], 1),
        np.stack([m01, t[:, 1], m12], 1),
        np.stack([m20, m12, t[:, 2]], 1),
        np.stack([m01, m12, m20], 1),
    ])
    out = _finish(np.concatenate([mesh.vertices, mid]), tris, mesh.h / 2, mesh.domain)
    return _project_outer(out)


@dataclass(frozen=True)
class NodeClassification:
    """Vertex sets induced by an obstacle on a mesh.

    ``obstacle`` holds every vertex accepted by the membership test,
    including outer-boundary ones. A cell is an obstacle cell when it touches
    an obstacle vertex off the outer boundary. Among the remaining non-outer
    vertices, ``free_boundary`` marks those adjacent to both obstacle and
    non-obstacle cells; the rest are ``interior``.
    """

    obstacle: np.ndarray
    free_boundary: np.ndarray
    interior: np.ndarray
    outer: np.ndarray

    @property
    def constrained(self):
        return self.obstacle | self.outer

    @property
    def inner_obstacle(self):
        return self.obstacle & ~self.outer


def classify_nodes(mesh: Mesh, region) -> NodeClassification:
    if mesh.domain is not None and hasattr(region, "boundary_samples"):
        pts = region.boundary_samples(256)
        if len(pts) and not np.all(mesh.domain.contains(pts, closed=True, tol=1e-8)):
            raise ParameterError("obstacle region leaves the closed domain")
    obstacle = np.asarray(region.contains(mesh.vertices), dtype=bool)
    outer = mesh.outer
    # obstacle cells: those touching an obstacle vertex off the outer boundary
    touch = (obstacle & ~outer)[mesh.triangles].any(1)
    adj_obs = np.zeros(mesh.n_vertices, dtype=bool)
    adj_free = np.zeros(mesh.n_vertices, dtype=bool)
    adj_obs[mesh.triangles[touch].ravel()] = True
    adj_free[mesh.triangles[~touch].ravel()] = True
    rest = ~obstacle & ~outer
    free = rest & adj_obs & adj_free
    return NodeClassification(obstacle, free, rest & ~free, outer)

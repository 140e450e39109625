"""Smallest Dirichlet eigenpair, boundary gradients and analytic oracles."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NonConvergenceError, NumericError, ParameterError
from .fem import as_mask, cell_gradients, cg_solve

MAX_OUTER = 500


@dataclass(frozen=True, eq=False)
class EigenPair:
    """``(lam, u)`` with ``u^T M u = 1`` and ``u >= 0`` up to rounding."""

    value: float
    field: np.ndarray
    residual: float
    iterations: int = 0
    cg_iterations: int = 0


def smallest_eigenpair(stiffness, mass, constrained, tol=1e-8, start=None, max_outer=MAX_OUTER):
    """Inverse power iteration (shift 0) on the pencil restricted to free vertices.

    Stops when the eigenvalue increment is at most ``tol * lam`` and the
    residual ``|K u - lam M u| / |M u|`` is at most ``10 tol``. The start
    vector is all ones on the free vertices unless ``start`` is given.
    """
    if not 0 < tol < 1:
        raise ParameterError("tol must lie in (0, 1)")
    n = stiffness.shape[0]
    mask = as_mask(constrained, n)
    free = np.flatnonzero(~mask)
    if len(free) == 0:
        raise ParameterError("no free vertices")
    K = stiffness[free][:, free].tocsr()
    M = mass[free][:, free].tocsr()
    u = np.ones(len(free)) if start is None else np.abs(np.asarray(start, dtype=float)[free])
    if not np.any(u > 0):
        u = np.ones(len(free))
    u /= math.sqrt(u @ (M @ u))
    lam = float(u @ (K @ u))
    inner_tol = max(min(0.1 * tol, 1e-6), 1e-13)
    total_cg = 0
    res = math.inf
    for outer in range(1, max_outer + 1):
        x, rep = cg_solve(K, M @ u, tol=inner_tol, x0=u / lam)
        total_cg += rep.iterations
        if not rep.converged:
            raise NumericError(f"inner CG stalled at residual {rep.residual:.2e}")
        x /= math.sqrt(x @ (M @ x))
        Mx = M @ x
        new = float(x @ (K @ x))
        res = float(np.linalg.norm(K @ x - new * Mx) / np.linalg.norm(Mx))
        done = abs(new - lam) <= tol * new and res <= 10 * tol
        u, lam = x, new
        if done:
            break
    else:
        raise NonConvergenceError(f"no convergence after {max_outer} iterations (residual {res:.2e})")
    if u.sum() < 0:
        u = -u
    full = np.zeros(n)
    full[free] = u
    return EigenPair(lam, full, res, outer, total_cg)


def perron_ok(pair: EigenPair, atol=1e-10):
    return bool(pair.field.min() >= -atol)


# ----------------------------------------------------------------------
# gradient recovery


@dataclass(frozen=True, eq=False)
class BoundaryGradientProfile:
    """``|d phi / d nu|`` sampled at outer-boundary vertices, sorted by arc parameter."""

    s: np.ndarray
    values: np.ndarray
    vertices: np.ndarray
    length: float

    @property
    def min_value(self):
        return float(self.values.min())

    @property
    def argmin(self):
        """Arc parameters where the minimum is attained."""
        return self.s[self.values == self.values.min()]

    def near_min(self, rel_tol=1e-3):
        return self.values <= self.min_value * (1 + rel_tol)

    def minima(self, rel_tol=5e-3):
        """Centres of the connected arcs on which the profile is within ``rel_tol`` of its minimum."""
        sel = self.near_min(rel_tol)
        if sel.all():
            return np.array([])
        # rotate so the scan starts outside a near-minimum run
        k0 = int(np.argmin(sel))
        idx = np.roll(np.arange(len(sel)), -k0)
        runs, cur = [], []
        for i in idx:
            if sel[i]:
                cur.append(i)
            elif cur:
                runs.append(cur)
                cur = []
        if cur:
            runs.append(cur)
        out = []
        for run in runs:
            best = run[int(np.argmin(self.values[run]))]
            out.append(self.s[best])
        return np.sort(np.array(out))

    def is_flat(self, rel_tol=0.03):
        return bool((self.values.max() - self.values.min()) <= rel_tol * self.values.mean())

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["s", "grad_estimate"])
        for s, v in zip(self.s, self.values):
            w.writerow([repr(float(s)), repr(float(v))])
        return buf.getvalue()


def _vertex_average(mesh, cell_values, cells_mask=None):
    """Area-weighted average of per-cell values over the cells around each vertex."""
    w = mesh.areas if cells_mask is None else mesh.areas * cells_mask
    t = mesh.triangles
    n = mesh.n_vertices
    vals = np.atleast_2d(cell_values.T).T
    num = np.zeros((n,) + vals.shape[1:])
    den = np.zeros(n)
    for j in range(3):
        np.add.at(num, t[:, j], w[:, None] * vals if vals.ndim == 2 else w * vals)
        np.add.at(den, t[:, j], w)
    return num, den


def _outer_normals(mesh):
    """Unit outward normals at outer vertices (from the domain when known)."""
    idx = np.flatnonzero(mesh.outer)
    d = mesh.domain
    if d is not None and d.kind != "square":
        t = d.project(mesh.vertices[idx])
        _, dp, _ = d.curve(t)
        tan = dp / np.linalg.norm(dp, axis=1)[:, None]
        return idx, np.stack([tan[:, 1], -tan[:, 0]], -1), d.arc_length(t)
    # average of adjacent boundary-edge normals (edges are oriented with the
    # domain on their left)
    e = mesh.boundary_edges
    v = mesh.vertices
    vec = v[e[:, 1]] - v[e[:, 0]]
    en = np.stack([vec[:, 1], -vec[:, 0]], -1)
    nrm = np.zeros_like(v)
    np.add.at(nrm, e[:, 0], en)
    np.add.at(nrm, e[:, 1], en)
    nrm = nrm[idx] / np.linalg.norm(nrm[idx], axis=1)[:, None]
    if d is not None:
        s = d.project(v[idx])
    else:
        s = np.arctan2(v[idx, 1] - v[:, 1].mean(), v[idx, 0] - v[:, 0].mean()) % (2 * np.pi)
    return idx, nrm, s


def boundary_gradient(pair: EigenPair, mesh) -> BoundaryGradientProfile:
    grad = cell_gradients(mesh, pair.field)
    num, den = _vertex_average(mesh, grad)
    idx, normal, s = _outer_normals(mesh)
    g = num[idx] / den[idx, None]
    vals = np.abs(np.einsum("ij,ij->i", g, normal))
    order = np.argsort(s, kind="stable")
    length = mesh.domain.boundary_length if mesh.domain is not None else 2 * np.pi
    return BoundaryGradientProfile(s[order], vals[order], idx[order], float(length))


@dataclass(frozen=True)
class FreeBoundaryGradient:
    """Summary of ``|grad phi_eps|`` over discrete free-boundary vertices."""

    Lambda: float
    median: float
    min: float
    max: float
    iqr: float
    count: int
    values: np.ndarray = field(repr=False, default=None)

    @property
    def sqrt_Lambda(self):
        return self.median


def free_boundary_gradient(pair: EigenPair, mesh, classification) -> FreeBoundaryGradient:
    """Median-based estimate of the free-boundary constant ``Lambda``."""
    idx = np.flatnonzero(classification.free_boundary)
    if not classification.obstacle.any() or len(idx) == 0:
        raise ParameterError("no free-boundary vertices")
    grad = np.linalg.norm(cell_gradients(mesh, pair.field), axis=1)
    # cells strictly inside the positivity set; cells touching a zero vertex
    # mix the jump across the staircase interface into the gradient
    positive = (pair.field[mesh.triangles] > 0).all(1).astype(float)
    num, den = _vertex_average(mesh, grad, positive)
    keep = den[idx] > 0
    if not keep.any():
        raise ParameterError("no positive cells next to the free boundary")
    vals = num[idx[keep]].ravel() / den[idx[keep]]
    q1, med, q3 = np.percentile(vals, [25, 50, 75])
    return FreeBoundaryGradient(
        Lambda=float(med**2), median=float(med), min=float(vals.min()), max=float(vals.max()),
        iqr=float(q3 - q1), count=len(vals), values=vals,
    )


# ----------------------------------------------------------------------
# analytic oracles


def _bessel_series(order, x, cutoff=1e-16):
    """``J_order(x)`` for integer ``order`` by its power series (|x| <= 8)."""
    x = float(x)
    term = (x / 2) ** order / math.factorial(order)
    total = term
    k = 0
    q = -(x * x) / 4
    while True:
        k += 1
        term *= q / (k * (k + order))
        total += term
        if abs(term) <= cutoff * max(abs(total), 1e-300) and k > 2:
            return total


def bessel_j0(x):
    return _bessel_series(0, x)


def bessel_j1(x):
    return _bessel_series(1, x)


def bessel_j0_zero():
    """First positive zero of ``J_0`` by bisection on ``[2, 3]``."""
    lo, hi = 2.0, 3.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if bessel_j0(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 4e-16:
            break
    return 0.5 * (lo + hi)


J01 = bessel_j0_zero()


@dataclass(frozen=True)
class DiskReference:
    radius: float

    @property
    def eigenvalue(self):
        return (J01 / self.radius) ** 2

    def eigenfunction(self, x):
        """Normalized first eigenfunction at points ``x``."""
        x = np.atleast_2d(x)
        r = np.hypot(x[:, 0], x[:, 1]) / self.radius
        c = 1 / (math.sqrt(math.pi) * self.radius * abs(bessel_j1(J01)))
        return np.array([c * bessel_j0(J01 * ri) for ri in r])

    @property
    def boundary_gradient(self):
        """``|grad phi_0|`` on the circle."""
        return J01 / (math.sqrt(math.pi) * self.radius**2)


@dataclass(frozen=True)
class RectangleReference:
    a: float
    b: float

    @property
    def eigenvalue(self):
        return math.pi**2 * (1 / self.a**2 + 1 / self.b**2)

    def eigenfunction(self, x):
        x = np.atleast_2d(x)
        return 2 / math.sqrt(self.a * self.b) * np.sin(np.pi * x[:, 0] / self.a) * np.sin(np.pi * x[:, 1] / self.b)


def disk_reference(radius=1.0):
    if not radius > 0:
        raise ParameterError("radius must be positive")
    return DiskReference(float(radius))


def rectangle_reference(a, b):
    if not (a > 0 and b > 0):
        raise ParameterError("side lengths must be positive")
    return RectangleReference(float(a), float(b))

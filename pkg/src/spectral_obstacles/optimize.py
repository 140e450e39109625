"""Minimizing the first eigenvalue over obstacles of fixed area.

Two families are searched: boundary bumps placed by a grid scan plus
golden-section refinement of the anchor, and free-form unions of mesh cells
grown greedily from the boundary. Candidates are compared on the same mesh,
so every eigenvalue is bounded below by the discrete obstacle-free value.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .capacity import relative_capacity
from .errors import ConstructionError, ParameterError, SearchError
from .fem import assemble_mass, assemble_stiffness, cell_gradients
from .geometry.obstacles import BumpObstacleSpec, CellRegion, obstacle_region
from .geometry.straighten import straightening_map
from .mesh import classify_nodes
from .spectral import EigenPair, smallest_eigenpair

log = logging.getLogger(__name__)

GOLDEN = (math.sqrt(5) - 1) / 2


class ObstacleProblem:
    """Mesh, operators and the obstacle-free eigenpair, shared by all candidates."""

    def __init__(self, mesh, tol=1e-7):
        self.mesh = mesh
        self.domain = mesh.domain
        self.tol = tol
        self.K = assemble_stiffness(mesh)
        self.M = assemble_mass(mesh)
        self.base = smallest_eigenpair(self.K, self.M, mesh.outer, tol=tol)
        self._charts = {}

    @property
    def lam0(self):
        return self.base.value

    def chart(self, s0, r0=None):
        key = (round(float(s0), 14), r0)
        if key not in self._charts:
            self._charts[key] = straightening_map(self.domain, float(s0), r0=r0)
        return self._charts[key]

    def solve(self, constrained, start=None):
        start = self.base.field if start is None else start
        return smallest_eigenpair(self.K, self.M, constrained, tol=self.tol, start=start)


@dataclass(eq=False)
class ObstacleCandidate:
    region: object
    eigenvalue: float
    capacity: float
    provenance: dict
    pair: EigenPair | None = field(default=None, repr=False)
    classification: object = field(default=None, repr=False)


def eigen_with_obstacle(problem: ObstacleProblem, region, start=None, with_capacity=True, provenance=None):
    """Constrain obstacle and outer vertices and solve for the smallest eigenpair."""
    mesh = problem.mesh
    cl = classify_nodes(mesh, region)
    if cl.constrained.all():
        raise ParameterError("obstacle leaves no free vertices")
    pair = problem.solve(cl.constrained, start=start)
    cap = math.nan
    if with_capacity:
        cap = relative_capacity(mesh, cl, problem.base.field, problem.K).value
    return ObstacleCandidate(region, pair.value, cap, dict(provenance or {}), pair, cl)


@dataclass(eq=False)
class OptimizationResult:
    best: ObstacleCandidate
    trace: list
    wall_time: float

    def trace_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["candidate", "s0", "n_cells", "lambda", "cap"])
        for i, c in enumerate(self.trace):
            p = c.provenance
            w.writerow([i, repr(p.get("s0", "")), p.get("n_cells", ""), repr(c.eigenvalue), repr(c.capacity)])
        return buf.getvalue()


# ----------------------------------------------------------------------
# parametric bump placement


def parametric_search(problem: ObstacleProblem, eps, r, grid=16, profile="cos2", offset=0.5,
                      rel_bracket=1e-4, chart_radius=None):
    """Best boundary bump of area ``eps`` and width ``r`` over the anchor.

    Anchors ``(k + offset) L / grid`` are scanned, then the best one is
    refined by golden-section search on the neighbouring grid cells until
    the bracket is below ``rel_bracket * L``. Anchors where the chart or
    the volume matching fails are skipped. Only the returned best candidate
    carries a capacity; trace entries have ``capacity = nan``.
    """
    t0 = time.perf_counter()
    L = problem.domain.boundary_length
    trace = []
    cache = {}

    def evaluate(s, start=None):
        s = float(s) % L
        key = round(s, 12)
        if key in cache:
            return cache[key]
        try:
            smap = problem.chart(s, chart_radius)
            region = obstacle_region(BumpObstacleSpec(s, r, eps, profile), smap)
            cand = eigen_with_obstacle(problem, region, start=start, with_capacity=False,
                                       provenance={"s0": s, "r": r, "eta": region.eta})
        except (ParameterError, ConstructionError) as exc:
            log.warning("anchor s0=%.6f skipped: %s", s, exc)
            cand = None
        cache[key] = cand
        if cand is not None:
            trace.append(cand)
        return cand

    step = L / grid
    for k in range(grid):
        evaluate((k + offset) * step)
    if not trace:
        raise SearchError(f"every anchor failed for eps={eps}, r={r}")

    best = min(trace, key=lambda c: (c.eigenvalue, c.provenance["s0"]))

    def value(s):
        c = evaluate(s, start=best_now().pair.field)
        return math.inf if c is None else c.eigenvalue

    def best_now():
        return min(trace, key=lambda c: (c.eigenvalue, c.provenance["s0"]))

    sb = best.provenance["s0"]
    a, b = sb - step, sb + step
    c, d = b - GOLDEN * (b - a), a + GOLDEN * (b - a)
    fc, fd = value(c), value(d)
    while b - a > rel_bracket * L:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = value(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = value(d)

    best = best_now()
    cap = relative_capacity(problem.mesh, best.classification, problem.base.field, problem.K).value
    best.capacity = cap
    return OptimizationResult(best, trace, time.perf_counter() - t0)


# ----------------------------------------------------------------------
# free-form cell unions


def _closure(mesh, constrained):
    """Cells on which every admissible field vanishes."""
    return constrained[mesh.triangles].all(1)


def _zero_area(mesh, constrained):
    return float(mesh.areas[_closure(mesh, constrained)].sum())


def _relax(problem, u, lam, verts, constrained, rings=2, sweeps=3):
    """Zero ``u`` on ``verts`` and Jacobi-relax ``K u = lam M u`` around them in place.

    Returns the relaxed vertices (the ``rings``-neighbourhood of ``verts``).
    """
    K, M = problem.K, problem.M
    u[verts] = 0.0
    near = np.unique(verts)
    for _ in range(rings):
        near = np.unique(K[near].indices)
    near = near[~constrained[near]]
    if len(near) == 0:
        return np.unique(verts)
    A = (K[near] - lam * M[near]).tocsr()
    d = K.diagonal()[near] - lam * M.diagonal()[near]
    for _ in range(sweeps):
        u[near] -= (A @ u) / d
    np.maximum(u, 0.0, out=u)
    return np.union1d(near, verts)


def greedy_freeform(problem: ObstacleProblem, eps, rounds=20, resolve_every=10):
    """Grow an obstacle cell by cell from the boundary.

    Each step adds the candidate cell (one touching the constrained set)
    with the smallest Dirichlet energy density ``|grad u|^2`` of the
    current eigenfield; ties go to the lower cell index. Between exact
    re-solves (every ``resolve_every`` additions) the field is zeroed on the
    new constraints and relaxed by a few Jacobi sweeps on the surrounding
    vertices, so cells next to the growing obstacle become cheaper. The obstacle is the set of
    cells whose three vertices are constrained, and growth stops once its
    area reaches ``eps``. Swap rounds then try to move one cell from the
    interface with the steepest neighbouring gradient to the cheapest
    candidate, keeping the swap only if the eigenvalue drops.
    """
    t0 = time.perf_counter()
    mesh = problem.mesh
    tri = mesh.triangles
    min_cell = float(mesh.areas.min())
    cell_max = float(mesh.areas.max())
    if eps < min_cell:
        raise ParameterError(f"eps={eps} is below one cell area {min_cell:.3e}")
    outer = mesh.outer
    chosen = np.zeros(mesh.n_triangles, dtype=bool)
    con = outer.copy()
    pair = problem.base
    trace = []

    def constrained_from(ch):
        c = outer.copy()
        c[tri[ch].ravel()] = True
        return c

    def record(p, ch):
        zero = _closure(mesh, constrained_from(ch))
        cand = ObstacleCandidate(CellRegion(mesh, np.flatnonzero(zero)), p.value, math.nan,
                                 {"n_cells": int(zero.sum())}, p)
        trace.append(cand)
        return cand

    u = pair.field.copy()
    score = np.sum(cell_gradients(mesh, u) ** 2, axis=1)
    vtc_ptr, vtc_cells = mesh.vertex_to_cells
    area = _zero_area(mesh, con)
    added = 0
    while area < eps:
        full = _closure(mesh, con)
        cand = ~full & con[tri].any(1)
        idx = np.flatnonzero(cand)
        if len(idx) == 0:
            raise SearchError("no candidate cells left")
        order = idx[np.lexsort((idx, score[idx]))]
        pick = order[0]
        trial = con.copy()
        trial[tri[pick]] = True
        new_area = _zero_area(mesh, trial)
        if new_area - eps > cell_max:
            # the closure jumped by several cells; take the cheapest candidate that lands within one
            for c in order[1:64]:
                t2 = con.copy()
                t2[tri[c]] = True
                a2 = _zero_area(mesh, t2)
                if eps <= a2 <= eps + cell_max:
                    pick, trial, new_area = c, t2, a2
                    break
        chosen[pick] = True
        con, area = trial, new_area
        added += 1
        if added % resolve_every == 0 and area < eps:
            pair = problem.solve(con, start=pair.field)
            u = pair.field.copy()
            score = np.sum(cell_gradients(mesh, u) ** 2, axis=1)
        else:
            near = _relax(problem, u, pair.value, tri[pick], con)
            cells = np.unique(np.concatenate([vtc_cells[vtc_ptr[v]:vtc_ptr[v + 1]] for v in near]))
            score[cells] = np.sum(cell_gradients(mesh, u, cells) ** 2, axis=1)
    pair = problem.solve(con, start=pair.field)
    record(pair, chosen)

    for _ in range(rounds):
        score = np.sum(cell_gradients(mesh, pair.field) ** 2, axis=1)
        full = _closure(mesh, con)
        # obstacle cells next to a cell carrying a positive field
        free_cells = ~full
        touch_free = np.zeros(mesh.n_vertices, dtype=bool)
        touch_free[tri[free_cells].ravel()] = True
        pressure = np.zeros(mesh.n_vertices)
        np.maximum.at(pressure, tri[free_cells].ravel(), np.repeat(score[free_cells], 3))
        removable = np.flatnonzero(chosen & touch_free[tri].any(1))
        if len(removable) == 0:
            break
        rem_score = pressure[tri[removable]].max(1)
        out = removable[np.lexsort((removable, -rem_score))[0]]
        trial = chosen.copy()
        trial[out] = False
        tcon = constrained_from(trial)
        tfull = _closure(mesh, tcon)
        cidx = np.flatnonzero(~tfull & tcon[tri].any(1) & ~trial)
        cidx = cidx[cidx != out]
        if len(cidx) == 0:
            break
        add = cidx[np.lexsort((cidx, score[cidx]))[0]]
        trial[add] = True
        tcon = constrained_from(trial)
        if not eps <= _zero_area(mesh, tcon) <= eps + cell_max:
            break
        tpair = problem.solve(tcon, start=pair.field)
        record(tpair, trial)
        if tpair.value < pair.value:
            chosen, con, pair = trial, tcon, tpair
        else:
            break

    # the trace only holds candidates meeting the volume constraint
    best = min(trace, key=lambda c: c.eigenvalue)
    region = best.region
    best.classification = classify_nodes(mesh, region)
    best.capacity = relative_capacity(mesh, best.classification, problem.base.field, problem.K).value
    return OptimizationResult(best, trace, time.perf_counter() - t0)


# ----------------------------------------------------------------------
# penalized functional


def _unit_ball_volume(n):
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def gamma_threshold(lam, domain_area, eps, dim=2):
    """Penalty weight above which the penalized and constrained problems agree."""
    if not 0 < eps < domain_area:
        raise ParameterError("need 0 < eps < |D|")
    wn = _unit_ball_volume(dim)
    return 2 * domain_area * lam**2 / (dim * wn ** (2 / dim) * (domain_area - eps) ** (2 * (dim - 1) / dim))


@dataclass(frozen=True)
class PenaltyParams:
    lam: float
    gamma: float
    eps: float

    @classmethod
    def above_threshold(cls, lam, domain_area, eps, factor=1.5):
        return cls(lam, factor * gamma_threshold(lam, domain_area, eps), eps)


def support_area(mesh, v, atol=1e-12):
    """Area of the cells on which ``v`` has a vertex value above ``atol`` in magnitude."""
    nz = np.abs(np.asarray(v))[mesh.triangles] > atol
    return float(mesh.areas[nz.any(1)].sum())


def penalized_objective(v, mesh, params: PenaltyParams, stiffness=None, mass=None):
    """``v'Kv + lam [1 - v'Mv]^+ + gamma [|{v != 0}| - |D| + eps]^+`` with ``|D|`` the mesh area."""
    K = assemble_stiffness(mesh) if stiffness is None else stiffness
    M = assemble_mass(mesh) if mass is None else mass
    v = np.asarray(v, dtype=float)
    total = mesh.total_area
    if not params.gamma > gamma_threshold(params.lam, total, params.eps):
        raise ParameterError("gamma must exceed the threshold")
    energy = float(v @ (K @ v))
    mass_gap = max(1 - float(v @ (M @ v)), 0.0)
    area_gap = max(support_area(mesh, v) - total + params.eps, 0.0)
    return energy + params.lam * mass_gap + params.gamma * area_gap

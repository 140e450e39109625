"""Local boundary-flattening charts.

Near an anchor ``x0`` on the boundary, write the boundary as a graph
``y_N = g(y')`` over the tangent line, with the ``y_N`` axis pointing into
the domain, ``g(0) = 0`` and ``g'(0) = 0``. The chart

    F(y1, y2) = (y1 - y2 g'(y1), y2 + g(y1))

(expressed in that local frame) sends the flat half-disk onto a curved
half-neighbourhood, ``y2 = 0`` onto the boundary, and has ``DF(0) = I``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..errors import ConstructionError
from .domains import BoundaryPoint, DomainSpec, inradius

ROUND_TRIP_TOL = 1e-8


class _DomainGraph:
    """The boundary of a domain near ``t0`` written as a graph over its tangent."""

    def __init__(self, domain: DomainSpec, t0: float, origin, tangent, inward):
        self.domain = domain
        self.t0 = t0
        self.origin = origin
        self.tangent = tangent
        self.inward = inward
        self.speed0 = float(np.linalg.norm(domain.curve(t0)[1]))

    def _local(self, t):
        p, dp, d2p = self.domain.curve(t)
        d = p - self.origin
        return (
            d @ self.tangent, d @ self.inward,
            dp @ self.tangent, dp @ self.inward,
            d2p @ self.tangent, d2p @ self.inward,
        )

    def param(self, y1):
        """Curve parameter whose tangential coordinate equals ``y1``."""
        y1 = np.asarray(y1, dtype=float)
        t = self.t0 + y1 / self.speed0
        for _ in range(60):
            xi, _, dxi, _, _, _ = self._local(t)
            if np.any(dxi <= 0):
                raise ConstructionError("boundary is not a graph over the tangent line")
            step = (xi - y1) / dxi
            t = t - step
            if np.all(np.abs(step) < 1e-15 * (1 + np.abs(t))):
                break
        return t

    def __call__(self, y1):
        t = self.param(y1)
        _, zeta, dxi, dzeta, d2xi, d2zeta = self._local(t)
        if np.any(dxi <= 1e-3 * self.speed0):
            raise ConstructionError("tangent turns through a right angle inside the chart")
        g1 = dzeta / dxi
        g2 = (d2zeta * dxi - dzeta * d2xi) / dxi**3
        return zeta, g1, g2


class _ClosedFormGraph:
    def __init__(self, g, dg, d2g):
        self.g, self.dg, self.d2g = g, dg, d2g

    def __call__(self, y1):
        y1 = np.asarray(y1, dtype=float)
        one = np.ones_like(y1)
        return self.g(y1) * one, self.dg(y1) * one, self.d2g(y1) * one


@dataclass(frozen=True, eq=False)
class StraighteningMap:
    """Chart ``F`` around a boundary anchor, valid on the half-disk of ``radius``.

    ``forward`` and ``inverse`` work in global coordinates; ``local``
    gives the coordinates of a global point in the anchor frame (tangent,
    inward normal).
    """

    anchor: BoundaryPoint
    graph: Callable
    radius: float
    domain: DomainSpec | None = None

    @property
    def origin(self):
        return self.anchor.x

    @property
    def tangent(self):
        return self.anchor.tangent

    @property
    def inward(self):
        return -self.anchor.normal

    def local(self, x):
        d = np.atleast_2d(x) - self.origin
        return np.stack([d @ self.tangent, d @ self.inward], -1)

    def to_global(self, X):
        X = np.atleast_2d(X)
        return self.origin + X[:, :1] * self.tangent + X[:, 1:2] * self.inward

    def forward_local(self, y):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        g, g1, _ = self.graph(y[:, 0])
        return np.stack([y[:, 0] - y[:, 1] * g1, y[:, 1] + g], -1)

    def forward(self, y):
        return self.to_global(self.forward_local(y))

    def jacobian_det(self, y):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        _, g1, g2 = self.graph(y[:, 0])
        return 1 + g1**2 - y[:, 1] * g2

    def inverse_local(self, X, max_iter=40):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y1 = X[:, 0].copy()
        g, _, _ = self.graph(y1)
        y2 = X[:, 1] - g
        for _ in range(max_iter):
            g, g1, g2 = self.graph(y1)
            r1 = y1 - y2 * g1 - X[:, 0]
            r2 = y2 + g - X[:, 1]
            a, b, c = 1 - y2 * g2, -g1, g1
            det = a + g1**2
            d1 = (r1 - b * r2) / det
            d2 = (a * r2 - c * r1) / det
            y1 = y1 - d1
            y2 = y2 - d2
            if max(np.max(np.abs(d1), initial=0), np.max(np.abs(d2), initial=0)) < 1e-15:
                break
        return np.stack([y1, y2], -1)

    def inverse(self, x):
        return self.inverse_local(self.local(x))


def half_ball_samples(radius, n=50, include_flat=True):
    """Points of a ``n x n`` grid lying in the closed upper half-disk."""
    g1 = np.linspace(-radius, radius, n)
    g2 = np.linspace(0.0 if include_flat else radius / n, radius, n)
    y = np.stack(np.meshgrid(g1, g2), -1).reshape(-1, 2)
    return y[np.hypot(y[:, 0], y[:, 1]) <= radius * (1 - 1e-12)]


def _chart_ok(smap, radius, domain):
    y = half_ball_samples(radius)
    try:
        if np.any(smap.jacobian_det(y) <= 0):
            return False
        err = np.max(np.abs(smap.inverse_local(smap.forward_local(y)) - y))
    except ConstructionError:
        return False
    if not np.isfinite(err) or err > ROUND_TRIP_TOL:
        return False
    if domain is not None:
        inner = y[y[:, 1] > 0]
        if not np.all(domain.contains(smap.forward(inner), closed=True, tol=1e-12)):
            return False
    return True


def straightening_map(domain: DomainSpec, s0: float, r0=None, r_min=None) -> StraighteningMap:
    """Flattening chart of ``domain`` at arc parameter ``s0``.

    The validity radius is found by halving ``r0`` (default: the inradius)
    until the sampled round trip, positivity of ``det DF`` and containment
    of the image all hold.
    """
    anchor = domain.boundary_point(s0)
    graph = _DomainGraph(domain, anchor.t, anchor.x, anchor.tangent, -anchor.normal)
    r = inradius(domain) if r0 is None else r0
    r_min = 1e-4 * domain.boundary_length if r_min is None else r_min
    while r >= r_min:
        smap = StraighteningMap(anchor, graph, r, domain)
        if _chart_ok(smap, r, domain):
            return smap
        r /= 2
    raise ConstructionError(f"no valid chart at s0={s0} down to radius {r_min}")


def graph_map(g, dg, d2g, radius, origin=(0.0, 0.0), tangent=(1.0, 0.0)) -> StraighteningMap:
    """Chart for an explicit local graph ``g`` (with ``g(0) = g'(0) = 0``)."""
    tangent = np.asarray(tangent, dtype=float)
    tangent = tangent / np.linalg.norm(tangent)
    normal = np.array([tangent[1], -tangent[0]])
    anchor = BoundaryPoint(s=0.0, x=np.asarray(origin, dtype=float), normal=normal, tangent=tangent)
    smap = StraighteningMap(anchor, _ClosedFormGraph(g, dg, d2g), radius)
    if not _chart_ok(smap, radius, None):
        raise ConstructionError("explicit graph chart fails the round-trip check")
    return smap

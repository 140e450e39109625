"""Competitor obstacles of prescribed area.

A boundary bump is built in straightened coordinates as the subgraph

    R(r, eta) = {|y1| <= r, 0 <= y2 <= eta / (r V) * h(y1 / r)}

of a profile ``h`` supported in ``[-1/2, 1/2]`` with ``V = int h``, so that
``|R(r, eta)| = eta``. Mapping it through the chart gives a region of area
``|F(R)|``, and ``eta`` is tuned by bisection until that area equals the
target volume.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

from ..errors import ParameterError, ReachError
from .straighten import StraighteningMap, half_ball_samples


@dataclass(frozen=True)
class Profile:
    name: str
    h: Callable
    volume: float


def _cos2(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) <= 0.5, np.cos(np.pi * u) ** 2, 0.0)


def _quartic(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) <= 0.5, (1 - 4 * u * u) ** 2, 0.0)


PROFILES = {
    "cos2": Profile("cos2", _cos2, 0.5),
    "quartic": Profile("quartic", _quartic, 8.0 / 15.0),
}


def get_profile(name):
    try:
        return PROFILES[name]
    except KeyError:
        raise ParameterError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}") from None


@dataclass(frozen=True)
class BumpObstacleSpec:
    anchor: float
    width: float
    volume: float
    profile: str = "cos2"

    def __post_init__(self):
        get_profile(self.profile)
        if not self.width > 0:
            raise ParameterError("bump width must be positive")
        if self.volume < 0:
            raise ParameterError("target volume must be nonnegative")

    @property
    def h(self):
        return get_profile(self.profile).h

    @property
    def profile_volume(self):
        return get_profile(self.profile).volume

    @property
    def max_eta(self):
        """Upper end of the admissible ``eta`` range (exclusive)."""
        r, V = self.width, self.profile_volume
        return min(r, r * r * V * math.sqrt(3) / 2)


@dataclass(frozen=True)
class ReferenceBump:
    """The flat-coordinate region ``R(r, eta)``."""

    width: float
    eta: float
    profile: Profile

    @property
    def area(self):
        return self.eta

    def height(self, y1):
        r = self.width
        return self.eta / (r * self.profile.volume) * self.profile.h(np.asarray(y1) / r)

    def contains(self, y, tol=1e-12):
        y = np.atleast_2d(y)
        top = self.height(y[:, 0])
        return (
            (np.abs(y[:, 0]) <= self.width * (1 + 1e-12))
            & (y[:, 1] >= -tol)
            & (y[:, 1] <= top + tol)
        )


def bump_region(spec: BumpObstacleSpec, eta: float) -> ReferenceBump:
    if not 0 <= eta < spec.max_eta:
        raise ParameterError(f"eta={eta} outside [0, {spec.max_eta})")
    return ReferenceBump(spec.width, float(eta), get_profile(spec.profile))


_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)


def mapped_area(smap: StraighteningMap, spec: BumpObstacleSpec, eta: float, panels=24) -> float:
    """Area of ``F(R(r, eta))``.

    ``det DF`` is affine in ``y2``, so each column integrates exactly; the
    remaining integral over the profile support uses composite
    Gauss-Legendre with panels aligned to the support.
    """
    bump = bump_region(spec, eta)
    half = spec.width / 2
    edges = np.linspace(-half, half, panels + 1)
    mid, rad = (edges[1:] + edges[:-1]) / 2, (edges[1:] - edges[:-1]) / 2
    y1 = (mid[:, None] + rad[:, None] * _GL_X[None, :]).ravel()
    w = (rad[:, None] * _GL_W[None, :]).ravel()
    top = bump.height(y1)
    _, g1, g2 = smap.graph(y1)
    return float(np.sum(w * (top * (1 + g1**2) - 0.5 * top**2 * g2)))


def midpoint_area(smap: StraighteningMap, spec: BumpObstacleSpec, eta: float, n=200) -> float:
    """Independent 200 x 200 midpoint estimate of ``|F(R(r, eta))|``."""
    bump = bump_region(spec, eta)
    half = spec.width / 2
    u = (np.arange(n) + 0.5) / n
    y1 = -half + spec.width * u
    top = bump.height(y1)
    y = np.stack(np.broadcast_arrays(y1[:, None], top[:, None] * u[None, :]), -1).reshape(-1, 2)
    det = smap.jacobian_det(y).reshape(n, n)
    return float(np.sum(det.mean(1) * top) * spec.width / n)


def _det_bounds(smap, radius):
    y = half_ball_samples(radius, 60)
    det = smap.jacobian_det(y)
    return float(det.max()), float((1 / det).max())


def match_volume(spec: BumpObstacleSpec, smap: StraighteningMap, rtol=1e-10, max_iter=60) -> float:
    """``eta`` with ``|F(R(r, eta))| = spec.volume``, by bisection."""
    eps = spec.volume
    if eps == 0:
        return 0.0
    if spec.width >= smap.radius:
        raise ParameterError(f"bump width {spec.width} not below chart radius {smap.radius}")
    eta_hat = spec.max_eta / 2
    if mapped_area(smap, spec, eta_hat) < eps:
        raise ReachError(f"volume {eps} not reachable with width {spec.width}")
    det_f, det_g = _det_bounds(smap, spec.width)
    lo = eps / det_f * (1 - 1e-9)
    hi = min(eps * det_g * (1 + 1e-9), eta_hat)
    f_lo = mapped_area(smap, spec, lo) - eps
    if f_lo > 0:
        lo = 0.0
    if mapped_area(smap, spec, hi) - eps < 0:
        hi = eta_hat
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        f = mapped_area(smap, spec, mid) - eps
        if abs(f) <= rtol * eps:
            return mid
        if f < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


class ObstacleRegion:
    """A compact obstacle K with a membership test and boundary samples."""

    kind = "abstract"
    volume: float

    def contains(self, x):
        raise NotImplementedError

    def boundary_samples(self, n=512):
        raise NotImplementedError

    def quadrature(self):
        """Points and weights integrating over the region."""
        raise NotImplementedError

    def params(self):
        return {}

    def to_json(self, n=512):
        return json.dumps(
            {
                "type": self.kind,
                "params": self.params(),
                "volume": self.volume,
                "boundary_samples": self.boundary_samples(n).tolist(),
            }
        )


class BumpRegion(ObstacleRegion):
    """``H(r, eps) = F(R(r, eta_eps))``."""

    kind = "bump"

    def __init__(self, spec: BumpObstacleSpec, smap: StraighteningMap, eta: float):
        self.spec = spec
        self.map = smap
        self.eta = eta
        self.reference = bump_region(spec, eta)
        self.volume = midpoint_area(smap, spec, eta) if eta > 0 else 0.0
        outline = self.boundary_samples(400)
        pad = 1e-9 + 1e-6 * spec.width
        self._lo = outline.min(0) - pad
        self._hi = outline.max(0) + pad

    def contains(self, x, tol=1e-12):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros(len(x), dtype=bool)
        near = np.all((x >= self._lo) & (x <= self._hi), axis=1)
        if np.any(near):
            y = self.map.inverse(x[near])
            out[near] = self.reference.contains(y, tol=tol)
        return out

    def boundary_samples(self, n=512):
        r = self.spec.width
        n_base = n // 2
        base = np.stack([np.linspace(-r, r, n_base), np.zeros(n_base)], -1)
        if self.eta == 0:
            base = np.stack([np.linspace(-r, r, n), np.zeros(n)], -1)
            return self.map.forward(base)
        y1 = np.linspace(-r / 2, r / 2, n - n_base)
        top = np.stack([y1, self.reference.height(y1)], -1)
        return self.map.forward(np.concatenate([base, top]))

    def top_curve(self, n=400):
        r = self.spec.width
        y1 = np.linspace(-r / 2, r / 2, n)
        return self.map.forward(np.stack([y1, self.reference.height(y1)], -1))

    def quadrature(self, n=120):
        r = self.spec.width
        u = (np.arange(n) + 0.5) / n
        y1 = -r / 2 + r * u
        top = self.reference.height(y1)
        y = np.stack(np.broadcast_arrays(y1[:, None], top[:, None] * u[None, :]), -1).reshape(-1, 2)
        w = (self.map.jacobian_det(y).reshape(n, n) * (top[:, None] / n) * (r / n)).ravel()
        return self.map.forward(y), w

    def params(self):
        return {
            "anchor": self.spec.anchor,
            "width": self.spec.width,
            "target_volume": self.spec.volume,
            "profile": self.spec.profile,
            "eta": self.eta,
        }


def obstacle_region(spec: BumpObstacleSpec, smap: StraighteningMap) -> BumpRegion:
    """The competitor ``H(r, eps)`` with volume checked to 0.1%."""
    eta = match_volume(spec, smap)
    region = BumpRegion(spec, smap, eta)
    if spec.volume > 0 and abs(region.volume - spec.volume) > 1e-3 * spec.volume:
        raise ReachError(
            f"quadrature volume {region.volume} misses target {spec.volume} by more than 0.1%"
        )
    return region


class CellRegion(ObstacleRegion):
    """Union of closed mesh triangles."""

    kind = "cells"

    def __init__(self, mesh, cells):
        self.mesh = mesh
        self.cells = np.unique(np.asarray(cells, dtype=int))
        self.volume = float(mesh.areas[self.cells].sum())
        self._tree = None

    def vertex_mask(self, mesh):
        """Exact vertex membership when ``mesh`` is the defining mesh."""
        mask = np.zeros(mesh.n_vertices, dtype=bool)
        mask[mesh.triangles[self.cells].ravel()] = True
        return mask

    def contains(self, x, tol=1e-12):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros(len(x), dtype=bool)
        if len(self.cells) == 0:
            return out
        tri = self.mesh.vertices[self.mesh.triangles[self.cells]]
        if self._tree is None:
            self._tree = cKDTree(tri.mean(1))
        k = min(8, len(self.cells))
        _, idx = self._tree.query(x, k=k)
        idx = np.atleast_2d(idx.T).T if k > 1 else idx[:, None]
        for j in range(idx.shape[1]):
            p = tri[idx[:, j]]
            bary = _barycentric(p, x)
            out |= np.all(bary >= -tol, axis=1)
        return out

    def boundary_samples(self, n=512):
        tri = self.mesh.triangles[self.cells]
        edges = np.sort(np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]]), axis=1)
        uniq, count = np.unique(edges, axis=0, return_counts=True)
        bnd = uniq[count == 1]
        v = self.mesh.vertices
        pts = np.concatenate([v[np.unique(bnd)], 0.5 * (v[bnd[:, 0]] + v[bnd[:, 1]])])
        return pts

    def quadrature(self):
        tri = self.mesh.vertices[self.mesh.triangles[self.cells]]
        return tri.mean(1), self.mesh.areas[self.cells]

    def params(self):
        return {"n_cells": int(len(self.cells))}


def _barycentric(p, x):
    a, b, c = p[:, 0], p[:, 1], p[:, 2]
    v0, v1, v2 = b - a, c - a, x - a
    den = v0[:, 0] * v1[:, 1] - v0[:, 1] * v1[:, 0]
    l1 = (v2[:, 0] * v1[:, 1] - v2[:, 1] * v1[:, 0]) / den
    l2 = (v0[:, 0] * v2[:, 1] - v0[:, 1] * v2[:, 0]) / den
    return np.stack([1 - l1 - l2, l1, l2], -1)

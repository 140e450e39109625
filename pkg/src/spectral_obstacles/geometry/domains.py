"""Smooth planar boxes and their boundary parameterizations.

Every domain exposes a curve parameter ``t`` (an angle for the smooth kinds,
arc length for the square) and the arc-length parameter ``s`` used by the
public API. Conversions between the two are done with a composite
Gauss-Legendre table that is accurate to roughly machine precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from ..errors import ParameterError

KINDS = ("disk", "ellipse", "square", "polar")

_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)
_N_PANELS = 512


@dataclass(frozen=True)
class BoundaryPoint:
    s: float
    x: np.ndarray
    normal: np.ndarray
    tangent: np.ndarray
    t: float = math.nan


@dataclass(frozen=True, eq=False)
class DomainSpec:
    """A bounded planar box D.

    ``kind`` selects the shape. ``polar`` is a smooth star-shaped domain
    whose boundary is the polar graph
    ``rho(t) = radius * (1 + sum c_k cos(k t) + d_k sin(k t))`` with
    ``modes = ((k, c_k, d_k), ...)``.
    """

    kind: str
    radius: float = 1.0
    a: float = 1.0
    b: float = 1.0
    side: float = 1.0
    modes: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown domain kind {self.kind!r}")
        for name in ("radius", "a", "b", "side"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive")
        if self.kind == "polar":
            amp = sum(abs(c) + abs(d) for _, c, d in self.modes)
            if amp >= 1:
                raise ParameterError("polar modes must keep rho(t) > 0")
        object.__setattr__(self, "modes", tuple(tuple(m) for m in self.modes))

    @classmethod
    def disk(cls, radius=1.0):
        return cls("disk", radius=radius)

    @classmethod
    def ellipse(cls, a, b):
        return cls("ellipse", a=a, b=b)

    @classmethod
    def square(cls, side=1.0):
        return cls("square", side=side)

    @classmethod
    def polar(cls, radius, modes):
        return cls("polar", radius=radius, modes=tuple(modes))

    def params(self):
        """Shape parameters as a JSON-friendly dict."""
        out = {"kind": self.kind}
        if self.kind in ("disk", "polar"):
            out["radius"] = self.radius
        if self.kind == "ellipse":
            out.update(a=self.a, b=self.b)
        if self.kind == "square":
            out["side"] = self.side
        if self.kind == "polar":
            out["modes"] = [list(m) for m in self.modes]
        return out

    # ------------------------------------------------------------------
    # curve in the native parameter t

    @property
    def period(self):
        return 4 * self.side if self.kind == "square" else 2 * math.pi

    def _rho(self, t):
        t = np.asarray(t, dtype=float)
        r = np.ones_like(t)
        dr = np.zeros_like(t)
        d2r = np.zeros_like(t)
        for k, c, d in self.modes:
            ck, sk = np.cos(k * t), np.sin(k * t)
            r = r + c * ck + d * sk
            dr = dr + k * (-c * sk + d * ck)
            d2r = d2r - k * k * (c * ck + d * sk)
        return self.radius * r, self.radius * dr, self.radius * d2r

    def curve(self, t):
        """Position, first and second derivative of the boundary at ``t``."""
        t = np.asarray(t, dtype=float)
        if self.kind == "square":
            return self._square_curve(t)
        c, s = np.cos(t), np.sin(t)
        if self.kind == "disk":
            R = self.radius
            p = R * np.stack([c, s], -1)
            dp = R * np.stack([-s, c], -1)
            return p, dp, -p
        if self.kind == "ellipse":
            p = np.stack([self.a * c, self.b * s], -1)
            dp = np.stack([-self.a * s, self.b * c], -1)
            return p, dp, -p
        r, dr, d2r = self._rho(t)
        e = np.stack([c, s], -1)
        f = np.stack([-s, c], -1)
        p = r[..., None] * e
        dp = dr[..., None] * e + r[..., None] * f
        d2p = (d2r - r)[..., None] * e + 2 * dr[..., None] * f
        return p, dp, d2p

    def _square_curve(self, t):
        L = self.side
        t = np.mod(t, 4 * L)
        side = np.minimum((t // L).astype(int), 3)
        u = t - side * L
        starts = np.array([[0, 0], [L, 0], [L, L], [0, L]], dtype=float)
        dirs = np.array([[1, 0], [0, 1], [-1, 0], [0, -1]], dtype=float)
        p = starts[side] + u[..., None] * dirs[side]
        return p, dirs[side], np.zeros_like(p)

    # ------------------------------------------------------------------
    # arc length

    @cached_property
    def _arc_table(self):
        dt = self.period / _N_PANELS
        left = np.arange(_N_PANELS) * dt
        nodes = left[:, None] + 0.5 * dt * (_GL_X[None, :] + 1)
        speed = np.linalg.norm(self.curve(nodes)[1], axis=-1)
        panel = 0.5 * dt * speed @ _GL_W
        return dt, np.concatenate([[0.0], np.cumsum(panel)])

    @cached_property
    def boundary_length(self):
        if self.kind == "disk":
            return 2 * math.pi * self.radius
        if self.kind == "square":
            return 4 * self.side
        return float(self._arc_table[1][-1])

    @cached_property
    def area(self):
        if self.kind == "disk":
            return math.pi * self.radius**2
        if self.kind == "ellipse":
            return math.pi * self.a * self.b
        if self.kind == "square":
            return self.side**2
        # 1/2 * closed integral of rho^2 dt
        dt, _ = self._arc_table
        left = np.arange(_N_PANELS) * dt
        nodes = left[:, None] + 0.5 * dt * (_GL_X[None, :] + 1)
        r = self._rho(nodes)[0]
        return float(0.25 * dt * np.sum((r**2) @ _GL_W))

    def arc_length(self, t):
        """Arc parameter ``s`` of the curve parameter ``t`` (vectorized)."""
        t = np.asarray(t, dtype=float)
        if self.kind == "square":
            return np.mod(t, self.period)
        if self.kind == "disk":
            return self.radius * np.mod(t, self.period)
        t = np.mod(t, self.period)
        dt, cum = self._arc_table
        k = np.minimum((t // dt).astype(int), _N_PANELS - 1)
        t0 = k * dt
        half = 0.5 * (t - t0)
        nodes = t0[..., None] + half[..., None] * (_GL_X + 1)
        speed = np.linalg.norm(self.curve(nodes)[1], axis=-1)
        return cum[k] + half * (speed @ _GL_W)

    def param_of_arc(self, s):
        """Curve parameter ``t`` for arc parameter ``s`` (Newton on the table)."""
        s = np.mod(np.asarray(s, dtype=float), self.boundary_length)
        if self.kind == "square":
            return s
        if self.kind == "disk":
            return s / self.radius
        t = s * self.period / self.boundary_length
        for _ in range(50):
            speed = np.linalg.norm(self.curve(t)[1], axis=-1)
            step = (self.arc_length(t) - s) / speed
            t = t - step
            if np.all(np.abs(step) < 1e-15 * self.period):
                break
        return t

    # ------------------------------------------------------------------

    def boundary_point(self, s):
        """Position, unit outward normal and unit tangent at arc parameter ``s``."""
        if not 0 <= s < self.boundary_length:
            raise ParameterError(
                f"arc parameter {s} outside [0, {self.boundary_length})"
            )
        t = float(self.param_of_arc(s))
        p, dp, _ = self.curve(t)
        tangent = dp / np.linalg.norm(dp)
        normal = np.array([tangent[1], -tangent[0]])
        return BoundaryPoint(s=float(s), x=p, normal=normal, tangent=tangent, t=t)

    def level(self, x):
        """Signed shape function: negative inside, zero on the boundary."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.kind == "disk":
            return np.hypot(x[:, 0], x[:, 1]) / self.radius - 1
        if self.kind == "ellipse":
            return np.hypot(x[:, 0] / self.a, x[:, 1] / self.b) - 1
        if self.kind == "square":
            L = self.side
            return np.max(np.stack([-x[:, 0], x[:, 0] - L, -x[:, 1], x[:, 1] - L]), 0) / L
        rho = self._rho(np.arctan2(x[:, 1], x[:, 0]))[0]
        return np.hypot(x[:, 0], x[:, 1]) / rho - 1

    def contains(self, x, closed=False, tol=1e-9):
        lev = self.level(x)
        return lev <= tol if closed else lev < 0

    @cached_property
    def _samples(self):
        n = 4096
        t = np.arange(n) * self.period / n
        return t, self.curve(t)[0]

    def project(self, x):
        """Curve parameter ``t`` of the closest boundary point to each of ``x``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        ts, ps = self._samples
        _, idx = cKDTree(ps).query(x)
        t = ts[idx]
        if self.kind == "square":
            L = self.side
            side = np.minimum((t // L).astype(int), 3)
            starts = np.array([[0, 0], [L, 0], [L, L], [0, L]], dtype=float)
            dirs = np.array([[1, 0], [0, 1], [-1, 0], [0, -1]], dtype=float)
            u = np.clip(np.einsum("ij,ij->i", x - starts[side], dirs[side]), 0, L)
            return side * L + u
        for _ in range(30):
            p, dp, d2p = self.curve(t)
            d = p - x
            f = np.einsum("ij,ij->i", d, dp)
            df = np.einsum("ij,ij->i", dp, dp) + np.einsum("ij,ij->i", d, d2p)
            step = f / df
            t = t - step
            if np.all(np.abs(step) < 1e-14):
                break
        return np.mod(t, self.period)

    def boundary_samples(self, n=512):
        """``n`` boundary points equally spaced in arc length, with their ``s``."""
        s = np.arange(n) * self.boundary_length / n
        return s, self.curve(self.param_of_arc(s))[0]


def inradius(domain: DomainSpec) -> float:
    """Radius of the largest disk inscribed in the domain."""
    if domain.kind == "disk":
        return domain.radius
    if domain.kind == "ellipse":
        return min(domain.a, domain.b)
    if domain.kind == "square":
        return domain.side / 2
    return _inradius_search(domain)


def _inradius_search(domain, n=41, rounds=8):
    _, pts = domain.boundary_samples(20000)
    tree = cKDTree(pts)
    lo, hi = pts.min(0), pts.max(0)
    center, half = (lo + hi) / 2, (hi - lo) / 2
    best_r, best_c = 0.0, center
    for _ in range(rounds):
        g = np.linspace(-1, 1, n)
        cand = center + np.stack(np.meshgrid(g * half[0], g * half[1]), -1).reshape(-1, 2)
        cand = cand[domain.contains(cand)]
        if len(cand) == 0:
            break
        d, _ = tree.query(cand)
        k = int(np.argmax(d))
        if d[k] > best_r:
            best_r, best_c = float(d[k]), cand[k]
        center = best_c
        half = half * 4 / (n - 1)
    return best_r


def faber_krahn_threshold(domain: DomainSpec) -> float:
    """Smallest obstacle volume above which a ball is an optimal free set."""
    return domain.area - math.pi * inradius(domain) ** 2

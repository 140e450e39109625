"""Relative Dirichlet capacity of an obstacle with respect to ``phi_0``.

The capacitary potential ``V`` is the discrete harmonic extension of
``phi_0`` from the obstacle vertices, with ``V = 0`` on the outer boundary.
Its energy ``V^T K V`` is the smallest energy among fields with that trace.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ParameterError, UndefinedRatioError
from .fem import LinearSolveReport, cell_gradients, cg_solve

log = logging.getLogger(__name__)

CG_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class CapacityResult:
    value: float
    potential: np.ndarray
    report: LinearSolveReport


def _masks(mesh, classification):
    obstacle = np.asarray(classification.obstacle, dtype=bool)
    outer = mesh.outer
    return obstacle & ~outer, outer


def capacitary_potential(mesh, classification, phi0, stiffness=None, tol=CG_TOL, start=None):
    """Harmonic extension of ``phi0`` off the obstacle; returns ``(V, report)``."""
    from .fem import assemble_stiffness

    K = assemble_stiffness(mesh) if stiffness is None else stiffness
    phi0 = np.asarray(phi0, dtype=float)
    obs, outer = _masks(mesh, classification)
    V = np.zeros(mesh.n_vertices)
    if not obs.any():
        return V, LinearSolveReport(0, 0.0, True)
    V[obs] = phi0[obs]
    free = ~(obs | outer)
    if not free.any():
        return V, LinearSolveReport(0, 0.0, True)
    idx = np.flatnonzero(free)
    Kff = K[idx][:, idx].tocsr()
    rhs = -(K[idx] @ V)
    x0 = None if start is None else np.asarray(start, dtype=float)[idx]
    x, rep = cg_solve(Kff, rhs, tol=tol, x0=x0)
    if not rep.converged:
        raise NumericError(f"capacitary potential CG stalled at residual {rep.residual:.2e}")
    V[idx] = x
    lo, hi = V.min(), phi0[obs].max()
    if lo < -1e-8 or V.max() > hi + 1e-8:
        log.warning("discrete maximum principle violated by %.2e", max(-lo, V.max() - hi))
    return V, rep


def relative_capacity(mesh, classification, phi0, stiffness=None, tol=CG_TOL, start=None) -> CapacityResult:
    from .fem import assemble_stiffness

    K = assemble_stiffness(mesh) if stiffness is None else stiffness
    V, rep = capacitary_potential(mesh, classification, phi0, K, tol=tol, start=start)
    return CapacityResult(max(float(V @ (K @ V)), 0.0), V, rep)


def stability_ratio(lam_e, lam0, cap):
    """``(lam_e - lam0) / cap``, which tends to 1 as the obstacle shrinks."""
    if not cap > 0:
        raise UndefinedRatioError("stability ratio undefined for zero capacity")
    return (lam_e - lam0) / cap


def capacity_lower_bound(mesh, classification, phi0, eps):
    """``(1/eps) * sum |grad phi0|^2 |T|`` over cells with all vertices in the obstacle."""
    obstacle = np.asarray(classification.obstacle, dtype=bool)
    if not obstacle.any():
        raise ParameterError("empty obstacle")
    if not eps > 0:
        raise ParameterError("eps must be positive")
    covered = obstacle[mesh.triangles].all(1)
    g2 = np.sum(cell_gradients(mesh, phi0)[covered] ** 2, axis=1)
    return float(np.sum(g2 * mesh.areas[covered]) / eps)

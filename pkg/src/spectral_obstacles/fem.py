"""P1 finite elements: assembly, Dirichlet elimination and PCG."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import AssemblyError, NumericError, ParameterError


def _element_geometry(mesh, cells=None):
    t = mesh.triangles if cells is None else mesh.triangles[cells]
    p = mesh.vertices[t]
    area = mesh.areas if cells is None else mesh.areas[cells]
    if not np.all(np.isfinite(area) & (area > 0)):
        bad = int(np.argmin(area))
        raise AssemblyError(f"degenerate triangle {bad} with area {area[bad]:.3e}")
    # opposite edges rotated by 90 degrees give the barycentric gradients
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], 1)
    grad = np.stack([-e[..., 1], e[..., 0]], -1) / (2 * area)[:, None, None]
    return area, grad


def _scatter(mesh, local):
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_vertices
    op = sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))
    op.sum_duplicates()
    op.sort_indices()
    return op


def cell_gradients(mesh, u, cells=None):
    """Constant gradient of a P1 field on each triangle (or on ``cells`` only)."""
    _, grad = _element_geometry(mesh, cells)
    t = mesh.triangles if cells is None else mesh.triangles[cells]
    return np.einsum("tik,ti->tk", grad, np.asarray(u)[t])


def assemble_stiffness(mesh) -> sp.csr_matrix:
    """``K_ij = int grad(phi_i) . grad(phi_j)``."""
    area, grad = _element_geometry(mesh)
    local = np.einsum("tik,tjk->tij", grad, grad) * area[:, None, None]
    return _scatter(mesh, local)


_MASS_REF = (np.ones((3, 3)) + np.eye(3)) / 12


def assemble_mass(mesh) -> sp.csr_matrix:
    """Consistent mass matrix ``M_ij = int phi_i phi_j``."""
    area, _ = _element_geometry(mesh)
    return _scatter(mesh, _MASS_REF[None] * area[:, None, None])


def as_mask(constrained, n):
    mask = np.zeros(n, dtype=bool)
    c = np.asarray(constrained)
    if c.dtype == bool:
        if c.shape != (n,):
            raise ParameterError("constraint mask has the wrong length")
        return c.copy()
    if c.size and (c.min() < 0 or c.max() >= n):
        raise ParameterError("constrained index out of range")
    mask[c.astype(int)] = True
    return mask


def apply_dirichlet(op, constrained, diagonal=1.0):
    """Zero constrained rows and columns and put ``diagonal`` on them.

    ``constrained`` is a boolean mask or an index array. Use
    ``diagonal=0`` for the mass matrix so the eliminated dofs carry no
    spurious eigenvalues below the physical ones.
    """
    n = op.shape[0]
    mask = as_mask(constrained, n)
    if mask.all():
        raise ParameterError("every vertex is constrained")
    if not mask.any():
        return op.copy()
    keep = sp.diags((~mask).astype(float))
    out = (keep @ op @ keep).tocsr()
    out = out + sp.diags(mask * float(diagonal))
    out = out.tocsr()
    out.eliminate_zeros()
    out.sort_indices()
    return out


@dataclass(frozen=True)
class LinearSolveReport:
    iterations: int
    residual: float
    converged: bool


def cg_solve(op, rhs, tol=1e-10, x0=None, maxiter=None):
    """Jacobi-preconditioned conjugate gradients.

    Stops when ``|b - A x| <= tol |b|`` or after ``10 n`` iterations.
    """
    if not 0 < tol < 1:
        raise ParameterError("tol must lie in (0, 1)")
    b = np.asarray(rhs, dtype=float)
    n = len(b)
    if not np.all(np.isfinite(b)):
        raise NumericError("non-finite right-hand side")
    maxiter = 10 * n if maxiter is None else maxiter
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros(n), LinearSolveReport(0, 0.0, True)
    diag = op.diagonal()
    if np.any(diag <= 0):
        raise NumericError("operator has a nonpositive diagonal entry")
    dinv = 1.0 / diag
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - op @ x
    z = dinv * r
    p = z.copy()
    rz = r @ z
    res = np.linalg.norm(r) / bnorm
    it = 0
    while res > tol and it < maxiter:
        ap = op @ p
        pap = p @ ap
        if not np.isfinite(pap) or pap <= 0:
            raise NumericError("operator is not positive definite")
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        it += 1
        res = np.linalg.norm(r) / bnorm
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    if not np.isfinite(res):
        raise NumericError("CG produced non-finite values")
    return x, LinearSolveReport(it, float(res), bool(res <= tol))


def _check_dim(u, op):
    u = np.asarray(u, dtype=float)
    if u.shape != (op.shape[0],):
        raise ParameterError(f"field of length {u.shape} does not match operator {op.shape}")
    return u


def h1_seminorm_sq(u, stiffness):
    u = _check_dim(u, stiffness)
    return float(u @ (stiffness @ u))


def l2_norm_sq(u, mass):
    u = _check_dim(u, mass)
    return float(u @ (mass @ u))

import math

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

from spectral_obstacles.errors import AssemblyError, NumericError, ParameterError
from spectral_obstacles.fem import (
    apply_dirichlet,
    assemble_mass,
    assemble_stiffness,
    cell_gradients,
    cg_solve,
    h1_seminorm_sq,
    l2_norm_sq,
)
from spectral_obstacles.geometry import DomainSpec
from spectral_obstacles.mesh import Mesh, triangulate


def _mesh(vertices, triangles):
    v = np.asarray(vertices, dtype=float)
    t = np.asarray(triangles)
    edges = np.array([[0, 1], [1, 2], [2, 0]])
    return Mesh(v, t, edges, np.ones(len(v), dtype=np.int8), math.nan, None)


@pytest.fixture(scope="module")
def square():
    return triangulate(DomainSpec.square(), 0.02)


def test_reference_element_stiffness():
    K = assemble_stiffness(_mesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])).toarray()
    ref = np.array([[1, -0.5, -0.5], [-0.5, 0.5, 0], [-0.5, 0, 0.5]])
    np.testing.assert_allclose(K, ref, atol=1e-15)


def test_reference_element_mass():
    M = assemble_mass(_mesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])).toarray()
    ref = 0.5 / 12 * np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]])
    np.testing.assert_allclose(M, ref, atol=1e-15)


def test_degenerate_triangle_rejected():
    m = _mesh([[0, 0], [1, 0], [2, 0]], [[0, 1, 2]])
    with pytest.raises(AssemblyError):
        assemble_stiffness(m)


def test_element_matrices_are_rotation_and_translation_invariant():
    rng = np.random.default_rng(5)
    p = rng.normal(size=(3, 2))
    d1, d2 = p[1] - p[0], p[2] - p[0]
    if d1[0] * d2[1] - d1[1] * d2[0] < 0:
        p = p[[0, 2, 1]]
    th = 0.7
    R = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
    q = p @ R.T + [3.0, -1.0]
    a, b = _mesh(p, [[0, 1, 2]]), _mesh(q, [[0, 1, 2]])
    np.testing.assert_allclose(assemble_stiffness(a).toarray(), assemble_stiffness(b).toarray(), atol=1e-12)
    np.testing.assert_allclose(assemble_mass(a).toarray(), assemble_mass(b).toarray(), atol=1e-12)


def test_stiffness_properties(square):
    K = assemble_stiffness(square)
    assert abs(K - K.T).max() < 1e-14
    one = np.ones(square.n_vertices)
    assert h1_seminorm_sq(one, K) == pytest.approx(0, abs=1e-10)
    x = square.vertices[:, 0]
    assert h1_seminorm_sq(x, K) == pytest.approx(1.0, abs=1e-10)
    rng = np.random.default_rng(0)
    u = rng.normal(size=square.n_vertices)
    assert h1_seminorm_sq(u, K) > 0


def test_mass_integrates_constants(square):
    one = np.ones(square.n_vertices)
    assert l2_norm_sq(one, assemble_mass(square)) == pytest.approx(1.0, abs=1e-10)
    disk = triangulate(DomainSpec.disk(), 0.05)
    area = l2_norm_sq(np.ones(disk.n_vertices), assemble_mass(disk))
    assert area == pytest.approx(math.pi, abs=2 * 0.05**2)
    assert area < math.pi


def test_mass_integrates_quadratics_exactly(square):
    # int_0^1 int_0^1 x y = 1/4 is exact for the consistent mass on P1 data
    M = assemble_mass(square)
    x, y = square.vertices.T
    assert float(x @ (M @ y)) == pytest.approx(0.25, abs=1e-12)


def test_cell_gradients_of_linear_field(square):
    u = 3 * square.vertices[:, 0] - 2 * square.vertices[:, 1]
    np.testing.assert_allclose(cell_gradients(square, u), np.tile([3.0, -2.0], (square.n_triangles, 1)), atol=1e-10)


def test_norm_dimension_check(square):
    with pytest.raises(ParameterError):
        l2_norm_sq(np.ones(3), assemble_mass(square))


# ---------------------------------------------------------------- dirichlet


def test_empty_constraint_leaves_operator_unchanged(square):
    K = assemble_stiffness(square)
    out = apply_dirichlet(K, np.zeros(square.n_vertices, dtype=bool))
    assert abs(out - K).max() == 0


def test_all_constrained_rejected(square):
    with pytest.raises(ParameterError):
        apply_dirichlet(assemble_stiffness(square), np.ones(square.n_vertices, dtype=bool))


def test_dirichlet_rows_become_identity(square):
    K = apply_dirichlet(assemble_stiffness(square), square.outer)
    idx = np.flatnonzero(square.outer)
    np.testing.assert_array_equal(K[idx].toarray(), np.eye(square.n_vertices)[idx])
    assert abs(K - K.T).max() < 1e-14


def test_reduced_pencil_tends_to_two_pi_squared():
    errs = []
    for h in (0.1, 0.05):
        m = triangulate(DomainSpec.square(), h)
        free = ~m.outer
        K = assemble_stiffness(m)[free][:, free]
        M = assemble_mass(m)[free][:, free]
        lam = eigsh(K.tocsc(), k=1, M=M.tocsc(), sigma=0, which="LM")[0][0]
        errs.append(lam - 2 * math.pi**2)
    assert errs[0] > errs[1] > 0
    assert 3.2 <= errs[0] / errs[1] <= 4.8


# ---------------------------------------------------------------- cg


def test_cg_trivial_cases():
    A = sp.identity(5, format="csr")
    x, rep = cg_solve(A, np.zeros(5))
    assert rep.iterations == 0 and not x.any()
    e1 = np.eye(5)[0]
    x, rep = cg_solve(A, e1)
    np.testing.assert_allclose(x, e1)
    assert rep.iterations <= 1 and rep.converged


def test_cg_rejects_non_finite_rhs():
    with pytest.raises(NumericError):
        cg_solve(sp.identity(3, format="csr"), np.array([1.0, np.nan, 0.0]))


def test_cg_rejects_indefinite_operator():
    A = sp.diags([1.0, 1.0, 1.0]).tocsr() + sp.csr_matrix(np.array([[0, 2.0, 0], [2.0, 0, 0], [0, 0, 0]]))
    with pytest.raises(NumericError):
        cg_solve(A, np.array([1.0, -1.0, 0.0]))


def test_cg_matches_direct_solve(square):
    free = ~square.outer
    K = assemble_stiffness(square)[free][:, free].tocsr()
    b = np.random.default_rng(1).normal(size=K.shape[0])
    x, rep = cg_solve(K, b, tol=1e-12)
    assert rep.converged
    np.testing.assert_allclose(x, sp.linalg.spsolve(K.tocsc(), b), rtol=1e-8, atol=1e-10)


def _poisson_centre_series(terms=400):
    # u(1/2, 1/2) for -lap u = 1 on the unit square, by double sine series
    k = np.arange(1, 2 * terms, 2)
    m, n = np.meshgrid(k, k)
    sign = np.sin(m * math.pi / 2) * np.sin(n * math.pi / 2)
    return float(np.sum(16 / (math.pi**4 * m * n * (m**2 + n**2)) * sign))


def test_poisson_centre_value(square):
    ref = _poisson_centre_series()
    assert ref == pytest.approx(0.07367, abs=1e-5)
    free = ~square.outer
    K = assemble_stiffness(square)[free][:, free].tocsr()
    b = (assemble_mass(square) @ np.ones(square.n_vertices))[free]
    x, rep = cg_solve(K, b)
    u = np.zeros(square.n_vertices)
    u[free] = x
    centre = square.interpolate(u, [[0.5, 0.5]])[0]
    assert centre == pytest.approx(ref, abs=2e-3)

import math

import numpy as np
import pytest

from spectral_obstacles.capacity import (
    capacitary_potential,
    capacity_lower_bound,
    relative_capacity,
    stability_ratio,
)
from spectral_obstacles.errors import ParameterError, UndefinedRatioError
from spectral_obstacles.geometry import BumpObstacleSpec, DomainSpec, obstacle_region
from spectral_obstacles.mesh import BoundaryLayer, classify_nodes, triangulate
from spectral_obstacles.optimize import ObstacleProblem, eigen_with_obstacle
from spectral_obstacles.spectral import J01


class _Disk:
    def __init__(self, c, r):
        self.c, self.r = np.asarray(c, dtype=float), r

    def contains(self, x):
        return np.hypot(*(np.atleast_2d(x) - self.c).T) <= self.r


class _Nothing:
    def contains(self, x):
        return np.zeros(len(np.atleast_2d(x)), dtype=bool)


@pytest.fixture(scope="module")
def problem():
    return ObstacleProblem(triangulate(DomainSpec.disk(), 0.05), tol=1e-9)


def test_empty_obstacle_has_zero_potential(problem):
    m = problem.mesh
    cl = classify_nodes(m, _Nothing())
    V, rep = capacitary_potential(m, cl, problem.base.field)
    assert not V.any() and rep.converged
    assert relative_capacity(m, cl, problem.base.field).value == 0


def test_boundary_arc_has_zero_capacity(problem):
    reg = obstacle_region(BumpObstacleSpec(0.0, 0.3, 0.0), problem.chart(0.0))
    cl = classify_nodes(problem.mesh, reg)
    assert relative_capacity(problem.mesh, cl, problem.base.field).value == 0


def test_full_interior_obstacle_reproduces_phi0(problem):
    m = problem.mesh
    cl = classify_nodes(m, _Disk([0, 0], 0.999999))
    V, _ = capacitary_potential(m, cl, problem.base.field)
    inner = ~m.outer
    np.testing.assert_allclose(V[inner], problem.base.field[inner], atol=1e-14)
    cap = relative_capacity(m, cl, problem.base.field, problem.K).value
    assert cap == pytest.approx(problem.lam0, rel=1e-8)


def test_potential_is_the_energy_minimizer(problem):
    m, K = problem.mesh, problem.K
    cl = classify_nodes(m, _Disk([0.5, 0.1], 0.15))
    res = relative_capacity(m, cl, problem.base.field, K)
    V = res.potential
    free = ~(cl.inner_obstacle | m.outer)
    rng = np.random.default_rng(0)
    for _ in range(20):
        w = np.zeros(m.n_vertices)
        w[free] = rng.normal(size=free.sum())
        t = rng.uniform(-1e-2, 1e-2)
        W = V + t * w
        assert float(W @ (K @ W)) >= res.value - 1e-12
    # first variation vanishes in the free directions
    g = K @ V
    assert np.max(np.abs(g[free])) < 1e-8


def test_potential_obeys_maximum_principle(problem):
    m = problem.mesh
    cl = classify_nodes(m, _Disk([0.5, 0.1], 0.15))
    V, _ = capacitary_potential(m, cl, problem.base.field, problem.K)
    assert V.min() >= -1e-10
    assert V.max() <= problem.base.field[cl.inner_obstacle].max() + 1e-10


def test_capacity_bounded_by_lambda0(problem):
    m = problem.mesh
    for r in (0.1, 0.3, 0.6):
        cl = classify_nodes(m, _Disk([0.2, -0.1], r))
        cap = relative_capacity(m, cl, problem.base.field, problem.K).value
        assert 0 < cap <= problem.lam0 * (1 + 1e-12)


def test_capacity_grows_with_the_set(problem):
    m = problem.mesh
    caps = [
        relative_capacity(m, classify_nodes(m, _Disk([0.1, 0.2], r)), problem.base.field, problem.K).value
        for r in (0.05, 0.1, 0.2, 0.4)
    ]
    assert np.all(np.diff(caps) > 0)


def test_eigenvalue_shift_is_of_capacity_order(problem):
    cl = classify_nodes(problem.mesh, _Disk([0.6, 0.0], 0.08))
    cand = eigen_with_obstacle(problem, _Disk([0.6, 0.0], 0.08))
    ratio = stability_ratio(cand.eigenvalue, problem.lam0, cand.capacity)
    assert ratio > 0
    assert cand.capacity == pytest.approx(
        relative_capacity(problem.mesh, cl, problem.base.field, problem.K).value, rel=1e-10
    )


def test_ratio_undefined_for_zero_capacity():
    with pytest.raises(UndefinedRatioError):
        stability_ratio(5.0, 5.0, 0.0)
    assert stability_ratio(5.1, 5.0, 0.2) == pytest.approx(0.5)


# ---------------------------------------------------------------- lower bound


def test_lower_bound_vanishes_at_critical_point(problem):
    m = problem.mesh
    cl = classify_nodes(m, _Disk([0.0, 0.0], 0.08))
    eps = math.pi * 0.08**2
    lb = capacity_lower_bound(m, cl, problem.base.field, eps)
    # |grad phi0| grows linearly from the centre, so the bound is O(r^2)
    assert 0 <= lb < 0.05 * J01**2 / math.pi


def test_lower_bound_near_boundary_bump():
    m = triangulate(DomainSpec.disk(), 0.02, BoundaryLayer(0.02, 5e-5, 1.08, 0.001))
    prob = ObstacleProblem(m)
    reg = obstacle_region(BumpObstacleSpec(0.0, 0.4, 0.002), prob.chart(0.0))
    cl = classify_nodes(m, reg)
    lb = capacity_lower_bound(m, cl, prob.base.field, 0.002)
    assert lb == pytest.approx(J01**2 / math.pi, rel=0.15)


def test_lower_bound_argument_checks(problem):
    m = problem.mesh
    with pytest.raises(ParameterError):
        capacity_lower_bound(m, classify_nodes(m, _Nothing()), problem.base.field, 0.01)
    with pytest.raises(ParameterError):
        capacity_lower_bound(m, classify_nodes(m, _Disk([0, 0], 0.2)), problem.base.field, 0.0)

from __future__ import annotations

import numpy as np
import pytest
from scipy.optimize import minimize

from sweepcontrol.geometry import (GeneratorSet, GeometryError, active_indices, distance_to_translate,
                                   linear_independence_check, min_norm_nonneg_combination,
                                   normal_cone_contains, project_cone_of_generators,
                                   project_translated_polyhedron, split_indices)


def random_set(rng, n, m):
    return GeneratorSet(rng.normal(size=(m, n)))


def slsqp_projection(y, C, u):
    cons = {"type": "ineq", "fun": lambda x: -(C.matrix @ (x - u)), "jac": lambda x: -C.matrix}
    res = minimize(lambda x: 0.5 * np.sum((x - y) ** 2), u.copy(), jac=lambda x: x - y,
                   constraints=[cons], method="SLSQP", options={"ftol": 1e-14, "maxiter": 500})
    return res.x


def test_generator_validation():
    with pytest.raises(GeometryError):
        GeneratorSet([[0.0, 0.0]])
    with pytest.raises(GeometryError):
        GeneratorSet([[np.nan]])
    C = GeneratorSet.from_rows([[1.0, 0.0], [0.0, 1.0]])
    assert (C.m, C.n) == (2, 2)
    assert C.contains(np.array([-1.0, -2.0]), np.zeros(2))
    assert not C.contains(np.array([1.0, -2.0]), np.zeros(2))


def test_projection_onto_orthant_is_clipping(rng):
    C = GeneratorSet(np.eye(3))
    for _ in range(50):
        y = rng.normal(size=3)
        u = rng.normal(size=3)
        p, lam = project_translated_polyhedron(y, C, u)
        np.testing.assert_allclose(p, np.minimum(y, u), atol=1e-12)
        np.testing.assert_allclose(lam, np.maximum(y - u, 0.0), atol=1e-12)


def test_projection_of_feasible_point_is_identity(rng):
    C = random_set(rng, 3, 4)
    p, _ = project_translated_polyhedron(np.zeros(3), C)
    np.testing.assert_allclose(p, 0.0, atol=1e-14)


@pytest.mark.parametrize("n,m", [(1, 1), (2, 3), (3, 5), (4, 6), (2, 6)])
def test_projection_matches_slsqp(rng, n, m):
    for _ in range(20):
        C = random_set(rng, n, m)
        y = rng.normal(size=n) * 2
        u = rng.normal(size=n)
        p, lam = project_translated_polyhedron(y, C, u)
        q = slsqp_projection(y, C, u)
        assert np.linalg.norm(y - p) <= np.linalg.norm(y - q) + 1e-7
        assert np.max(C.values(p - u)) <= 1e-9
        np.testing.assert_allclose(y - p, C.matrix.T @ lam, atol=1e-9)
        assert np.min(lam) >= 0
        assert np.max(np.abs(lam * C.values(p - u))) <= 1e-9


def test_dependent_generators_handled(rng):
    C = GeneratorSet([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [2.0, 1.0]])
    p, lam = project_translated_polyhedron(np.array([3.0, 2.0]), C)
    np.testing.assert_allclose(p, [0.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(C.matrix.T @ lam, [3.0, 2.0], atol=1e-10)


def test_active_indices_and_split():
    C = GeneratorSet([[1.0, 0.0], [0.0, 1.0], [1.0, 2.0]])
    act = active_indices(np.array([0.0, -1.0]), C)
    assert act.indices == frozenset({0}) and not act.outside
    assert active_indices(np.array([1.0, -1.0]), C).outside
    part = split_indices(np.array([0.0, 2.0]), [0, 1], C)
    assert part.zero_part == frozenset({0}) and part.pos_part == frozenset({1})
    assert part.support == frozenset({0, 1})


def test_linear_independence():
    assert linear_independence_check(np.eye(2))
    assert not linear_independence_check(np.array([[1.0, 0.0], [2.0, 0.0]]))
    assert not linear_independence_check(np.ones((3, 2)))
    assert linear_independence_check(np.zeros((0, 2)))


def test_min_norm_combination_prefers_small_coefficients():
    gens = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    coef, res = min_norm_nonneg_combination(gens, np.array([1.0, 1.0]))
    assert res <= 1e-10
    np.testing.assert_allclose(gens.T @ coef, [1.0, 1.0], atol=1e-10)
    # c1 = c2 = 1 - c3 with c3 = 2/3 minimizes the norm
    assert np.linalg.norm(coef) == pytest.approx(np.sqrt(2.0 / 3.0), abs=1e-6)


def test_cone_projection_moreau(rng):
    gens = rng.normal(size=(4, 3))
    for _ in range(20):
        w = rng.normal(size=3)
        p, coef = project_cone_of_generators(w, gens)
        np.testing.assert_allclose(gens.T @ coef, p, atol=1e-10)
        # residual lies in the polar cone and is orthogonal to the projection
        assert np.max(gens @ (w - p)) <= 1e-9
        assert abs((w - p) @ p) <= 1e-9


def test_normal_cone_membership():
    C = GeneratorSet([[1.0, 0.0], [0.0, 1.0]])
    assert normal_cone_contains(np.zeros(2), np.array([1.0, 2.0]), C).contains
    assert not normal_cone_contains(np.zeros(2), np.array([-1.0, 2.0]), C).contains
    assert normal_cone_contains(np.array([0.0, -1.0]), np.array([3.0, 0.0]), C).contains
    assert not normal_cone_contains(np.array([0.0, -1.0]), np.array([0.0, 1.0]), C).contains
    out = normal_cone_contains(np.array([1.0, 0.0]), np.zeros(2), C)
    assert not out.contains and out.reason


def test_distance_to_translate():
    C = GeneratorSet([[1.0]])
    assert distance_to_translate(np.array([3.0]), C, np.array([1.0])) == pytest.approx(2.0)
    assert distance_to_translate(np.array([-3.0]), C, np.array([1.0])) == 0.0

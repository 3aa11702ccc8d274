from __future__ import annotations

import numpy as np
import pytest

from refs import random_references
from sweepcontrol import (ContinuousPath, DiscreteTriple, GeneratorSet, Mesh, PerturbationField,
                          ProblemSpec, QuadraticRunningCost, QuadraticTerminalCost, SmoothPath, approximate_feasible,
                          check_discrete_constraints, discrete_cost, discrete_cost_and_gradient,
                          mu_constants)
from sweepcontrol.discretization import ReferenceInfeasibleError, proximity_terms, u_rate_gradients


def test_mesh_band_indices():
    m = Mesh(10, 1.0, 0.1)
    assert (m.j_tau, m.j_tau_upper) == (1, 9)
    assert not m.in_band(0) and m.in_band(1) and m.in_band(9) and not m.in_band(10)
    m0 = Mesh(10, 1.0, 0.0)
    assert (m0.j_tau, m0.j_tau_upper) == (0, 10)
    empty = Mesh(10, 1.0, 0.6)
    assert not any(empty.in_band(j) for j in range(11))
    # t_j <= T - tau must hold for the upper index even off the grid
    m3 = Mesh(3, 1.0, 0.5)
    assert m3.j_tau_upper == 1 and m3.times[m3.j_tau_upper] <= 0.5
    with pytest.raises(ValueError):
        Mesh(0, 1.0)


def test_triple_round_trip():
    z = DiscreteTriple(Mesh(3, 2.0, 0.5), np.arange(4.0), np.ones(4), np.arange(8.0).reshape(4, 2))
    w = DiscreteTriple.from_dict(z.to_dict())
    np.testing.assert_array_equal(w.a, z.a)
    np.testing.assert_array_equal(z.with_flat(z.flatten()).x, z.x)


def test_mu_constants_for_linear_reference(scalar_spec):
    mesh = Mesh(10, 1.0, 0.1)
    consts = mu_constants(scalar_spec.reference, scalar_spec, mesh)
    # every defect quantity vanishes for an exactly linear reference, so the floor applies
    assert consts.reference_defect < 1e-10
    assert consts.gap_bound == pytest.approx(2 * mesh.h * consts.reference_defect)


def test_proximity_zero_on_reference_sampling(scalar_spec):
    mesh = Mesh(5, 1.0, 0.1)
    z = DiscreteTriple.sample(scalar_spec.reference, mesh)
    vals, thetas = proximity_terms(z, scalar_spec.reference)
    assert np.max(np.abs(vals)) < 1e-15
    assert max(np.max(np.abs(t)) for th in thetas for t in th) < 1e-15


def _fd_check(z, ref, spec, mu_tilde, step=1e-6):
    _, grad = discrete_cost_and_gradient(z, ref, spec, mu_tilde)
    flat = z.flatten()
    fd = np.zeros_like(flat)
    for i in range(flat.size):
        e = np.zeros_like(flat)
        e[i] = step
        fd[i] = (discrete_cost(z.with_flat(flat + e), ref, spec, mu_tilde)
                 - discrete_cost(z.with_flat(flat - e), ref, spec, mu_tilde)) / (2 * step)
    an = grad.flatten()
    return np.linalg.norm(an - fd) / max(1.0, np.linalg.norm(fd))


def test_cost_gradient_against_finite_differences(rng):
    C = GeneratorSet([[1.0, 0.0], [0.3, 1.0]])
    f = PerturbationField([[0.2, 0.1], [0.0, -0.1]], np.eye(2), lipschitz=1.0)
    H = rng.normal(size=(12, 12))
    H = H @ H.T / 12
    spec = ProblemSpec(C, f, [-1.0, -1.0], 1.0, 1.0, 0.2, QuadraticTerminalCost(np.eye(2), [1.0, 0.0]),
                       QuadraticRunningCost(2, 2, H, rng.normal(size=12)), u0=[0.0, 0.0])
    t = np.linspace(0, 1, 7)
    ref = ContinuousPath(t, rng.normal(size=(7, 2)), np.c_[np.sin(t), np.cos(t)], rng.normal(size=(7, 2)))
    mesh = Mesh(6, 1.0, 0.2)
    for _ in range(3):
        z = DiscreteTriple(mesh, rng.normal(size=(7, 2)), rng.normal(size=(7, 2)), rng.normal(size=(7, 2)))
        # small cap so that both u-rate penalties are active
        assert _fd_check(z, ref, spec, mu_tilde=0.1) < 1e-6


def test_u_rate_gradients_simple():
    u = np.array([[0.0], [1.0], [3.0]])
    first, g1, second, g2 = u_rate_gradients(u, 0.5)
    assert first == pytest.approx(2.0)
    assert second == pytest.approx(2.0)
    np.testing.assert_allclose(g1[:, 0], [-2.0, 2.0, 0.0])
    np.testing.assert_allclose(g2[:, 0], [2.0, -4.0, 2.0])


def test_reference_sampling_satisfies_constraints(scalar_spec):
    mesh = Mesh(10, 1.0, 0.1)
    z = DiscreteTriple.sample(scalar_spec.reference, mesh)
    consts = mu_constants(scalar_spec.reference, scalar_spec, mesh)
    table = check_discrete_constraints(z, scalar_spec.reference, scalar_spec, consts.gap_bound,
                                       consts.variation_cap)
    assert table.satisfied(1e-12)
    assert set(table.maxima) == {"inclusion", "initial", "terminal", "control_norm", "proximity",
                                 "velocity_proximity", "initial_u_rate", "u_rate_variation"}


def test_infeasible_reference_rejected(scalar_spec):
    bad = ContinuousPath([0.0, 1.0], [[0.0], [0.5]], [[1.0], [1.0]], [[0.5], [0.5]])
    with pytest.raises(ReferenceInfeasibleError) as exc:
        approximate_feasible(bad, scalar_spec, Mesh(4, 1.0, 0.1))
    assert exc.value.violations


@pytest.mark.parametrize("k", [5, 20])
def test_state_gap_within_bound_on_random_references(k):
    for spec, ref in random_references(8, seed=3):
        mesh = Mesh.for_problem(spec, k)
        z, report = approximate_feasible(ref, spec, mesh)
        assert report.max_state_gap <= report.gap_bound
        assert report.residuals.maxima["inclusion"] <= 1e-8


def test_approximation_in_band_keeps_sphere():
    C = GeneratorSet([[1.0, 0.0], [0.0, 1.0]])
    f = PerturbationField(np.zeros((2, 2)), np.eye(2), lipschitz=0.0, growth=5.0)
    spec = ProblemSpec(C, f, [np.cos(0.0) - 0.5, np.sin(0.0) - 0.5], 1.0, 1.0, 0.2,
                       QuadraticTerminalCost(np.eye(2), [0, 0]), QuadraticRunningCost.from_blocks(2, 2, {}),
                       u0=[1.0, 0.0])
    circ = lambda t: np.array([np.cos(t), np.sin(t)])
    tang = lambda t: np.array([-np.sin(t), np.cos(t)])
    ref = SmoothPath(1.0, lambda t: circ(t) - 0.5, circ, lambda t: -tang(t), tang, tang, circ)
    z, report = approximate_feasible(ref, spec, Mesh.for_problem(spec, 8))
    norms = np.linalg.norm(z.u, axis=1)
    mesh = z.mesh
    for j in range(mesh.k + 1):
        if mesh.in_band(j):
            assert norms[j] == pytest.approx(1.0, abs=1e-12)

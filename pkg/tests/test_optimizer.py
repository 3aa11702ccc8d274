from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest

from sweepcontrol import (ContinuousPath, GeneratorSet, Mesh, OptimizerConfig, PerturbationField,
                          ProblemSpec, QuadraticRunningCost, QuadraticTerminalCost, SmoothPath,
                          brute_force_oracle, check_discrete_constraints, convergence_study, discrete_cost,
                          scalar_example_solve, solve_discrete_problem)
from sweepcontrol.optimizer import OracleDimensionError, SolveError


def linear_reference(slope=0.4):
    """Feasible non-optimal reference x = slope t, a = -slope."""
    return ContinuousPath([0.0, 1.0], [[0.0], [slope]], [[1.0], [1.0]], [[-slope], [-slope]])


def test_config_validation():
    with pytest.raises(ValueError):
        OptimizerConfig(rho_growth=1.0)
    with pytest.raises(ValueError):
        OptimizerConfig(constraint_tol=0.0)


def test_single_step_fixed_point(scalar_spec):
    res = solve_discrete_problem(scalar_spec, scalar_spec.reference, Mesh(1, 1.0, 0.1))
    assert res.z_opt.a[0, 0] == pytest.approx(-0.5, abs=1e-8)
    assert res.z_opt.x[1, 0] == pytest.approx(0.5, abs=1e-8)
    assert res.J_value == pytest.approx(0.25, abs=1e-10)


def test_trivial_problem_returns_reference():
    C = GeneratorSet([[1.0, 0.0], [0.0, 1.0]])
    f = PerturbationField(np.zeros((2, 2)), np.zeros((2, 1)), lipschitz=0.0, growth=1.0)
    x0 = np.array([-0.5, -0.2])
    ref = ContinuousPath.constant(1.0, x0, [0.6, 0.8], [0.0])
    spec = ProblemSpec(C, f, x0, 1.0, 1.0, 0.1, QuadraticTerminalCost(np.eye(2), x0),
                       QuadraticRunningCost.from_blocks(2, 1, {}), reference=ref)
    res = solve_discrete_problem(spec, ref, Mesh(4, 1.0, 0.1))
    assert res.J_value == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(res.z_opt.x, np.tile(x0, (5, 1)), atol=1e-10)


@pytest.mark.parametrize("k", [2, 4, 10])
def test_solver_matches_closed_form_against_given_reference(scalar_spec, k):
    ref = linear_reference()
    spec = scalar_spec.with_reference(ref)
    mesh = Mesh(k, 1.0, 0.1)
    xr, _, ar = ref.sample(mesh.times)
    exact = scalar_example_solve(k, "given_reference", alpha=np.diff(xr[:, 0]), beta=np.diff(ar[:, 0]),
                                 a0=-0.4)
    res = solve_discrete_problem(spec, ref, mesh)
    assert np.max(np.abs(res.z_opt.a - exact.z.a)) <= 1e-6
    assert res.J_value == pytest.approx(exact.cost, abs=1e-8)


def test_reported_value_and_feasibility(scalar_spec):
    ref = linear_reference()
    spec = scalar_spec.with_reference(ref)
    config = OptimizerConfig()
    res = solve_discrete_problem(spec, ref, Mesh(4, 1.0, 0.1), config)
    consts = res.constants
    assert abs(res.J_value - discrete_cost(res.z_opt, ref, spec, consts.variation_cap)) <= 1e-12
    table = check_discrete_constraints(res.z_opt, ref, spec, consts.gap_bound, consts.variation_cap)
    assert table.max_violation() <= config.constraint_tol
    for hist in res.merit_history:
        assert all(b <= a + 1e-12 for a, b in zip(hist[:-1], hist[1:]))


def test_oracle_single_step_free_control(scalar_spec):
    res = brute_force_oracle(scalar_spec, scalar_spec.reference, Mesh(1, 1.0, 0.1), pin_initial=False)
    assert res.z_opt.a[0, 0] == pytest.approx(-0.5, abs=1e-3)


@pytest.mark.parametrize("k", [2, 3, 4])
def test_solver_dominates_oracle(scalar_spec, k):
    ref = linear_reference()
    spec = scalar_spec.with_reference(ref)
    mesh = Mesh(k, 1.0, 0.1)
    oracle = brute_force_oracle(spec, ref, mesh)
    res = solve_discrete_problem(spec, ref, mesh)
    assert res.J_value <= oracle.J_value + 1e-3
    assert abs(res.J_value - oracle.J_value) <= 1e-3


def test_oracle_dimension_limit(scalar_spec):
    with pytest.raises(OracleDimensionError):
        brute_force_oracle(scalar_spec, scalar_spec.reference, Mesh(5, 1.0, 0.1))


def test_non_convergence_carries_best_iterate(scalar_spec):
    ref = linear_reference()
    spec = scalar_spec.with_reference(ref)
    config = OptimizerConfig(max_outer=1, max_inner=1, constraint_tol=1e-14, stationarity_tol=1e-14)
    with pytest.raises(SolveError) as exc:
        solve_discrete_problem(spec, ref, Mesh(6, 1.0, 0.1), config)
    assert exc.value.best is not None and exc.value.residuals is not None


def test_constant_control_study_has_zero_gap():
    C = GeneratorSet([[1.0]])
    f = PerturbationField([[0.0]], [[1.0]], lipschitz=0.0, growth=1.0)
    ref = ContinuousPath.constant(1.0, [-0.5], [1.0], [0.0])
    spec = ProblemSpec(C, f, [-0.5], 1.0, 1.0, 0.1, QuadraticTerminalCost([[1.0]], [-0.5]),
                       QuadraticRunningCost.from_blocks(1, 1, {"a": 1.0}), reference=ref)
    study = convergence_study(spec, ref, [4, 8])
    assert all(row.w12_gap_sum <= 1e-14 for row in study.rows)


def test_nonlinear_variant_gap_decreases(scalar_spec):
    """Running cost (a^2 + x^2)/2; the continuous optimum is x = sinh(t)/e, a = -cosh(t)/e."""
    E = math.e
    ref = SmoothPath(1.0, lambda t: np.array([math.sinh(t) / E]), lambda t: np.array([1.0]),
                     lambda t: np.array([-math.cosh(t) / E]), lambda t: np.array([math.cosh(t) / E]),
                     lambda t: np.array([0.0]), lambda t: np.array([-math.sinh(t) / E]))
    spec = replace(scalar_spec, reference=ref,
                   running_cost=QuadraticRunningCost.from_blocks(1, 1, {"a": 1.0, "x": 1.0}))
    study = convergence_study(spec, ref, [10, 20, 40])
    gaps = [row.w12_gap_sum for row in study.rows]
    assert study.nonincreasing and study.halved
    assert gaps[0] / gaps[-1] > 8

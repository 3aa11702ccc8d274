from __future__ import annotations

import numpy as np
import pytest

from sweepcontrol import (ContinuousPath, GeneratorSet, PerturbationField, ProblemSpec,
                          QuadraticRunningCost, QuadraticTerminalCost, catching_up_integrate,
                          project_onto_velocity_set)
from sweepcontrol.dynamics import EmptyImageError, moving_set_modulus_check, wellposedness_bounds


def ramp_problem(T=1.5):
    """x' = 1 until x reaches the fixed wall at 1, so x(t) = min(t, 1)."""
    C = GeneratorSet([[1.0]])
    f = PerturbationField([[0.0]], [[1.0]], [0.0], lipschitz=0.0, growth=1.0)
    spec = ProblemSpec(C, f, [0.0], 1.0, T, 0.0, QuadraticTerminalCost([[1.0]], [0.0]),
                       QuadraticRunningCost.from_blocks(1, 1, {}), u0=[1.0])
    controls = ContinuousPath.constant(T, [0.0], [1.0], [-1.0])
    return spec, controls


def sup_error(path, exact, samples=4001):
    ts = np.linspace(0.0, path.T, samples)
    ts = np.union1d(ts, [1.0])
    return max(abs(path.evaluate(t)[0][0] - exact(t)) for t in ts)


def test_ramp_nodes_exact():
    spec, controls = ramp_problem()
    path = catching_up_integrate(spec, controls, 30)
    np.testing.assert_allclose(path.x[:, 0], np.minimum(path.times, 1.0), atol=1e-14)


def test_ramp_interpolation_error_halves():
    spec, controls = ramp_problem()
    errs = [sup_error(catching_up_integrate(spec, controls, k), lambda t: min(t, 1.0)) for k in (10, 20)]
    assert errs[0] <= 1.5 / 10
    assert errs[0] / errs[1] == pytest.approx(2.0, rel=1e-6)


def test_velocity_set_projection():
    C = GeneratorSet([[1.0, 0.0], [0.0, 1.0]])
    f = PerturbationField(np.zeros((2, 2)), np.eye(2), lipschitz=0.0)
    spec = ProblemSpec(C, f, [0.0, 0.0], 1.0, 1.0, 0.0, QuadraticTerminalCost(np.eye(2), [0, 0]),
                       QuadraticRunningCost.from_blocks(2, 2, {}))
    # at the corner the velocity set is a + R^2_+
    res = project_onto_velocity_set([-1.0, 3.0], [0.0, 0.0], [0.0, 0.0], [1.0, 1.0], spec)
    np.testing.assert_allclose(res.point, [1.0, 3.0])
    assert res.distance == pytest.approx(2.0)
    # interior point: the set is the single drift vector
    res = project_onto_velocity_set([5.0, 5.0], [-1.0, -1.0], [0.0, 0.0], [1.0, 1.0], spec)
    np.testing.assert_allclose(res.point, [1.0, 1.0])
    with pytest.raises(EmptyImageError):
        project_onto_velocity_set([0.0, 0.0], [1.0, 0.0], [0.0, 0.0], [0.0, 0.0], spec)


def test_catching_up_keeps_nodes_in_moving_set(rng):
    C = GeneratorSet([[1.0, 0.2], [-0.3, 1.0]])
    f = PerturbationField([[0.1, 0.0], [0.0, -0.2]], np.eye(2), lipschitz=0.2, growth=5.0)
    spec = ProblemSpec(C, f, [-1.0, -1.0], 1.5, 1.0, 0.0, QuadraticTerminalCost(np.eye(2), [0, 0]),
                       QuadraticRunningCost.from_blocks(2, 2, {}), u0=[0.0, 0.0])
    times = np.linspace(0, 1, 11)
    controls = ContinuousPath(times, np.zeros((11, 2)), np.c_[np.sin(3 * times), -times],
                              rng.normal(size=(11, 2)))
    path = catching_up_integrate(spec, controls, 50)
    for x, u in zip(path.x, path.u):
        assert np.max(C.values(x - u)) <= 1e-9
    bounds = wellposedness_bounds(spec, controls, 50)
    assert np.max(np.linalg.norm(path.x, axis=1)) <= bounds.state_bound
    assert moving_set_modulus_check(controls, C, samples=200) <= 1e-9


def test_invalid_step_count():
    spec, controls = ramp_problem()
    with pytest.raises(ValueError):
        catching_up_integrate(spec, controls, 0)

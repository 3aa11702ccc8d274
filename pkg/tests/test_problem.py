from __future__ import annotations

import numpy as np
import pytest

from sweepcontrol import (GeneratorSet, PerturbationField, ProblemError, ProblemSpec,
                          QuadraticRunningCost, QuadraticTerminalCost)
from sweepcontrol.problem import CallbackRunningCost, CallbackTerminalCost


def make(**kw):
    base = dict(C=GeneratorSet([[1.0]]),
                f=PerturbationField([[0.0]], [[1.0]], [0.0], lipschitz=0.0, growth=2.0),
                x0=[0.0], r=1.0, T=1.0, tau=0.1,
                terminal_cost=QuadraticTerminalCost([[1.0]], [1.0]),
                running_cost=QuadraticRunningCost.from_blocks(1, 1, {"a": 1.0}), u0=[1.0])
    base.update(kw)
    return ProblemSpec(**base)


def test_valid_problem():
    spec = make()
    assert (spec.n, spec.m, spec.d) == (1, 1, 1)
    assert spec.with_tau(0.0).tau == 0.0


def test_tau_above_cap_rejected():
    with pytest.raises(ProblemError) as exc:
        make(tau=1.5)
    assert exc.value.field_path == "tau"


def test_infeasible_initial_state_names_constraint():
    with pytest.raises(ProblemError) as exc:
        make(x0=[2.0])
    assert exc.value.field_path == "x0[constraint 1]"


def test_nonpositive_horizon():
    with pytest.raises(ProblemError) as exc:
        make(T=0.0)
    assert exc.value.field_path == "T"


def test_declared_lipschitz_below_norm():
    with pytest.raises(ProblemError) as exc:
        PerturbationField([[2.0]], [[1.0]], lipschitz=1.0)
    assert "lipschitz" in exc.value.field_path


def test_zero_lipschitz_allowed_for_state_free_drift():
    f = PerturbationField([[0.0]], [[1.0]], lipschitz=0.0, growth=1.0)
    assert f.lipschitz == 0.0
    with pytest.raises(ProblemError):
        PerturbationField([[0.0]], [[1.0]], lipschitz=0.0, growth=0.0)


def test_affine_field_and_jacobians():
    A = np.array([[0.1, 0.2], [0.0, -0.3]])
    B = np.array([[1.0], [2.0]])
    f = PerturbationField(A, B, [0.5, 0.0], lipschitz=1.0)
    x, a = np.array([1.0, 2.0]), np.array([3.0])
    np.testing.assert_allclose(f.value(x, a), A @ x + B @ a + [0.5, 0.0])
    np.testing.assert_allclose(f.jacobian_x(x, a), A)
    np.testing.assert_allclose(f.jacobian_a(x, a), B)


def test_callback_field_uses_finite_differences():
    f = PerturbationField(func=lambda x, a: np.array([np.sin(x[0]) * a[0]]), n=1, d=1, lipschitz=1.0)
    x, a = np.array([0.3]), np.array([2.0])
    np.testing.assert_allclose(f.jacobian_x(x, a), [[np.cos(0.3) * 2.0]], rtol=1e-8)
    np.testing.assert_allclose(f.jacobian_a(x, a), [[np.sin(0.3)]], rtol=1e-8)


def test_costs_value_and_gradient():
    phi = QuadraticTerminalCost([[2.0]], [1.0])
    assert phi.value(np.array([3.0])) == pytest.approx(4.0)
    np.testing.assert_allclose(phi.gradient(np.array([3.0])), [4.0])
    ell = QuadraticRunningCost.from_blocks(1, 1, {"a": 1.0, "dx": 2.0})
    args = (0.0, [1.0], [1.0], [3.0], [0.5], [0.0], [0.0])
    assert ell.value(*args) == pytest.approx(0.5 * 9 + 0.5 * 2 * 0.25)
    g = ell.gradient(*args)
    np.testing.assert_allclose(g, [0, 0, 3.0, 1.0, 0, 0])
    cb = CallbackRunningCost(1, 1, lambda t, x, u, a, dx, du, da: float(a[0] ** 2))
    np.testing.assert_allclose(cb.gradient(*args)[2], 6.0, rtol=1e-7)
    ct = CallbackTerminalCost(lambda x: float(x[0] ** 3))
    assert ct.gradient(np.array([2.0]))[0] == pytest.approx(12.0, rel=1e-7)


def test_running_cost_velocity_block_must_be_psd():
    H = np.zeros((6, 6))
    H[3, 3] = -1.0
    with pytest.raises(ProblemError):
        QuadraticRunningCost(1, 1, H)
    with pytest.raises(ProblemError):
        QuadraticRunningCost.from_blocks(1, 1, {"speed": 1.0})

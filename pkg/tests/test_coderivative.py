from __future__ import annotations

import numpy as np
import pytest

from sweepcontrol import (GeneratorSet, PerturbationField, ProblemSpec, QuadraticRunningCost,
                          QuadraticTerminalCost, coderivative_equality_check, coderivative_upper)
from sweepcontrol.coderivative import (PreconditionError, RankDeficiencyError,
                                       limiting_normal_graph_oracle)


def make(G, A=None, B=None):
    G = np.asarray(G, dtype=float)
    n = G.shape[1]
    A = np.zeros((n, n)) if A is None else np.asarray(A, dtype=float)
    B = np.eye(n) if B is None else np.asarray(B, dtype=float)
    f = PerturbationField(A, B, np.zeros(n), lipschitz=float(np.linalg.norm(A, 2)), growth=1.0)
    return ProblemSpec(GeneratorSet(G), f, np.zeros(n), 1.0, 1.0, 0.0,
                       QuadraticTerminalCost(np.eye(n), np.zeros(n)), QuadraticRunningCost.from_blocks(n, n, {}))


def test_family_structure_1d():
    spec = make([[1.0]])
    fam = coderivative_upper([0.0], [0.0], [0.0], [0.0], [1.0], spec)
    assert fam.partition.pos_part == frozenset({0})
    assert fam.contains([2.0], [-2.0], [1.0]).contains
    assert not fam.contains([-2.0], [2.0], [1.0]).contains
    # y orthogonal to the generator: gamma is free
    fam0 = coderivative_upper([0.0], [0.0], [0.0], [0.0], [0.0], spec)
    assert fam0.contains([-3.0], [3.0], [0.0]).contains


def test_interior_point_gives_drift_adjoint_only():
    spec = make([[1.0]], A=[[0.5]], B=[[2.0]])
    fam = coderivative_upper([-1.0], [0.0], [0.0], [-0.5], [3.0], spec)
    assert fam.support == []
    assert fam.contains([1.5], [0.0], [6.0]).contains
    assert not fam.contains([1.5], [1.0], [6.0]).contains


def test_domain_requires_orthogonality_when_pushing():
    spec = make([[1.0]])
    # w - f = 1 > 0 uses the generator, so y must be orthogonal to it
    fam = coderivative_upper([0.0], [0.0], [0.0], [1.0], [1.0], spec)
    assert not fam.in_domain
    assert not fam.contains([1.0], [-1.0], [1.0]).contains


def test_invalid_base_point():
    spec = make([[1.0]])
    with pytest.raises(PreconditionError):
        coderivative_upper([1.0], [0.0], [0.0], [0.0], [1.0], spec)
    with pytest.raises(PreconditionError):
        coderivative_upper([-1.0], [0.0], [0.0], [1.0], [1.0], spec)


@pytest.mark.parametrize("x,w", [(0.0, 0.0), (-1.0, 0.0), (0.0, 1.0)])
def test_equality_1d(x, w):
    verdict = coderivative_equality_check([x], [0.0], [0.0], [w], make([[1.0]]), samples=64)
    assert verdict.max_violation <= 1e-9


@pytest.mark.parametrize("w", [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])
def test_equality_orthogonal_corner(w):
    spec = make(np.eye(2), A=[[0.3, 0.1], [0.0, 0.2]], B=[[1.0, 2.0], [0.0, 1.0]])
    verdict = coderivative_equality_check([0.0, 0.0], [0.0, 0.0], [0.0, 0.0], w, spec, samples=128)
    assert verdict.independent and verdict.family_in_oracle is not None
    assert verdict.max_violation <= 1e-9


def test_dependent_generators_inclusion_only():
    spec = make([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    with pytest.raises(RankDeficiencyError):
        coderivative_equality_check([0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0], spec)
    verdict = coderivative_equality_check([0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0], spec,
                                          samples=128, require_independence=False)
    assert not verdict.independent and verdict.family_in_oracle is None
    assert verdict.oracle_in_family <= 1e-9


def test_oracle_pieces_at_1d_origin():
    oracle = limiting_normal_graph_oracle([0.0], [0.0], GeneratorSet([[1.0]]))
    # graph of N(.; R_-) near 0: three strata (interior, vertex, ray)
    assert len(oracle.pieces) == 3
    assert oracle.residual(np.array([1.0]), np.array([-1.0])) <= 1e-12  # (1, -1): v>0 on the ray side
    assert oracle.residual(np.array([-1.0]), np.array([-1.0])) > 1e-6

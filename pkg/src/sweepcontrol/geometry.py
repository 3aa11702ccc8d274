"""
Finite-dimensional geometry of a polyhedral cone and its translates.

The cone is C = {x : <g_i, x> <= 0, i = 1..m} for nonzero generators g_i
(stored as the rows of an m x n matrix).  A translate C + u is the set of
points x with x - u in C.  Everything here is a pure function of its
inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import FrozenSet, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import qr
from scipy.optimize import nnls

ACTIVE_TOL = 1e-9
RANK_TOL = 1e-10
ENUMERATION_LIMIT = 12


class GeometryError(ValueError):
    """Raised for malformed generator data."""


@dataclass(frozen=True)
class GeneratorSet:
    """Rows of ``matrix`` are the generators g_1..g_m of the cone.

    Parameters
    ----------
    matrix : array_like, shape (m, n)
        Generator vectors.  Every row must be nonzero.
    """

    matrix: np.ndarray

    def __post_init__(self) -> None:
        mat = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        if mat.ndim != 2 or mat.shape[0] < 1 or mat.shape[1] < 1:
            raise GeometryError("generator matrix must have shape (m, n) with m, n >= 1")
        if not np.all(np.isfinite(mat)):
            raise GeometryError("generators must be finite")
        norms = np.linalg.norm(mat, axis=1)
        bad = np.flatnonzero(norms == 0.0)
        if bad.size:
            raise GeometryError(f"zero generator at index {int(bad[0])}")
        mat = mat.copy()
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]]) -> "GeneratorSet":
        return cls(np.asarray(rows, dtype=float))

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    @property
    def n(self) -> int:
        return self.matrix.shape[1]

    def values(self, x: np.ndarray) -> np.ndarray:
        """Return the vector of <g_i, x>."""
        return self.matrix @ np.asarray(x, dtype=float)

    def contains(self, x: np.ndarray, u: Optional[np.ndarray] = None, tol: float = ACTIVE_TOL) -> bool:
        shift = np.zeros(self.n) if u is None else np.asarray(u, dtype=float)
        return bool(np.all(self.values(np.asarray(x, dtype=float) - shift) <= tol))


@dataclass(frozen=True)
class ActiveIndexPartition:
    """Active indices of a point split by the sign of a direction."""

    active: FrozenSet[int]
    zero_part: FrozenSet[int]
    pos_part: FrozenSet[int]

    def __post_init__(self) -> None:
        if not (self.zero_part | self.pos_part) <= self.active:
            raise GeometryError("partition pieces must lie inside the active set")
        if self.zero_part & self.pos_part:
            raise GeometryError("partition pieces must be disjoint")

    @property
    def support(self) -> FrozenSet[int]:
        return self.zero_part | self.pos_part


@dataclass(frozen=True)
class ActiveSet:
    indices: FrozenSet[int]
    outside: bool


@dataclass(frozen=True)
class ConeMembership:
    """Outcome of a normal-cone membership test."""

    contains: bool
    coefficients: np.ndarray
    residual: float
    reason: str = ""


def active_indices(xbar: np.ndarray, C: GeneratorSet, tol: float = ACTIVE_TOL) -> ActiveSet:
    """Indices with |<g_i, xbar>| <= tol, plus a flag for points outside C."""
    vals = C.values(xbar)
    idx = frozenset(int(i) for i in np.flatnonzero(np.abs(vals) <= tol))
    return ActiveSet(indices=idx, outside=bool(np.any(vals > tol)))


def split_indices(y: np.ndarray, I: Sequence[int], C: GeneratorSet, tol: float = ACTIVE_TOL) -> ActiveIndexPartition:
    """Split the index set I by the sign of <g_i, y>."""
    I = frozenset(int(i) for i in I)
    for i in I:
        if i < 0 or i >= C.m:
            raise GeometryError(f"index {i} out of range for m={C.m}")
    vals = C.values(y)
    zero = frozenset(i for i in I if abs(vals[i]) <= tol)
    pos = frozenset(i for i in I if vals[i] > tol)
    return ActiveIndexPartition(active=I, zero_part=zero, pos_part=pos)


def linear_independence_check(vectors: np.ndarray, tol: float = RANK_TOL) -> bool:
    """True when the rows of ``vectors`` are linearly independent.

    The rank comes from a column-pivoted QR of the transpose; diagonal
    entries below ``tol`` times the largest one count as zero.
    """
    vecs = np.atleast_2d(np.asarray(vectors, dtype=float))
    if vecs.size == 0 or vecs.shape[0] == 0:
        return True
    if vecs.shape[0] > vecs.shape[1]:
        return False
    _, r, _ = qr(vecs.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag[0] == 0.0:
        return False
    rank = int(np.sum(diag > tol * max(diag[0], 1.0)))
    return rank == vecs.shape[0]


def min_norm_nonneg_combination(gens: np.ndarray, target: np.ndarray) -> Tuple[np.ndarray, float]:
    """Nonnegative coefficients c with gens.T @ c close to ``target``.

    Among the minimizers of the residual the smallest-norm coefficient
    vector is returned, so the answer is deterministic for dependent
    generators.  Returns (coefficients, residual norm).
    """
    gens = np.atleast_2d(np.asarray(gens, dtype=float))
    target = np.asarray(target, dtype=float)
    if gens.shape[0] == 0:
        return np.zeros(0), float(np.linalg.norm(target))
    coef, res = nnls(gens.T, target)
    fitted = gens.T @ coef
    if linear_independence_check(gens):
        # coefficients are unique, nothing to break ties over
        return coef, float(res)
    # fix the reachable point and pick the smallest coefficients producing it
    weight = 1e6
    big = np.vstack([weight * gens.T, np.eye(gens.shape[0])])
    rhs = np.concatenate([weight * fitted, np.zeros(gens.shape[0])])
    c2, _ = nnls(big, rhs)
    support = c2 > 0
    if np.any(support):
        sub, *_ = np.linalg.lstsq(gens[support].T, fitted, rcond=None)
        if np.all(sub >= 0):
            c2 = np.zeros_like(c2)
            c2[support] = sub
    res2 = float(np.linalg.norm(gens.T @ c2 - target))
    if res2 <= res + 1e-12:
        return c2, res2
    return coef, float(res)


def _project_cone_enumerate(y: np.ndarray, G: np.ndarray, tol: float) -> Tuple[np.ndarray, np.ndarray]:
    m = G.shape[0]
    lam = np.zeros(m)
    vals = G @ y
    if np.all(vals <= tol):
        return y.copy(), lam
    best = None
    for size in range(1, min(m, G.shape[1]) + 1):
        for S in combinations(range(m), size):
            S = list(S)
            GS = G[S]
            coef, *_ = np.linalg.lstsq(GS.T, y, rcond=None)
            if np.any(coef < -tol):
                continue
            x = y - GS.T @ coef
            if np.all(G @ x <= tol * max(1.0, np.linalg.norm(y))):
                dist = float(np.linalg.norm(y - x))
                if best is None or dist < best[0] - 1e-15:
                    best = (dist, x, S)
        if best is not None:
            break
    if best is None:
        # dependent generators can defeat the square subsets; fall back
        return _project_cone_dual(y, G)
    _, x, S = best
    coef, _ = min_norm_nonneg_combination(G[S], y - x)
    lam[S] = coef
    return x, lam


def _project_cone_dual(y: np.ndarray, G: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    # Moreau: y = proj_C(y) + proj_polar(y); the polar cone is cone{g_i}
    coef, _ = nnls(G.T, y)
    x = y - G.T @ coef
    return x, coef


def project_translated_polyhedron(y: np.ndarray, C: GeneratorSet, u: Optional[np.ndarray] = None,
                                  tol: float = ACTIVE_TOL) -> Tuple[np.ndarray, np.ndarray]:
    """Nearest point of C + u to y, with multipliers.

    Returns (proj, lam) where lam >= 0, y - proj = sum_i lam_i g_i, and
    lam_i <g_i, proj - u> = 0.  Small generator counts use exhaustive
    active-set enumeration; larger ones solve the dual nonnegative least
    squares problem.
    """
    y = np.asarray(y, dtype=float)
    shift = np.zeros(C.n) if u is None else np.asarray(u, dtype=float)
    G = C.matrix
    if C.m <= ENUMERATION_LIMIT:
        x, lam = _project_cone_enumerate(y - shift, G, tol)
    else:
        x, lam = _project_cone_dual(y - shift, G)
    return x + shift, lam


def project_cone_of_generators(w: np.ndarray, gens: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Projection of w onto cone{rows of gens}; returns (point, coefficients)."""
    w = np.asarray(w, dtype=float)
    gens = np.atleast_2d(np.asarray(gens, dtype=float))
    if gens.shape[0] == 0 or gens.size == 0:
        return np.zeros_like(w), np.zeros(0)
    coef, _ = nnls(gens.T, w)
    return gens.T @ coef, coef


def normal_cone_contains(x: np.ndarray, v: np.ndarray, C: GeneratorSet, u: Optional[np.ndarray] = None,
                         tol: float = ACTIVE_TOL) -> ConeMembership:
    """Decide whether v lies in the normal cone of C + u at x."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    shift = np.zeros(C.n) if u is None else np.asarray(u, dtype=float)
    act = active_indices(x - shift, C, tol)
    coeffs = np.zeros(C.m)
    if act.outside:
        return ConeMembership(False, coeffs, float("inf"), reason="x outside set")
    idx = sorted(act.indices)
    if not idx:
        res = float(np.linalg.norm(v))
        return ConeMembership(res <= tol, coeffs, res, reason="" if res <= tol else "interior point")
    c, res = min_norm_nonneg_combination(C.matrix[idx], v)
    coeffs[idx] = c
    ok = res <= tol * max(1.0, float(np.linalg.norm(v)))
    return ConeMembership(ok, coeffs, res, reason="" if ok else "not in cone of active generators")


def distance_to_translate(y: np.ndarray, C: GeneratorSet, u: Optional[np.ndarray] = None) -> float:
    proj, _ = project_translated_polyhedron(y, C, u)
    return float(np.linalg.norm(np.asarray(y, dtype=float) - proj))

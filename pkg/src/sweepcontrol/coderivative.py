"""
Coderivatives of the velocity-set map and a brute-force graph-normal oracle.

For G(x) = N(x; C) and F(x, u, a) = G(x - u) + f(x, a), the coderivative of
F at (x, u, a, w) in a direction y is estimated from above by the family

    (grad_x f^T y + q, -q, grad_a f^T y),   q = sum_i gamma_i g_i,

where i runs over the active indices of x - u split by the sign of
<g_i, y>: gamma_i is free when <g_i, y> = 0 and nonnegative when
<g_i, y> > 0.  The estimate is exact for linearly independent active
generators, which :func:`coderivative_equality_check` tests against an
explicit enumeration of the graph of G in dimensions n <= 2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import chain, combinations
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog, lsq_linear, nnls

from .geometry import (ACTIVE_TOL, ActiveIndexPartition, GeneratorSet, active_indices,
                       linear_independence_check, normal_cone_contains,
                       split_indices)

RAY_SAMPLES = 256
COMPARE_TOL = 1e-9


class PreconditionError(ValueError):
    pass


class RankDeficiencyError(ValueError):
    """Active generators are linearly dependent, so equality is not claimed."""


def _subsets(items: Sequence[int]):
    items = list(items)
    return chain.from_iterable(combinations(items, r) for r in range(len(items) + 1))


@dataclass(frozen=True)
class Membership:
    contains: bool
    residual: float
    gamma: np.ndarray


@dataclass
class CoderivativeFamily:
    """Affine family of upper-estimate elements for one direction y.

    Attributes
    ----------
    y : ndarray
        Direction.
    partition : ActiveIndexPartition
        Active indices of x - u split by the sign of <g_i, y>.
    fx, fa : ndarray
        grad_x f^T y and grad_a f^T y.
    in_domain : bool
        False when y violates the domain pattern (a generator with a
        positive multiplier in w - f must be orthogonal to y).  The
        family is empty then.
    """

    y: np.ndarray
    partition: ActiveIndexPartition
    fx: np.ndarray
    fa: np.ndarray
    generators: np.ndarray
    in_domain: bool = True
    multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def support(self) -> List[int]:
        return sorted(self.partition.support)

    def element(self, gamma) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Assemble (x-block, u-block, a-block) from coefficients over all m generators."""
        gamma = np.asarray(gamma, dtype=float)
        outside = [i for i in range(gamma.size) if i not in self.partition.support and gamma[i] != 0]
        if outside:
            raise ValueError(f"gamma nonzero outside the support: {outside}")
        neg = [i for i in self.partition.pos_part if gamma[i] < 0]
        if neg:
            raise ValueError(f"gamma must be nonnegative on {sorted(self.partition.pos_part)}")
        q = self.generators.T @ gamma
        return self.fx + q, -q, self.fa.copy()

    def contains(self, xs, us, as_, tol: float = COMPARE_TOL) -> Membership:
        """Decide whether (xs, us, as_) belongs to the family.

        Solves min ||(xs - fx, us) - (q, -q)|| over admissible gamma by
        bounded least squares; the a-block must equal fa.
        """
        m = self.generators.shape[0]
        gamma = np.zeros(m)
        xs, us, as_ = (np.asarray(v, dtype=float) for v in (xs, us, as_))
        scale = max(1.0, float(np.linalg.norm(np.concatenate([xs, us, as_]))))
        a_res = float(np.linalg.norm(as_ - self.fa))
        if not self.in_domain:
            return Membership(False, float("inf"), gamma)
        target = np.concatenate([xs - self.fx, us])
        idx = self.support
        if idx:
            G = self.generators[idx]
            M = np.vstack([G.T, -G.T])
            lb = np.array([0.0 if i in self.partition.pos_part else -np.inf for i in idx])
            sol = lsq_linear(M, target, bounds=(lb, np.full(len(idx), np.inf)), method="bvls", tol=1e-14)
            gamma[idx] = sol.x
            res = float(np.linalg.norm(M @ sol.x - target))
        else:
            res = float(np.linalg.norm(target))
        total = float(np.hypot(res, a_res))
        return Membership(total <= tol * scale, total, gamma)

    def sample(self, rng: np.random.Generator, count: int = 1) -> List[np.ndarray]:
        """Random coefficient vectors obeying the sign pattern."""
        out = []
        m = self.generators.shape[0]
        for _ in range(count):
            gamma = np.zeros(m)
            for i in self.partition.zero_part:
                gamma[i] = rng.normal()
            for i in self.partition.pos_part:
                gamma[i] = abs(rng.normal())
            out.append(gamma)
        return out


def validate_base_point(x, u, a, w, spec, tol: float = ACTIVE_TOL):
    """Validate the base point and return (x - u, w - f, multipliers)."""
    x, u, w = (np.asarray(v, dtype=float) for v in (x, u, w))
    xbar = x - u
    act = active_indices(xbar, spec.C, tol)
    if act.outside:
        raise PreconditionError("x - u lies outside the cone")
    wbar = w - spec.f.value(x, a)
    mem = normal_cone_contains(xbar, wbar, spec.C, None, max(tol, 1e-9))
    if not mem.contains:
        raise PreconditionError(f"w is not in the velocity set (residual {mem.residual:.3g})")
    return xbar, wbar, mem.coefficients


def coderivative_upper(x, u, a, w, y, spec, tol: float = ACTIVE_TOL) -> CoderivativeFamily:
    """Upper-estimate family of the coderivative of F at (x, u, a, w) in direction y.

    Parameters
    ----------
    x, u, a : array_like
        Base point with x - u in the cone.
    w : array_like
        Velocity with w in F(x, u, a).
    y : array_like
        Direction.
    spec : ProblemSpec
        Supplies the generators and the perturbation field.

    Returns
    -------
    CoderivativeFamily
    """
    xbar, wbar, coeffs = validate_base_point(x, u, a, w, spec, tol)
    y = np.asarray(y, dtype=float)
    act = active_indices(xbar, spec.C, tol).indices
    part = split_indices(y, act, spec.C, tol)
    fx = spec.f.jacobian_x(x, a).T @ y
    fa = spec.f.jacobian_a(x, a).T @ y
    vals = spec.C.values(y)
    in_domain = all(abs(vals[i]) <= tol for i in range(spec.m) if coeffs[i] > tol)
    return CoderivativeFamily(y, part, fx, fa, spec.C.matrix, in_domain, coeffs)


# oracle -----------------------------------------------------------------

@dataclass
class NormalPiece:
    """Regular normal cone of gph G at one nearby stratum (A, S).

    The cone is the intersection over the graph pieces P_T containing the
    stratum point of N(x'; face_T) x N(w'; cone T), with
    N(x'; face_T) = cone{g_i : i in A} + span{g_i : i in T} and
    N(w'; cone T) = {b : <b, g_i> <= 0 for i in T, <b, w'> = 0}.
    """

    active: Tuple[int, ...]
    support: Tuple[int, ...]
    pieces: Tuple[Tuple[int, ...], ...]
    w_point: np.ndarray
    generators: np.ndarray

    def residual(self, a_part: np.ndarray, b_part: np.ndarray) -> float:
        G = self.generators
        worst = 0.0
        for T in self.pieces:
            A = list(self.active)
            cols_pos = G[A].T if A else np.zeros((G.shape[1], 0))
            cols_free = G[list(T)].T if T else np.zeros((G.shape[1], 0))
            M = np.hstack([cols_pos, cols_free])
            if M.shape[1]:
                lb = np.concatenate([np.zeros(len(A)), np.full(len(T), -np.inf)])
                sol = lsq_linear(M, a_part, bounds=(lb, np.full(M.shape[1], np.inf)), method="bvls", tol=1e-14)
                ares = float(np.linalg.norm(M @ sol.x - a_part))
            else:
                ares = float(np.linalg.norm(a_part))
            bres = 0.0
            if T:
                bres = max(0.0, float(np.max(G[list(T)] @ b_part)))
            wn = np.linalg.norm(self.w_point)
            if wn > 0:
                bres += abs(float(b_part @ self.w_point)) / wn
            worst = max(worst, ares + bres)
        return worst

    def sample(self, rng: np.random.Generator, count: int) -> List[Tuple[np.ndarray, np.ndarray]]:
        """Points of the cone inside the unit box via random linear objectives."""
        G = self.generators
        n = G.shape[1]
        A = list(self.active)
        blocks = []
        for T in self.pieces:
            blocks.append((len(A), len(T), T))
        nvar = 2 * n + sum(p + q for p, q, _ in blocks)
        A_eq, b_eq, A_ub, b_ub = [], [], [], []
        offset = 2 * n
        bounds = [(-1.0, 1.0)] * (2 * n)
        for p, q, T in blocks:
            for r in range(n):
                row = np.zeros(nvar)
                row[r] = 1.0
                for c, i in enumerate(A):
                    row[offset + c] = -G[i, r]
                for c, i in enumerate(T):
                    row[offset + p + c] = -G[i, r]
                A_eq.append(row)
                b_eq.append(0.0)
            bounds += [(0.0, None)] * p + [(None, None)] * q
            offset += p + q
            for i in T:
                row = np.zeros(nvar)
                row[n: 2 * n] = G[i]
                A_ub.append(row)
                b_ub.append(0.0)
        if np.linalg.norm(self.w_point) > 0:
            row = np.zeros(nvar)
            row[n: 2 * n] = self.w_point
            A_eq.append(row)
            b_eq.append(0.0)
        out = []
        for _ in range(count):
            c = np.zeros(nvar)
            c[: 2 * n] = rng.normal(size=2 * n)
            res = linprog(c, A_ub=np.array(A_ub) if A_ub else None, b_ub=np.array(b_ub) if b_ub else None,
                          A_eq=np.array(A_eq) if A_eq else None, b_eq=np.array(b_eq) if b_eq else None,
                          bounds=bounds, method="highs")
            if res.status == 0:
                out.append((res.x[:n].copy(), res.x[n: 2 * n].copy()))
        return out


@dataclass
class GraphNormalOracle:
    """Limiting normal cone of gph G at (xbar, wbar) as a union of pieces."""

    xbar: np.ndarray
    wbar: np.ndarray
    pieces: List[NormalPiece]

    def residual(self, a_part, b_part) -> float:
        a_part = np.asarray(a_part, dtype=float)
        b_part = np.asarray(b_part, dtype=float)
        return min(p.residual(a_part, b_part) for p in self.pieces)

    def coderivative_contains(self, y, v, tol: float = COMPARE_TOL) -> Tuple[bool, float]:
        """Is v in D*G(xbar, wbar)(y), i.e. (v, -y) a limiting normal?"""
        res = self.residual(v, -np.asarray(y, dtype=float))
        scale = max(1.0, float(np.linalg.norm(v)), float(np.linalg.norm(y)))
        return res <= tol * scale, res


def _stratum_direction(G: np.ndarray, A: Sequence[int], others: Sequence[int]) -> Optional[np.ndarray]:
    """Direction d with <g_i, d> = 0 on A and < 0 on ``others``; None if impossible."""
    n = G.shape[1]
    if not others:
        return np.zeros(n)
    # maximize t subject to <g_i,d> <= -t for others, <g_i,d> = 0 for A, |d| <= 1
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A_ub = np.hstack([G[list(others)], np.ones((len(others), 1))])
    b_ub = np.zeros(len(others))
    A_eq = np.hstack([G[list(A)], np.zeros((len(A), 1))]) if A else None
    b_eq = np.zeros(len(A)) if A else None
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                  bounds=[(-1, 1)] * n + [(None, 1)], method="highs")
    if res.status != 0 or res.x[-1] <= 1e-9:
        return None
    return res.x[:n]


def _in_cone(G: np.ndarray, idx: Sequence[int], w: np.ndarray, tol: float) -> bool:
    if not idx:
        return float(np.linalg.norm(w)) <= tol
    _, res = nnls(G[list(idx)].T, w)
    return res <= tol * max(1.0, float(np.linalg.norm(w)))


def limiting_normal_graph_oracle(xbar, wbar, C: GeneratorSet, tol: float = ACTIVE_TOL,
                                 max_n: int = 2, max_m: int = 3) -> GraphNormalOracle:
    """Enumerate the limiting normal cone of gph N(.; C) at (xbar, wbar).

    The graph is the union over subsets T of P_T = face_T x cone{g_i : i
    in T}.  Every stratum (A, S) near the point, with A the active set of
    a nearby x' and S the support of a nearby w', contributes the regular
    normal cone at (x', w'); the union of these is the limiting cone.

    Raises ``ValueError`` beyond ``max_n`` / ``max_m``.
    """
    xbar = np.asarray(xbar, dtype=float)
    wbar = np.asarray(wbar, dtype=float)
    if C.n > max_n or C.m > max_m:
        raise ValueError(f"oracle limited to n <= {max_n} and m <= {max_m}")
    G = C.matrix
    act = active_indices(xbar, C, tol)
    if act.outside:
        raise PreconditionError("xbar outside the cone")
    if not _in_cone(G, sorted(act.indices), wbar, 1e-9):
        raise PreconditionError("wbar not normal at xbar")
    I = sorted(act.indices)
    pieces = []
    for A in _subsets(I):
        others = [i for i in I if i not in A]
        d = _stratum_direction(G, A, others)
        if d is None:
            continue
        for S in _subsets(A):
            if not _in_cone(G, S, wbar, 1e-9):
                continue
            w_point = wbar + 1e-3 * (G[list(S)].sum(axis=0) if S else 0.0)
            containing = tuple(T for T in _subsets(A) if _in_cone(G, T, w_point, 1e-10))
            if not containing:
                continue
            pieces.append(NormalPiece(tuple(A), tuple(S), containing, np.asarray(w_point, dtype=float), G))
    return GraphNormalOracle(xbar, wbar, pieces)


@dataclass
class EqualityVerdict:
    max_violation: float
    oracle_in_family: float
    family_in_oracle: Optional[float]
    independent: bool
    samples: int


def _direction_samples(G: np.ndarray, I: Sequence[int], rng: np.random.Generator, count: int) -> List[np.ndarray]:
    """Random unit directions, including ones orthogonal to subsets of active generators."""
    n = G.shape[1]
    subsets = list(_subsets(I))
    out = []
    for t in range(count):
        Z = subsets[t % len(subsets)]
        y = rng.normal(size=n)
        if Z:
            Q, _ = np.linalg.qr(G[list(Z)].T)
            y = y - Q @ (Q.T @ y)
        nrm = np.linalg.norm(y)
        out.append(y / nrm if nrm > 1e-12 else np.zeros(n))
    return out


def coderivative_equality_check(x, u, a, w, spec, samples: int = RAY_SAMPLES, seed: int = 0,
                                require_independence: bool = True) -> EqualityVerdict:
    """Compare the upper-estimate family with the graph-normal oracle.

    Oracle elements (v, -y) are pushed through the chain rule and tested
    against the family; when the active generators are independent,
    family elements are also tested against the oracle.  Returns the
    largest normalized membership residual.

    Raises
    ------
    RankDeficiencyError
        If the active generators are dependent and ``require_independence``.
    """
    rng = np.random.default_rng(seed)
    xbar, wbar, _ = validate_base_point(x, u, a, w, spec)
    I = sorted(active_indices(xbar, spec.C).indices)
    G = spec.C.matrix
    independent = linear_independence_check(G[I]) if I else True
    if not independent and require_independence:
        raise RankDeficiencyError("active generators are linearly dependent; only inclusion can be tested")
    oracle = limiting_normal_graph_oracle(xbar, wbar, spec.C)
    Jx = spec.f.jacobian_x(x, a)
    Ja = spec.f.jacobian_a(x, a)

    forward = 0.0
    per_piece = max(1, samples // max(1, len(oracle.pieces)))
    count = 0
    for piece in oracle.pieces:
        for v, b in piece.sample(rng, per_piece):
            y = -b
            scale = max(1e-12, float(np.linalg.norm(np.concatenate([v, y]))))
            v, y = v / scale, y / scale
            fam = coderivative_upper(x, u, a, w, y, spec)
            mem = fam.contains(Jx.T @ y + v, -v, Ja.T @ y)
            forward = max(forward, mem.residual)
            count += 1

    backward = None
    if independent:
        backward = 0.0
        for y in _direction_samples(G, I, rng, samples):
            fam = coderivative_upper(x, u, a, w, y, spec)
            if not fam.in_domain:
                # the oracle must also have nothing for this y
                ok, res = oracle.coderivative_contains(y, np.zeros_like(y))
                if np.linalg.norm(y) > 0 and ok:
                    backward = max(backward, 1.0)
                continue
            for gamma in fam.sample(rng, 1) + [np.zeros(spec.m)]:
                q = G.T @ gamma
                scale = max(1.0, float(np.linalg.norm(q)))
                _, res = oracle.coderivative_contains(y / scale, q / scale)
                backward = max(backward, res)
                count += 1
    worst = max(forward, backward or 0.0)
    return EqualityVerdict(worst, forward, backward, independent, count)

"""
Numerical solution of the discrete sweeping control problem.

The inclusion constraint is handled by an augmented Lagrangian on the
distance to the velocity set, the proximity and u-rate bounds by
inequality penalties, and the moving-set and control-norm constraints by
an explicit retraction (radial clamp of u followed by projection of x
onto C + u).  Inner iterations are Hessian-scaled projected steps with
Armijo backtracking on the merit function, falling back to a plain
projected gradient step with Barzilai-Borwein length.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .discretization import (ApproximationConstants, DiscreteTriple, Mesh, ResidualTable,
                             approximate_feasible, check_discrete_constraints,
                             discrete_cost_and_gradient, mu_constants, proximity_terms,
                             reference_grid, u_rate_gradients)
from .geometry import ACTIVE_TOL, active_indices, project_cone_of_generators, project_translated_polyhedron
from .problem import ProblemSpec

log = logging.getLogger(__name__)


class SolveError(RuntimeError):
    """The solver stopped before meeting its tolerances.

    Attributes ``best`` and ``residuals`` hold the best iterate found and
    its residual table.
    """

    def __init__(self, message: str, best=None, residuals=None):
        super().__init__(message)
        self.best = best
        self.residuals = residuals


class OracleDimensionError(ValueError):
    pass


@dataclass(frozen=True)
class OptimizerConfig:
    """Solver settings.

    Parameters
    ----------
    max_outer, max_inner : int
        Iteration caps of the multiplier loop and of each inner solve.
    rho0, rho_growth, rho_max : float
        Penalty schedule.
    stationarity_tol, constraint_tol : float
        Termination tolerances.
    fd_step : float
        Step of the finite-difference Hessian used for scaling.
    seed : int
        Seed of the random generator (only used for tie-breaking jitter).
    pin_initial : bool
        Keep a_0 at the reference value.  x_0 and u_0 are always pinned.
    raise_on_failure : bool
        Raise :class:`SolveError` when tolerances are not met.
    """

    max_outer: int = 15
    max_inner: int = 200
    rho0: float = 10.0
    rho_growth: float = 10.0
    rho_max: float = 1e10
    stationarity_tol: float = 1e-8
    constraint_tol: float = 1e-8
    fd_step: float = 1e-6
    seed: int = 0
    pin_initial: bool = True
    raise_on_failure: bool = True
    hessian_every: int = 1

    def __post_init__(self) -> None:
        if self.stationarity_tol <= 0 or self.constraint_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.rho_growth <= 1:
            raise ValueError("rho_growth must exceed 1")
        if self.rho0 <= 0:
            raise ValueError("rho0 must be positive")


@dataclass
class SolveResult:
    z_opt: DiscreteTriple
    J_value: float
    residuals: ResidualTable
    iterations: int
    converged: bool
    constants: Optional[ApproximationConstants] = None
    merit_history: List[List[float]] = field(default_factory=list)
    outer_log: List[dict] = field(default_factory=list)
    multipliers: Optional[np.ndarray] = None
    method: str = "penalty"

    def to_dict(self) -> dict:
        out = {
            "method": self.method,
            "J_value": self.J_value,
            "iterations": self.iterations,
            "converged": self.converged,
            "z_opt": self.z_opt.to_dict(),
            "residuals": self.residuals.to_dict(),
            "outer_log": self.outer_log,
        }
        if self.constants is not None:
            out["constants"] = {
                "reference_defect": self.constants.reference_defect,
                "variation_cap": self.constants.variation_cap,
                "gap_bound": self.constants.gap_bound,
            }
        return out


class _PenaltyModel:
    """Merit function and retraction for one discrete problem."""

    def __init__(self, spec: ProblemSpec, reference, mesh: Mesh, consts: ApproximationConstants,
                 config: OptimizerConfig, ilm_epsilon: float):
        self.spec = spec
        self.mesh = mesh
        self.consts = consts
        self.config = config
        self.eps = ilm_epsilon
        self.k, self.n, self.d, self.h = mesh.k, spec.n, spec.d, mesh.h
        self.grid = reference_grid(reference, mesh)
        self.reference = self.grid
        self.ref_x, self.ref_u, self.ref_a = self.grid.x, self.grid.u, self.grid.a
        self.rho = config.rho0
        self.mult = np.zeros((self.k, self.n))
        self.n_ineq = self.k + 3
        self.ineq_mult = np.zeros(self.n_ineq)
        k1 = self.k + 1
        free = np.ones((3, k1), dtype=bool)
        free[0, 0] = free[1, 0] = False
        if config.pin_initial:
            free[2, 0] = False
        self.free = np.concatenate([np.repeat(free[0], self.n), np.repeat(free[1], self.n),
                                    np.repeat(free[2], self.d)])
        self.time_index = np.concatenate([np.repeat(np.arange(k1), self.n), np.repeat(np.arange(k1), self.n),
                                          np.repeat(np.arange(k1), self.d)])
        self.component = np.concatenate([np.tile(np.arange(self.n), k1), self.n + np.tile(np.arange(self.n), k1),
                                         2 * self.n + np.tile(np.arange(self.d), k1)])

    # constraint pieces -------------------------------------------------
    def _cone(self, z: DiscreteTriple, j: int) -> np.ndarray:
        act = active_indices(z.x[j] - z.u[j], self.spec.C, ACTIVE_TOL)
        return self.spec.C.matrix[sorted(act.indices)] if act.indices else np.zeros((0, self.n))

    def inclusion_parts(self, z: DiscreteTriple, j: int):
        f = self.spec.f
        c = (z.x[j] - z.x[j + 1]) / self.h - f.value(z.x[j], z.a[j])
        return c, self._cone(z, j)

    def inequalities(self, z: DiscreteTriple) -> np.ndarray:
        """Values of the inequality constraints (proximity, velocity proximity, u-rates)."""
        vals = np.zeros(self.n_ineq)
        diffs = np.hstack([z.x[:-1] - self.ref_x[:-1], z.u[:-1] - self.ref_u[:-1], z.a[:-1] - self.ref_a[:-1]])
        vals[: self.k] = np.linalg.norm(diffs, axis=1) - self.eps / 2
        pv, _ = proximity_terms(z, self.reference)
        vals[self.k] = float(np.sum(pv)) - self.eps / 2
        first, _, second, _ = u_rate_gradients(z.u, self.h)
        cap = self.consts.variation_cap + 1
        vals[self.k + 1] = first - cap
        vals[self.k + 2] = second - cap
        return vals

    def inequality_gradient(self, z: DiscreteTriple, weights: np.ndarray) -> DiscreteTriple:
        """Weighted sum of the inequality gradients."""
        n = self.n
        gx = np.zeros_like(z.x)
        gu = np.zeros_like(z.u)
        ga = np.zeros_like(z.a)
        for j in np.flatnonzero(weights[: self.k]):
            diff = np.concatenate([z.x[j] - self.ref_x[j], z.u[j] - self.ref_u[j], z.a[j] - self.ref_a[j]])
            nd = np.linalg.norm(diff)
            if nd > 0:
                w = weights[j] / nd
                gx[j] += w * diff[:n]
                gu[j] += w * diff[n: 2 * n]
                ga[j] += w * diff[2 * n:]
        wv = weights[self.k]
        if wv:
            _, thetas = proximity_terms(z, self.reference)
            for j, (tx, tu, ta) in enumerate(thetas):
                gx[j + 1] += wv * tx / self.h
                gx[j] -= wv * tx / self.h
                gu[j + 1] += wv * tu / self.h
                gu[j] -= wv * tu / self.h
                ga[j + 1] += wv * ta / self.h
                ga[j] -= wv * ta / self.h
        if weights[self.k + 1] or weights[self.k + 2]:
            _, g1, _, g2 = u_rate_gradients(z.u, self.h)
            gu += weights[self.k + 1] * g1 + weights[self.k + 2] * g2
        return DiscreteTriple(self.mesh, gx, gu, ga)

    # merit -------------------------------------------------------------
    def merit(self, z: DiscreteTriple, with_gradient: bool = True):
        cost, grad = discrete_cost_and_gradient(z, self.reference, self.spec, self.consts.variation_cap,
                                                with_gradient)
        total = cost.total
        rho = self.rho
        f = self.spec.f
        for j in range(self.k):
            c, gens = self.inclusion_parts(z, j)
            q = c + self.mult[j] / rho
            proj = project_cone_of_generators(q, gens)[0] if gens.shape[0] else np.zeros_like(q)
            r = q - proj
            total += 0.5 * rho * float(r @ r) - float(self.mult[j] @ self.mult[j]) / (2 * rho)
            if with_gradient:
                rr = rho * r
                grad.x[j] += rr / self.h - f.jacobian_x(z.x[j], z.a[j]).T @ rr
                grad.x[j + 1] -= rr / self.h
                grad.a[j] -= f.jacobian_a(z.x[j], z.a[j]).T @ rr
        vals = self.inequalities(z)
        shifted = np.maximum(0.0, vals + self.ineq_mult / rho)
        total += 0.5 * rho * float(shifted @ shifted) - float(self.ineq_mult @ self.ineq_mult) / (2 * rho)
        if with_gradient and np.any(shifted > 0):
            extra = self.inequality_gradient(z, rho * shifted)
            grad.x += extra.x
            grad.u += extra.u
            grad.a += extra.a
        if not with_gradient:
            return total, None
        gvec = grad.flatten()
        gvec[~self.free] = 0.0
        return total, self._tangent(z, gvec)

    def _tangent(self, z: DiscreteTriple, vec: np.ndarray) -> np.ndarray:
        """Remove radial u components where ||u_j|| = r is enforced."""
        k1, n = self.k + 1, self.n
        vu = vec[k1 * n: 2 * k1 * n].reshape(k1, n)
        for j in range(k1):
            if self.mesh.in_band(j):
                nu = np.linalg.norm(z.u[j])
                if nu > 0:
                    e = z.u[j] / nu
                    vu[j] -= (vu[j] @ e) * e
        return vec

    def retract(self, z: DiscreteTriple) -> DiscreteTriple:
        out = z.copy()
        spec = self.spec
        lo = spec.r - spec.tau - self.consts.gap_bound
        hi = spec.r + spec.tau + self.consts.gap_bound
        out.x[0] = spec.x0
        out.u[0] = self.ref_u[0]
        if self.config.pin_initial:
            out.a[0] = self.ref_a[0]
        for j in range(1, self.k + 1):
            nu = np.linalg.norm(out.u[j])
            direction = out.u[j] / nu if nu > 0 else self.ref_u[j] / max(np.linalg.norm(self.ref_u[j]), 1e-300)
            if self.mesh.in_band(j):
                out.u[j] = spec.r * direction
            elif nu < lo or nu > hi:
                out.u[j] = min(max(nu, max(lo, 0.0)), hi) * direction
        for j in range(1, self.k + 1):
            out.x[j], _ = project_translated_polyhedron(out.x[j], spec.C, out.u[j])
        return out

    def violation(self, z: DiscreteTriple) -> float:
        worst = 0.0
        for j in range(self.k):
            c, gens = self.inclusion_parts(z, j)
            proj = project_cone_of_generators(c, gens)[0] if gens.shape[0] else np.zeros_like(c)
            worst = max(worst, float(np.linalg.norm(c - proj)))
        vals = self.inequalities(z)
        return max(worst, float(np.max(vals)))

    def update_multipliers(self, z: DiscreteTriple) -> None:
        rho = self.rho
        for j in range(self.k):
            c, gens = self.inclusion_parts(z, j)
            q = c + self.mult[j] / rho
            proj = project_cone_of_generators(q, gens)[0] if gens.shape[0] else np.zeros_like(q)
            self.mult[j] = rho * (q - proj)
        vals = self.inequalities(z)
        self.ineq_mult = np.maximum(0.0, self.ineq_mult + rho * vals)

    def initialize_multipliers(self, z: DiscreteTriple) -> None:
        """Least-squares multipliers making the warm start as stationary as possible."""
        saved = self.rho
        self.mult[:] = 0.0
        self.ineq_mult[:] = 0.0
        cost, grad = discrete_cost_and_gradient(z, self.reference, self.spec, self.consts.variation_cap)
        g0 = grad.flatten()
        N = g0.size
        k1, n = self.k + 1, self.n
        Jt = np.zeros((N, self.k * n))
        f = self.spec.f
        for j in range(self.k):
            base = DiscreteTriple(self.mesh, np.zeros_like(z.x), np.zeros_like(z.u), np.zeros_like(z.a))
            Ax = f.jacobian_x(z.x[j], z.a[j])
            Ba = f.jacobian_a(z.x[j], z.a[j])
            for comp in range(n):
                e = np.zeros(n)
                e[comp] = 1.0
                base.x[:] = 0
                base.a[:] = 0
                base.x[j] += e / self.h - Ax.T @ e
                base.x[j + 1] -= e / self.h
                base.a[j] -= Ba.T @ e
                Jt[:, j * n + comp] = base.flatten()
        mask = self.free
        sol, *_ = np.linalg.lstsq(Jt[mask], -g0[mask], rcond=None)
        mult = sol.reshape(self.k, n)
        for j in range(self.k):
            _, gens = self.inclusion_parts(z, j)
            if gens.shape[0]:
                # the multiplier must lie in the polar of the active cone
                mult[j] = mult[j] - project_cone_of_generators(mult[j], gens)[0]
        self.mult = mult
        self.rho = saved

    def hessian(self, z: DiscreteTriple, step: float) -> np.ndarray:
        """Finite-difference Hessian of the merit, assuming neighbour-only coupling in time.

        Columns are grouped by time index modulo 3 and by component, so
        the cost is 6 (2n + d) gradient evaluations.  Couplings through
        global sums are dropped; the matrix only scales the step.
        """
        base = z.flatten()
        N = base.size
        H = np.zeros((N, N))
        width = 2 * self.n + self.d
        for res in range(3):
            for comp in range(width):
                cols = np.flatnonzero((self.time_index % 3 == res) & (self.component == comp) & self.free)
                if cols.size == 0:
                    continue
                e = np.zeros(N)
                e[cols] = step
                gp = self.merit(self.retract_free(z.with_flat(base + e)), True)[1]
                gm = self.merit(self.retract_free(z.with_flat(base - e)), True)[1]
                diffq = (gp - gm) / (2 * step)
                for col in cols:
                    rows = np.flatnonzero(np.abs(self.time_index - self.time_index[col]) <= 1)
                    H[rows, col] = diffq[rows]
        H = 0.5 * (H + H.T)
        return H

    def retract_free(self, z: DiscreteTriple) -> DiscreteTriple:
        # keep pinned entries but do not move free ones (finite differences)
        out = z.copy()
        out.x[0] = self.spec.x0
        out.u[0] = self.ref_u[0]
        if self.config.pin_initial:
            out.a[0] = self.ref_a[0]
        return out


def _scaled_direction(H: np.ndarray, g: np.ndarray, free: np.ndarray) -> np.ndarray:
    idx = np.flatnonzero(free)
    sub = H[np.ix_(idx, idx)]
    w, V = np.linalg.eigh(sub)
    top = max(float(np.max(np.abs(w))) if w.size else 1.0, 1e-12)
    w = np.clip(np.abs(w), 1e-8 * top, None)
    d = np.zeros_like(g)
    d[idx] = -(V @ ((V.T @ g[idx]) / w))
    return d


def _inner_solve(model: _PenaltyModel, z: DiscreteTriple, config: OptimizerConfig, history: List[float]):
    val, g = model.merit(z)
    history.append(val)
    H = None
    bb = None
    prev = None
    its = 0
    for it in range(config.max_inner):
        its = it + 1
        stat = float(np.max(np.abs(model.retract(z.with_flat(z.flatten() - g)).flatten() - z.flatten()))) if g.size else 0.0
        if stat <= config.stationarity_tol:
            break
        if H is None or it % config.hessian_every == 0:
            H = model.hessian(z, config.fd_step)
        accepted = False
        base = z.flatten()
        for kind in ("newton", "gradient"):
            if kind == "newton":
                direction = model._tangent(z, _scaled_direction(H, g, model.free))
                alpha = 1.0
            else:
                direction = -g
                alpha = bb if bb is not None else 1.0 / max(1.0, float(np.linalg.norm(g)))
            for _ in range(40):
                trial = model.retract(z.with_flat(base + alpha * direction))
                tval, tg = model.merit(trial)
                step = trial.flatten() - base
                if tval <= val + 1e-4 * float(g @ step) and tval <= val:
                    accepted = True
                    break
                alpha *= 0.5
            if accepted:
                break
        if not accepted:
            break
        s = trial.flatten() - base
        y = tg - g
        sy = float(s @ y)
        bb = float(s @ s) / sy if sy > 0 else None
        decrease = val - tval
        z, val, g = trial, tval, tg
        history.append(val)
        if decrease <= 1e-16 * max(1.0, abs(val)):
            break
    return z, val, g, its


def solve_discrete_problem(spec: ProblemSpec, reference, mesh: Mesh,
                           config: Optional[OptimizerConfig] = None, warm_start: Optional[DiscreteTriple] = None,
                           ilm_epsilon: Optional[float] = None) -> SolveResult:
    """Minimize the discrete cost subject to the discrete constraints.

    Parameters
    ----------
    spec : ProblemSpec
    reference : path
        Reference triple the discrete problem is built around.
    mesh : Mesh
    config : OptimizerConfig, optional
    warm_start : DiscreteTriple, optional
        Defaults to the constructive feasible discretization of the
        reference.
    ilm_epsilon : float, optional
        Neighbourhood radius for the proximity constraints.

    Returns
    -------
    SolveResult
    """
    config = config or OptimizerConfig()
    eps = spec.ilm_epsilon if ilm_epsilon is None else float(ilm_epsilon)
    consts = mu_constants(reference, spec, mesh)
    if warm_start is None:
        warm_start, _ = approximate_feasible(reference, spec, mesh, ilm_epsilon=eps)
    model = _PenaltyModel(spec, reference, mesh, consts, config, eps)
    z = model.retract(warm_start)
    model.initialize_multipliers(z)
    histories: List[List[float]] = []
    outer_log = []
    total_its = 0
    converged = False
    prev_viol = math.inf
    for outer in range(config.max_outer):
        hist: List[float] = []
        z, val, g, its = _inner_solve(model, z, config, hist)
        histories.append(hist)
        total_its += its
        viol = model.violation(z)
        stat = float(np.max(np.abs(model.retract(z.with_flat(z.flatten() - g)).flatten() - z.flatten())))
        outer_log.append({"outer": outer, "rho": model.rho, "merit": val, "violation": viol,
                          "stationarity": stat, "inner_iterations": its})
        log.debug("outer %d rho=%.3g merit=%.10g viol=%.3g stat=%.3g", outer, model.rho, val, viol, stat)
        if viol <= config.constraint_tol and stat <= config.stationarity_tol:
            converged = True
            break
        model.update_multipliers(z)
        if viol > 0.1 * prev_viol and model.rho < config.rho_max:
            model.rho = min(model.rho * config.rho_growth, config.rho_max)
        prev_viol = viol
    free_init = not config.pin_initial
    table = check_discrete_constraints(z, reference, spec, consts.gap_bound, consts.variation_cap, eps,
                                       free_initial_control=free_init)
    J = discrete_cost_and_gradient(z, reference, spec, consts.variation_cap, False)[0].total
    result = SolveResult(z, J, table, total_its, converged, consts, histories, outer_log, model.mult.copy())
    if not converged and config.raise_on_failure:
        raise SolveError(f"solver did not converge after {config.max_outer} outer iterations "
                         f"(violation {outer_log[-1]['violation']:.3g}, "
                         f"stationarity {outer_log[-1]['stationarity']:.3g})", best=result, residuals=table)
    return result


# brute-force oracle ------------------------------------------------------

def _oracle_candidate(spec: ProblemSpec, reference, mesh: Mesh, a_free: np.ndarray, a_fixed0, consts):
    """Discrete triple generated by free controls, or None when invalid."""
    k, h, d = mesh.k, mesh.h, spec.d
    ur, ar = reference.u, reference.a
    a = np.zeros((k + 1, d))
    if a_fixed0 is not None:
        a[0] = a_fixed0
        a[1:k] = a_free[: (k - 1) * d].reshape(k - 1, d)
        rest = a_free[(k - 1) * d:]
    else:
        a[:k] = a_free[: k * d].reshape(k, d)
        rest = a_free[k * d:]
    a[k] = rest if rest.size else a[k - 1] + (ar[k] - ar[k - 1])
    u = ur.copy()
    for j in range(k + 1):
        nu = np.linalg.norm(u[j])
        if mesh.in_band(j) and nu > 0:
            u[j] = spec.r * u[j] / nu
    x = np.zeros((k + 1, spec.n))
    x[0] = spec.x0
    for j in range(k):
        pred = x[j] - h * spec.f.value(x[j], a[j])
        x[j + 1], lam = project_translated_polyhedron(pred, spec.C, u[j + 1])
        support = np.flatnonzero(lam > 1e-12)
        if support.size:
            act = active_indices(x[j] - u[j], spec.C).indices
            if not set(int(i) for i in support) <= act:
                return None
    return DiscreteTriple(mesh, x, u, a)


def brute_force_oracle(spec: ProblemSpec, reference, mesh: Mesh, lower: float = -2.0, upper: float = 2.0,
                       resolution: float = 1e-3, max_points: int = 3000, polish: bool = True,
                       pin_initial: bool = True) -> SolveResult:
    """Exhaustive grid search over the controls a_0..a_{k-1}.

    For each candidate the state comes from the catching-up recursion
    (candidates whose projection multipliers leave the active set of the
    previous node are discarded), u is the reference radially normalized
    in the band, and a_k continues a_{k-1} with the reference increment.
    The best grid point is refined by zooming and coordinate descent.

    Parameters
    ----------
    lower, upper : float
        Search box for every control coordinate.
    resolution : float
        Grid step to reach.
    max_points : int
        Largest number of grid points evaluated in one sweep.
    """
    k, d = mesh.k, spec.d
    if k > 4 or d * k > 8:
        raise OracleDimensionError(f"oracle limited to k <= 4 and d*k <= 8 (got k={k}, d={d})")
    consts = mu_constants(reference, spec, mesh)
    reference = reference_grid(reference, mesh)
    a0 = None if not pin_initial else reference.evaluate(0.0)[2]
    dim = (k if not pin_initial else k - 1) * d

    def cost(vec):
        cand = _oracle_candidate(spec, reference, mesh, np.asarray(vec, dtype=float), a0, consts)
        if cand is None:
            return math.inf, None
        return discrete_cost_and_gradient(cand, reference, spec, consts.variation_cap, False)[0].total, cand

    if dim == 0:
        best_val, best = cost(np.zeros(0))
        evaluations = 1
    else:
        lo = np.full(dim, lower)
        hi = np.full(dim, upper)
        full = int(round((upper - lower) / resolution)) + 1
        per_dim = full if full ** dim <= max_points else max(3, int(max_points ** (1.0 / dim)))
        best_val, best_vec, best = math.inf, None, None
        evaluations = 0
        step = (hi - lo) / (per_dim - 1)
        while True:
            axes = [np.linspace(lo[i], hi[i], per_dim) for i in range(dim)]
            for point in itertools.product(*axes):
                val, cand = cost(point)
                evaluations += 1
                if val < best_val:
                    best_val, best_vec, best = val, np.array(point), cand
            if best_vec is None or np.all(step <= resolution * (1 + 1e-9)):
                break
            lo = np.maximum(best_vec - 1.5 * step, lower)
            hi = np.minimum(best_vec + 1.5 * step, upper)
            step = (hi - lo) / (per_dim - 1)
        if best_vec is not None and polish:
            vec = best_vec.copy()
            delta = float(np.max(step))
            while delta > 1e-9:
                improved = False
                for i in range(dim):
                    for sgn in (1.0, -1.0):
                        trial = vec.copy()
                        trial[i] += sgn * delta
                        val, cand = cost(trial)
                        evaluations += 1
                        if val < best_val - 1e-15:
                            best_val, vec, best = val, trial, cand
                            improved = True
                if not improved:
                    delta *= 0.5
    if best is None:
        raise SolveError("oracle found no valid candidate in the search box")
    table = check_discrete_constraints(best, reference, spec, consts.gap_bound, consts.variation_cap,
                                       free_initial_control=not pin_initial)
    return SolveResult(best, best_val, table, evaluations, True, consts, method="oracle")


# convergence study ---------------------------------------------------------

@dataclass
class ConvergenceRow:
    k: int
    J_k: float
    w12_gap_sum: float
    initial_u_rate: float
    u_rate_variation: float


@dataclass
class ConvergenceStudy:
    rows: List[ConvergenceRow]
    nonincreasing: bool
    halved: bool
    noise: float = 0.10
    floor: float = 1e-14

    def as_table(self):
        return [[r.k, r.J_k, r.w12_gap_sum, r.initial_u_rate, r.u_rate_variation] for r in self.rows]


def gap_sum(z: DiscreteTriple, reference, spec: ProblemSpec, mu_tilde: float) -> float:
    """Velocity proximity integral plus the initial-slope and u-rate penalties."""
    b = discrete_cost_and_gradient(z, reference, spec, mu_tilde, False)[0]
    return b.proximity + b.initial_velocity + b.initial_u_rate + b.u_rate_variation


def convergence_study(spec: ProblemSpec, reference, ks: Sequence[int], config: Optional[OptimizerConfig] = None,
                      noise: float = 0.10, floor: float = 1e-14) -> ConvergenceStudy:
    """Solve on a ladder of meshes and tabulate the gap quantities.

    ``nonincreasing`` allows each value to exceed its predecessor by the
    relative ``noise``.  ``halved`` compares the last value with half the
    first; values below ``floor`` count as zero.
    """
    rows = []
    for k in ks:
        mesh = Mesh.for_problem(spec, int(k))
        res = solve_discrete_problem(spec, reference, mesh, config)
        first, _, second, _ = u_rate_gradients(res.z_opt.u, mesh.h)
        gs = gap_sum(res.z_opt, reference, spec, res.constants.variation_cap)
        rows.append(ConvergenceRow(int(k), res.J_value, gs, first, second))
    vals = [0.0 if r.w12_gap_sum < floor else r.w12_gap_sum for r in rows]
    nonincreasing = all(b <= a * (1 + noise) for a, b in zip(vals[:-1], vals[1:]))
    halved = vals[-1] < 0.5 * vals[0]
    return ConvergenceStudy(rows, nonincreasing, halved, noise, floor)

"""
Discrete approximation on a uniform mesh.

Contents: the mesh with its band indices, the grid triple (x_j, u_j, a_j),
the constants that control the approximation error, the constructive
feasible discretization of a reference solution, the discrete cost with
its gradient, and a signed residual table for the discrete constraints.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from .dynamics import project_onto_velocity_set
from .geometry import ACTIVE_TOL, project_translated_polyhedron
from .problem import ProblemSpec

log = logging.getLogger(__name__)

MU_FLOOR = 1e-12
RENORMALIZE_TOL = 1e-12


class ReferenceInfeasibleError(ValueError):
    """The reference violates the continuous constraints at mesh points."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(f"{name} at j={j}: {val:.3g}" for name, j, val in self.violations[:10])
        super().__init__(f"reference infeasible on the mesh: {lines}")


@dataclass(frozen=True)
class Mesh:
    """Uniform mesh t_j = j h, h = T / k, with band indices for margin tau.

    ``j_tau`` is the smallest j with t_j >= tau and ``j_tau_upper`` the
    largest j with t_j <= T - tau.  The sphere constraint on u applies
    for j_tau <= j <= j_tau_upper.
    """

    k: int
    T: float
    tau: float = 0.0

    def __post_init__(self) -> None:
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"step count must be a positive integer, got {self.k}")
        if not self.T > 0:
            raise ValueError("horizon must be positive")
        if not 0 <= self.tau <= self.T:
            raise ValueError("tau must lie in [0, T]")
        object.__setattr__(self, "k", int(self.k))

    @property
    def h(self) -> float:
        return self.T / self.k

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.k + 1)

    @property
    def j_tau(self) -> int:
        return max(0, math.ceil(self.k * self.tau / self.T - 1e-12))

    @property
    def j_tau_upper(self) -> int:
        return min(self.k, math.floor(self.k * (self.T - self.tau) / self.T + 1e-12))

    def in_band(self, j: int) -> bool:
        return self.j_tau <= j <= self.j_tau_upper

    @classmethod
    def for_problem(cls, spec: ProblemSpec, k: int) -> "Mesh":
        return cls(k, spec.T, spec.tau)


@dataclass
class DiscreteTriple:
    """Grid values x_j, u_j (shape (k+1, n)) and a_j (shape (k+1, d))."""

    mesh: Mesh
    x: np.ndarray
    u: np.ndarray
    a: np.ndarray

    def __post_init__(self) -> None:
        k1 = self.mesh.k + 1
        self.x = np.asarray(self.x, dtype=float).reshape(k1, -1)
        self.u = np.asarray(self.u, dtype=float).reshape(k1, -1)
        self.a = np.asarray(self.a, dtype=float).reshape(k1, -1)
        if self.x.shape != self.u.shape:
            raise ValueError("x and u shapes differ")

    @property
    def n(self) -> int:
        return self.x.shape[1]

    @property
    def d(self) -> int:
        return self.a.shape[1]

    def copy(self) -> "DiscreteTriple":
        return DiscreteTriple(self.mesh, self.x.copy(), self.u.copy(), self.a.copy())

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.x.ravel(), self.u.ravel(), self.a.ravel()])

    def with_flat(self, vec: np.ndarray) -> "DiscreteTriple":
        k1, n, d = self.mesh.k + 1, self.n, self.d
        vec = np.asarray(vec, dtype=float)
        x = vec[: k1 * n].reshape(k1, n)
        u = vec[k1 * n: 2 * k1 * n].reshape(k1, n)
        a = vec[2 * k1 * n:].reshape(k1, d)
        return DiscreteTriple(self.mesh, x.copy(), u.copy(), a.copy())

    def to_path(self):
        from .paths import ContinuousPath
        return ContinuousPath(self.mesh.times, self.x, self.u, self.a)

    def to_dict(self) -> dict:
        return {"k": self.mesh.k, "T": self.mesh.T, "tau": self.mesh.tau,
                "x": self.x, "u": self.u, "a": self.a}

    @classmethod
    def from_dict(cls, data: dict) -> "DiscreteTriple":
        mesh = Mesh(int(data["k"]), float(data["T"]), float(data.get("tau", 0.0)))
        return cls(mesh, data["x"], data["u"], data["a"])

    @classmethod
    def sample(cls, reference, mesh: Mesh) -> "DiscreteTriple":
        x, u, a = reference.sample(mesh.times)
        return cls(mesh, x, u, a)


class ReferenceGrid:
    """A reference path with its values cached on one mesh.

    Attribute access not defined here falls through to the wrapped path,
    so a grid can be passed wherever a reference is expected.
    """

    def __init__(self, reference, mesh: Mesh):
        self.reference = reference
        self.mesh = mesh
        times = mesh.times
        self.x, self.u, self.a = reference.sample(times)
        self.slope0 = reference.derivative(0.0)[0]
        self.sq = np.array([reference.squared_speed_integral(times[j], times[j + 1]) for j in range(mesh.k)])

    def __getattr__(self, name):
        return getattr(self.__dict__["reference"], name)

    def sample(self, times):
        times = np.asarray(times, dtype=float)
        if times.shape == (self.mesh.k + 1,) and np.array_equal(times, self.mesh.times):
            return self.x, self.u, self.a
        return self.reference.sample(times)


def reference_grid(reference, mesh: Mesh) -> ReferenceGrid:
    """Wrap ``reference`` as a grid on ``mesh`` unless it already is one."""
    if isinstance(reference, ReferenceGrid) and reference.mesh == mesh:
        return reference
    if isinstance(reference, ReferenceGrid):
        reference = reference.reference
    return ReferenceGrid(reference, mesh)


@dataclass(frozen=True)
class ApproximationConstants:
    """Constants bounding the discrete approximation error.

    Attributes
    ----------
    reference_defect : float
        Largest of the three reference defect quantities (floored).
    variation_cap : float
        Cap on the u-rate quantities, max{3m(1+4K)e^K, 4m(e^K+1)}.
    variation_cap_alt : float
        Tighter variant max{3m + 4Kme^K, 4me^K + m}.
    gap_bound : float
        2 h m e^K, the bound on the state gap.
    """

    reference_defect: float
    variation_cap: float
    variation_cap_alt: float
    gap_bound: float
    defect_parts: tuple = ()


def mu_constants(reference, spec: ProblemSpec, mesh: Mesh) -> ApproximationConstants:
    """Compute the reference defect, the variation cap and the gap bound."""
    h = mesh.h
    K = spec.f.lipschitz
    xs, us, _ = reference.sample(mesh.times)
    slope_defect = 0.0
    for j in range(mesh.k):
        dx_ref = reference.derivative(mesh.times[j])[0]
        slope_defect += float(np.linalg.norm((xs[j + 1] - xs[j]) / h - dx_ref))
    first_rate = float(np.linalg.norm((us[1] - us[0]) / h))
    second = 0.0
    for j in range(mesh.k - 1):
        second += float(np.linalg.norm((us[j + 2] - us[j + 1]) / h - (us[j + 1] - us[j]) / h))
    mu = max(slope_defect, first_rate, second, MU_FLOOR)
    eK = math.exp(K)
    cap = max(3 * mu * (1 + 4 * K) * eK, 4 * mu * (eK + 1))
    cap_alt = max(3 * mu + 4 * K * mu * eK, 4 * mu * eK + mu)
    return ApproximationConstants(mu, cap, cap_alt, 2 * h * mu * eK, (slope_defect, first_rate, second))


@dataclass
class ResidualTable:
    """Signed residuals per constraint family (negative means slack)."""

    entries: Dict[str, np.ndarray] = field(default_factory=dict)

    def add(self, name: str, values) -> None:
        self.entries[name] = np.atleast_1d(np.asarray(values, dtype=float))

    @property
    def maxima(self) -> Dict[str, float]:
        return {k: float(np.max(v)) if v.size else -math.inf for k, v in self.entries.items()}

    def max_violation(self) -> float:
        vals = [v for v in self.maxima.values()]
        return max([0.0] + vals)

    def satisfied(self, tol: float) -> bool:
        return all(v <= tol for v in self.maxima.values())

    def failing(self, tol: float):
        return [k for k, v in self.maxima.items() if v > tol]

    def to_dict(self) -> dict:
        return {k: v for k, v in self.entries.items()}


@dataclass
class FeasibilityReport:
    """Outcome of the constructive discretization.

    ``gap_bound`` is exactly 2 h m e^K with m the reference defect.
    """

    gap_bound: float
    reference_defect: float
    variation_cap: float
    variation_cap_alt: float
    max_state_gap: float
    u_rate_variation: float
    initial_u_rate: float
    max_renormalization_shift: float
    residuals: ResidualTable
    defect_parts: tuple = ()

    def to_dict(self) -> dict:
        return {
            "gap_bound": self.gap_bound,
            "reference_defect": self.reference_defect,
            "variation_cap": self.variation_cap,
            "variation_cap_alt": self.variation_cap_alt,
            "max_state_gap": self.max_state_gap,
            "u_rate_variation": self.u_rate_variation,
            "initial_u_rate": self.initial_u_rate,
            "max_renormalization_shift": self.max_renormalization_shift,
            "defect_parts": list(self.defect_parts),
            "residuals": self.residuals.to_dict(),
        }


def _u_rates(u: np.ndarray, h: float):
    first = float(np.linalg.norm(u[1] - u[0]) / h)
    second = float(sum(np.linalg.norm(u[j + 2] - 2 * u[j + 1] + u[j]) for j in range(u.shape[0] - 2)) / h)
    return first, second


def validate_reference(reference, spec: ProblemSpec, mesh: Mesh, tol: float = 1e-6):
    """List (constraint, j, violation) triples of the reference on the mesh."""
    bad = []
    for j, t in enumerate(mesh.times):
        x, u, a = reference.evaluate(t)
        vals = spec.C.values(x - u)
        if np.max(vals) > tol:
            bad.append(("moving_set", j, float(np.max(vals))))
            continue
        nu = float(np.linalg.norm(u))
        if mesh.in_band(j):
            if abs(nu - spec.r) > tol:
                bad.append(("control_norm", j, abs(nu - spec.r)))
        elif nu < spec.r - spec.tau - tol or nu > spec.r + spec.tau + tol:
            bad.append(("control_norm", j, max(spec.r - spec.tau - nu, nu - spec.r - spec.tau)))
        if j < mesh.k:
            dx = reference.derivative(t)[0]
            dist = project_onto_velocity_set(-dx, x, u, a, spec).distance
            if dist > tol * max(1.0, float(np.linalg.norm(dx))):
                bad.append(("dynamics", j, dist))
    return bad


def approximate_feasible(reference, spec: ProblemSpec, mesh: Mesh, tol: float = 1e-6,
                         ilm_epsilon: Optional[float] = None):
    """Build a feasible discrete triple close to a feasible reference.

    Controls a_j are sampled from the reference, u_j keeps x_j - u_j
    equal to the reference difference, and x advances by projecting the
    negated reference slope onto the velocity set.  In the band where
    ||u_j|| = r is required, u_j is pushed radially onto the sphere when
    it drifted off it, and x_j moves by the same amount.

    Returns
    -------
    (DiscreteTriple, FeasibilityReport)
    """
    bad = validate_reference(reference, spec, mesh, tol)
    if bad:
        raise ReferenceInfeasibleError(bad)
    consts = mu_constants(reference, spec, mesh)
    h, k = mesh.h, mesh.k
    xr, ur, ar = reference.sample(mesh.times)
    x = np.zeros_like(xr)
    u = np.zeros_like(ur)
    x[0] = spec.x0
    max_shift = 0.0
    for j in range(k + 1):
        u[j] = x[j] - xr[j] + ur[j]
        if mesh.in_band(j):
            nu = np.linalg.norm(u[j])
            if abs(nu - spec.r) > RENORMALIZE_TOL and nu > 0:
                target = spec.r * u[j] / nu
                shift = target - u[j]
                u[j] = target
                x[j] = x[j] + shift
                max_shift = max(max_shift, float(np.linalg.norm(shift)))
        if j < k:
            slope = (xr[j + 1] - xr[j]) / h
            v = project_onto_velocity_set(-slope, x[j], u[j], ar[j], spec).point
            x[j + 1] = x[j] - h * v
    if max_shift > 0:
        log.info("radial renormalization moved u by up to %.3e", max_shift)
    z = DiscreteTriple(mesh, x, u, ar.copy())
    gap = float(np.max(np.linalg.norm(x - xr, axis=1)))
    first, second = _u_rates(u, h)
    table = check_discrete_constraints(z, reference, spec, consts.gap_bound, consts.variation_cap,
                                       ilm_epsilon)
    report = FeasibilityReport(consts.gap_bound, consts.reference_defect, consts.variation_cap,
                               consts.variation_cap_alt, gap, second, first, max_shift, table,
                               consts.defect_parts)
    return z, report


def proximity_terms(z: DiscreteTriple, reference):
    """Per-step proximity integrals and their gradients in the slopes.

    Returns (values, thetas) where values[j] is the integral over
    [t_j, t_{j+1}] of ||slope_j - reference velocity||^2 summed over the
    three blocks, and thetas[j] = (tx, tu, ta) with t = 2 (h c - dz_ref)
    the gradient of that integral in the slope c of each block.
    """
    mesh = z.mesh
    h = mesh.h
    grid = reference_grid(reference, mesh)
    xr, ur, ar = grid.x, grid.u, grid.a
    values = np.zeros(mesh.k)
    thetas = []
    for j in range(mesh.k):
        sq = grid.sq[j]
        parts = []
        val = 0.0
        for b, (cur, ref) in enumerate(((z.x, xr), (z.u, ur), (z.a, ar))):
            c = (cur[j + 1] - cur[j]) / h
            dref = ref[j + 1] - ref[j]
            val += h * float(c @ c) - 2.0 * float(c @ dref) + sq[b]
            parts.append(2.0 * (h * c - dref))
        values[j] = val
        thetas.append(tuple(parts))
    return values, thetas


@dataclass
class CostBreakdown:
    total: float
    terminal: float
    running: float
    initial_velocity: float
    proximity: float
    initial_u_rate: float
    u_rate_variation: float


def discrete_cost_and_gradient(z: DiscreteTriple, reference, spec: ProblemSpec, mu_tilde: float,
                               with_gradient: bool = True):
    """Discrete cost and its gradient with respect to (x, u, a).

    Returns
    -------
    (CostBreakdown, DiscreteTriple or None)
        The gradient is returned in triple form (same shapes as z).
    """
    mesh = z.mesh
    h, k, n, d = mesh.h, mesh.k, z.n, z.d
    times = mesh.times
    gx = np.zeros_like(z.x)
    gu = np.zeros_like(z.u)
    ga = np.zeros_like(z.a)

    term = spec.terminal_cost.value(z.x[k])
    if with_gradient:
        gx[k] += spec.terminal_cost.gradient(z.x[k])

    running = 0.0
    for j in range(k):
        dx = (z.x[j + 1] - z.x[j]) / h
        du = (z.u[j + 1] - z.u[j]) / h
        da = (z.a[j + 1] - z.a[j]) / h
        running += h * spec.running_cost.value(times[j], z.x[j], z.u[j], z.a[j], dx, du, da)
        if with_gradient:
            g = spec.running_cost.gradient(times[j], z.x[j], z.u[j], z.a[j], dx, du, da)
            lx, lu, la, ldx, ldu, lda = np.split(g, np.cumsum([n, n, d, n, n]))
            gx[j] += h * lx - ldx
            gx[j + 1] += ldx
            gu[j] += h * lu - ldu
            gu[j + 1] += ldu
            ga[j] += h * la - lda
            ga[j + 1] += lda

    grid = reference_grid(reference, mesh)
    dx0_ref = grid.slope0
    e0 = (z.x[1] - z.x[0]) / h - dx0_ref
    init = float(e0 @ e0)
    if with_gradient:
        gx[1] += 2 * e0 / h
        gx[0] -= 2 * e0 / h

    prox_vals, thetas = proximity_terms(z, grid)
    prox = float(np.sum(prox_vals))
    if with_gradient:
        for j, (tx, tu, ta) in enumerate(thetas):
            gx[j + 1] += tx / h
            gx[j] -= tx / h
            gu[j + 1] += tu / h
            gu[j] -= tu / h
            ga[j + 1] += ta / h
            ga[j] -= ta / h

    first, second = _u_rates(z.u, h)
    ex1 = max(0.0, first - mu_tilde)
    ex2 = max(0.0, second - mu_tilde)
    if with_gradient:
        gu += dist_penalty_gradient(z.u, h, mu_tilde)

    total = term + running + init + prox + ex1 ** 2 + ex2 ** 2
    breakdown = CostBreakdown(total, term, running, init, prox, ex1 ** 2, ex2 ** 2)
    grad = DiscreteTriple(mesh, gx, gu, ga) if with_gradient else None
    return breakdown, grad


def discrete_cost(z: DiscreteTriple, reference, spec: ProblemSpec, mu_tilde: float) -> float:
    """Value of the discrete cost at z."""
    return discrete_cost_and_gradient(z, reference, spec, mu_tilde, with_gradient=False)[0].total


def u_rate_gradients(u: np.ndarray, h: float):
    """The two u-rate quantities and their gradients with respect to u.

    Returns (first, grad_first, second, grad_second) where first is
    ||u_1 - u_0|| / h and second is the sum of ||u_{j+2} - 2u_{j+1} + u_j|| / h.
    Norm kinks get the zero subgradient.
    """
    k = u.shape[0] - 1
    g1 = np.zeros_like(u)
    g2 = np.zeros_like(u)
    diff = u[1] - u[0]
    nd = np.linalg.norm(diff)
    if nd > 0:
        g1[1] += diff / (h * nd)
        g1[0] -= diff / (h * nd)
    second = 0.0
    for j in range(k - 1):
        D = u[j + 2] - 2 * u[j + 1] + u[j]
        nD = np.linalg.norm(D)
        second += nD
        if nD > 0:
            g2[j + 2] += D / (h * nD)
            g2[j + 1] -= 2 * D / (h * nD)
            g2[j] += D / (h * nD)
    return float(nd / h), g1, float(second / h), g2


def dist_penalty_gradient(u: np.ndarray, h: float, mu_tilde: float) -> np.ndarray:
    """Gradient of the two squared-distance u-rate terms with respect to u."""
    first, g1, second, g2 = u_rate_gradients(u, h)
    return 2 * max(0.0, first - mu_tilde) * g1 + 2 * max(0.0, second - mu_tilde) * g2


def inclusion_residuals(z: DiscreteTriple, spec: ProblemSpec, tol: float = ACTIVE_TOL) -> np.ndarray:
    """Distance of (x_j - x_{j+1}) / h to the velocity set, j = 0..k-1.

    A point with x_j - u_j outside the cone adds its constraint violation
    and is measured at its projection onto the moving set.
    """
    h = z.mesh.h
    out = np.zeros(z.mesh.k)
    for j in range(z.mesh.k):
        xj = z.x[j]
        viol = float(np.max(spec.C.values(xj - z.u[j])))
        extra = 0.0
        if viol > tol:
            xj, _ = project_translated_polyhedron(xj, spec.C, z.u[j])
            extra = viol
        w = (z.x[j] - z.x[j + 1]) / h
        out[j] = project_onto_velocity_set(w, xj, z.u[j], z.a[j], spec, tol).distance + extra
    return out


def control_norm_residuals(u: np.ndarray, mesh: Mesh, r: float, tau: float, gap_bound: float) -> np.ndarray:
    out = np.zeros(mesh.k + 1)
    for j in range(mesh.k + 1):
        nu = float(np.linalg.norm(u[j]))
        if mesh.in_band(j):
            out[j] = abs(nu - r)
        else:
            out[j] = max(r - tau - gap_bound - nu, nu - (r + tau + gap_bound))
    return out


def check_discrete_constraints(z: DiscreteTriple, reference, spec: ProblemSpec, eps_k: float,
                               mu_tilde: float, ilm_epsilon: Optional[float] = None,
                               free_initial_control: bool = False) -> ResidualTable:
    """Signed residuals of every discrete constraint.

    Parameters
    ----------
    z : DiscreteTriple
    reference : path
    spec : ProblemSpec
    eps_k : float
        Gap bound widening the off-band control norm interval.
    mu_tilde : float
        Variation cap; the u-rate bounds are mu_tilde + 1.
    ilm_epsilon : float, optional
        Neighbourhood radius; defaults to ``spec.ilm_epsilon``.
    free_initial_control : bool
        Do not pin a_0 to the reference.

    Returns
    -------
    ResidualTable
        Keys: inclusion, initial, terminal, control_norm, proximity,
        velocity_proximity, initial_u_rate, u_rate_variation.
    """
    eps = spec.ilm_epsilon if ilm_epsilon is None else float(ilm_epsilon)
    mesh = z.mesh
    h = mesh.h
    table = ResidualTable()
    table.add("inclusion", inclusion_residuals(z, spec))
    grid = reference_grid(reference, mesh)
    u0r, a0r = grid.u[0], grid.a[0]
    pin = np.linalg.norm(z.x[0] - spec.x0) + np.linalg.norm(z.u[0] - u0r)
    if not free_initial_control:
        pin += np.linalg.norm(z.a[0] - a0r)
    table.add("initial", [pin])
    table.add("terminal", [float(np.max(spec.C.values(z.x[-1] - z.u[-1])))])
    table.add("control_norm", control_norm_residuals(z.u, mesh, spec.r, spec.tau, eps_k))
    xr, ur, ar = grid.x, grid.u, grid.a
    prox = [np.linalg.norm(np.concatenate([z.x[j] - xr[j], z.u[j] - ur[j], z.a[j] - ar[j]])) - eps / 2
            for j in range(mesh.k)]
    table.add("proximity", prox)
    vals, _ = proximity_terms(z, grid)
    table.add("velocity_proximity", [float(np.sum(vals)) - eps / 2])
    first, second = _u_rates(z.u, h)
    table.add("initial_u_rate", [first - (mu_tilde + 1)])
    table.add("u_rate_variation", [second - (mu_tilde + 1)])
    return table

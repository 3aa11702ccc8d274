"""
Problem data for the controlled sweeping process.

A problem couples a polyhedral cone (see :mod:`sweepcontrol.geometry`)
with a perturbation field f(x, a), a terminal cost on the final state, a
running cost on the state, controls and their velocities, and the scalar
constants r (control radius), T (horizon) and tau (band margin).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .geometry import ACTIVE_TOL, GeneratorSet

log = logging.getLogger(__name__)

FD_STEP = 1e-6


class ProblemError(ValueError):
    """Invalid problem data.  ``field_path`` names the offending entry."""

    def __init__(self, message: str, field_path: str = ""):
        super().__init__(f"{field_path}: {message}" if field_path else message)
        self.field_path = field_path


def _fd_jacobian(func: Callable[[np.ndarray], np.ndarray], z: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    f0 = np.atleast_1d(func(z))
    jac = np.zeros((f0.size, z.size))
    for i in range(z.size):
        e = np.zeros_like(z)
        e[i] = step
        jac[:, i] = (np.atleast_1d(func(z + e)) - np.atleast_1d(func(z - e))) / (2 * step)
    return jac


def _fd_gradient(func: Callable[[np.ndarray], float], z: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    return _fd_jacobian(lambda q: np.array([func(q)]), z, step)[0]


class PerturbationField:
    """The drift term f(x, a) of the sweeping dynamics.

    Either affine, f(x, a) = A x + B a + c, or an arbitrary callback.

    Parameters
    ----------
    A, B, c : array_like, optional
        Affine data of shapes (n, n), (n, d) and (n,).
    func : callable, optional
        ``func(x, a) -> R^n`` for the callback kind.
    jac_x, jac_a : callable, optional
        Jacobians of ``func``.  Central differences are used when absent.
    lipschitz : float
        Declared Lipschitz constant in x.  Zero is allowed for drifts that
        do not depend on the state.
    growth : float
        Declared constant M of the bound ||f(x, a)|| <= M (1 + ||x||).
    n, d : int, optional
        Dimensions, required for the callback kind.
    """

    def __init__(self, A=None, B=None, c=None, *, func=None, jac_x=None, jac_a=None,
                 lipschitz: float = 1.0, growth: float = 1.0, n: Optional[int] = None,
                 d: Optional[int] = None):
        if func is None and A is None:
            raise ProblemError("either affine data or a callback is required", "perturbation")
        self.lipschitz = float(lipschitz)
        self.growth = float(growth)
        if self.lipschitz < 0 or not math.isfinite(self.lipschitz):
            raise ProblemError("must be a finite nonnegative number", "perturbation.lipschitz_K")
        if self.growth <= 0 or not math.isfinite(self.growth):
            raise ProblemError("must be a finite positive number", "perturbation.growth_M")
        if func is None:
            self.A = np.atleast_2d(np.asarray(A, dtype=float))
            nn = self.A.shape[0]
            if self.A.shape != (nn, nn):
                raise ProblemError("A must be square", "perturbation.A")
            self.B = np.asarray(B, dtype=float).reshape(nn, -1) if B is not None else np.zeros((nn, d or 1))
            self.c = np.zeros(nn) if c is None else np.asarray(c, dtype=float).reshape(nn)
            self.n, self.d = nn, self.B.shape[1]
            self.func = None
            opnorm = float(np.linalg.norm(self.A, 2))
            if self.lipschitz < opnorm - 1e-12:
                raise ProblemError(f"declared K={self.lipschitz} is below ||A||_2={opnorm:.6g}",
                                   "perturbation.lipschitz_K")
        else:
            if n is None or d is None:
                raise ProblemError("callback fields need explicit n and d", "perturbation")
            self.A = self.B = self.c = None
            self.n, self.d = int(n), int(d)
            self.func = func
        self._jac_x = jac_x
        self._jac_a = jac_a

    @property
    def kind(self) -> str:
        return "affine" if self.func is None else "callback"

    def value(self, x, a) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        a = np.asarray(a, dtype=float)
        if self.func is None:
            return self.A @ x + self.B @ a + self.c
        return np.asarray(self.func(x, a), dtype=float).reshape(self.n)

    def jacobian_x(self, x, a) -> np.ndarray:
        if self.func is None:
            return self.A
        if self._jac_x is not None:
            return np.asarray(self._jac_x(x, a), dtype=float).reshape(self.n, self.n)
        a = np.asarray(a, dtype=float)
        return _fd_jacobian(lambda q: self.value(q, a), x)

    def jacobian_a(self, x, a) -> np.ndarray:
        if self.func is None:
            return self.B
        if self._jac_a is not None:
            return np.asarray(self._jac_a(x, a), dtype=float).reshape(self.n, self.d)
        x = np.asarray(x, dtype=float)
        return _fd_jacobian(lambda q: self.value(x, q), a)

    def check_growth(self, lo: np.ndarray, hi: np.ndarray, a_lo: np.ndarray, a_hi: np.ndarray,
                     samples: int = 200, seed: int = 0) -> float:
        """Worst ratio ||f(x,a)|| / (M (1 + ||x||)) over a sampled box.

        Values above one mean the declared growth constant is too small;
        a warning is logged in that case, the data is still accepted.
        """
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(samples):
            x = rng.uniform(lo, hi)
            a = rng.uniform(a_lo, a_hi)
            ratio = np.linalg.norm(self.value(x, a)) / (self.growth * (1.0 + np.linalg.norm(x)))
            worst = max(worst, float(ratio))
        if worst > 1.0 + 1e-12:
            log.warning("declared growth constant M=%g is exceeded by factor %.3g on the sample box",
                        self.growth, worst)
        return worst


class QuadraticTerminalCost:
    """Terminal cost 0.5 (x - target)^T Q (x - target)."""

    def __init__(self, Q, target):
        self.Q = np.atleast_2d(np.asarray(Q, dtype=float))
        self.target = np.asarray(target, dtype=float).reshape(-1)
        if self.Q.shape != (self.target.size, self.target.size):
            raise ProblemError("Q and target sizes disagree", "terminal_cost")

    def value(self, x) -> float:
        e = np.asarray(x, dtype=float) - self.target
        return 0.5 * float(e @ self.Q @ e)

    def gradient(self, x) -> np.ndarray:
        e = np.asarray(x, dtype=float) - self.target
        return 0.5 * (self.Q + self.Q.T) @ e


class CallbackTerminalCost:
    def __init__(self, func: Callable[[np.ndarray], float], grad: Optional[Callable] = None,
                 fd_step: float = FD_STEP):
        self.func = func
        self.grad = grad
        self.fd_step = fd_step

    def value(self, x) -> float:
        return float(self.func(np.asarray(x, dtype=float)))

    def gradient(self, x) -> np.ndarray:
        if self.grad is not None:
            return np.asarray(self.grad(np.asarray(x, dtype=float)), dtype=float)
        return _fd_gradient(self.value, np.asarray(x, dtype=float), self.fd_step)


class QuadraticRunningCost:
    """Running cost 0.5 z^T H z + g^T z + c0 on z = (x, u, a, dx, du, da).

    The velocity block of H must be positive semidefinite so that the
    cost is convex in velocities.
    """

    def __init__(self, n: int, d: int, H=None, g=None, c0: float = 0.0):
        self.n, self.d = int(n), int(d)
        size = 2 * (2 * self.n + self.d)
        self.H = np.zeros((size, size)) if H is None else np.asarray(H, dtype=float)
        self.g = np.zeros(size) if g is None else np.asarray(g, dtype=float).reshape(-1)
        self.c0 = float(c0)
        if self.H.shape != (size, size):
            raise ProblemError(f"H must be {size}x{size}", "running_cost.H")
        if self.g.size != size:
            raise ProblemError(f"g must have length {size}", "running_cost.g")
        self.H = 0.5 * (self.H + self.H.T)
        half = size // 2
        vel = self.H[half:, half:]
        if vel.size and np.min(np.linalg.eigvalsh(vel)) < -1e-12:
            raise ProblemError("velocity block is not positive semidefinite", "running_cost.H")

    @classmethod
    def from_blocks(cls, n: int, d: int, weights: dict, c0: float = 0.0) -> "QuadraticRunningCost":
        """Diagonal-block quadratic 0.5 sum_b w_b ||z_b||^2.

        ``weights`` maps block names x, u, a, dx, du, da to scalars.
        """
        sizes = [n, n, d, n, n, d]
        names = ["x", "u", "a", "dx", "du", "da"]
        diag = []
        for name, s in zip(names, sizes):
            diag.extend([float(weights.get(name, 0.0))] * s)
        unknown = set(weights) - set(names)
        if unknown:
            raise ProblemError(f"unknown blocks {sorted(unknown)}", "running_cost.weights")
        return cls(n, d, H=np.diag(diag), c0=c0)

    def _stack(self, x, u, a, dx, du, da) -> np.ndarray:
        return np.concatenate([np.ravel(x), np.ravel(u), np.ravel(a), np.ravel(dx), np.ravel(du), np.ravel(da)])

    def value(self, t, x, u, a, dx, du, da) -> float:
        z = self._stack(x, u, a, dx, du, da)
        return 0.5 * float(z @ self.H @ z) + float(self.g @ z) + self.c0

    def gradient(self, t, x, u, a, dx, du, da) -> np.ndarray:
        z = self._stack(x, u, a, dx, du, da)
        return self.H @ z + self.g


class CallbackRunningCost:
    """Running cost given as ``func(t, x, u, a, dx, du, da)``."""

    def __init__(self, n: int, d: int, func: Callable, grad: Optional[Callable] = None,
                 fd_step: float = FD_STEP):
        self.n, self.d = int(n), int(d)
        self.func = func
        self.grad = grad
        self.fd_step = fd_step

    def _split(self, z):
        n, d = self.n, self.d
        cuts = np.cumsum([n, n, d, n, n])
        return np.split(z, cuts)

    def value(self, t, x, u, a, dx, du, da) -> float:
        return float(self.func(t, x, u, a, dx, du, da))

    def gradient(self, t, x, u, a, dx, du, da) -> np.ndarray:
        if self.grad is not None:
            return np.asarray(self.grad(t, x, u, a, dx, du, da), dtype=float)
        z = np.concatenate([np.ravel(x), np.ravel(u), np.ravel(a), np.ravel(dx), np.ravel(du), np.ravel(da)])
        return _fd_gradient(lambda q: self.func(t, *self._split(q)), z, self.fd_step)


@dataclass
class ProblemSpec:
    """Full data of the controlled sweeping problem.

    Parameters
    ----------
    C : GeneratorSet
        Cone generators.
    f : PerturbationField
    x0 : array_like
        Initial state.
    r, T, tau : float
        Control radius, horizon and band margin with 0 <= tau <= min(r, T).
    terminal_cost, running_cost
        Cost objects exposing ``value`` and ``gradient``.
    u0 : array_like, optional
        Initial control, used for the initial feasibility check.
    reference : path, optional
        Reference triple bundled with the problem file.
    """

    C: GeneratorSet
    f: PerturbationField
    x0: np.ndarray
    r: float
    T: float
    tau: float
    terminal_cost: object
    running_cost: object
    u0: Optional[np.ndarray] = None
    reference: Optional[object] = None
    name: str = "problem"
    ilm_epsilon: float = 0.5
    extras: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        if self.x0.size != self.C.n:
            raise ProblemError(f"length {self.x0.size} does not match n={self.C.n}", "x0")
        if self.f.n != self.C.n:
            raise ProblemError("perturbation dimension does not match generators", "perturbation")
        for name in ("r", "T"):
            val = float(getattr(self, name))
            if not (val > 0 and math.isfinite(val)):
                raise ProblemError("must be positive", name)
            setattr(self, name, val)
        self.tau = float(self.tau)
        cap = min(self.r, self.T)
        if not (0.0 <= self.tau <= cap + 1e-15):
            raise ProblemError(f"tau={self.tau} outside [0, min(r, T)={cap}]", "tau")
        if self.u0 is None and self.reference is not None:
            self.u0 = np.asarray(self.reference.evaluate(0.0)[1], dtype=float)
        if self.u0 is not None:
            self.u0 = np.asarray(self.u0, dtype=float).reshape(-1)
            vals = self.C.values(self.x0 - self.u0)
            bad = np.flatnonzero(vals > ACTIVE_TOL)
            if bad.size:
                i = int(bad[0])
                raise ProblemError(f"initial state violates constraint {i + 1}: "
                                   f"<g_{i + 1}, x0 - u0> = {vals[i]:.6g} > 0", f"x0[constraint {i + 1}]")
        if self.ilm_epsilon <= 0:
            raise ProblemError("must be positive", "ilm_epsilon")

    @property
    def n(self) -> int:
        return self.C.n

    @property
    def d(self) -> int:
        return self.f.d

    @property
    def m(self) -> int:
        return self.C.m

    def with_tau(self, tau: float) -> "ProblemSpec":
        from dataclasses import replace
        return replace(self, tau=float(tau))

    def with_reference(self, reference) -> "ProblemSpec":
        from dataclasses import replace
        return replace(self, reference=reference, u0=None)

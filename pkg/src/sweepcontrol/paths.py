"""
Time-dependent triples t -> (x(t), u(t), a(t)).

Two flavours share one interface: :class:`ContinuousPath` is piecewise
linear through node values, :class:`SmoothPath` wraps user callables for
values and derivatives.  Derivatives are right derivatives, except at the
final time where the left one is used.
"""

from __future__ import annotations

from typing import Callable, Optional, Tuple

import numpy as np

# 3-point Gauss-Legendre on [-1, 1]
_GAUSS_NODES = np.array([-np.sqrt(3.0 / 5.0), 0.0, np.sqrt(3.0 / 5.0)])
_GAUSS_WEIGHTS = np.array([5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])


class PathError(ValueError):
    pass


class ContinuousPath:
    """Piecewise-linear triple through nodes.

    Parameters
    ----------
    times : array_like, shape (N+1,)
        Strictly increasing, starting at 0.
    x, u : array_like, shape (N+1, n)
    a : array_like, shape (N+1, d)
    """

    exact_moments = True

    def __init__(self, times, x, u, a):
        self.times = np.asarray(times, dtype=float).reshape(-1)
        if self.times.size < 2:
            raise PathError("need at least two nodes")
        if np.any(np.diff(self.times) <= 0):
            raise PathError("times must be strictly increasing")
        if abs(self.times[0]) > 1e-14:
            raise PathError("times must start at 0")
        N = self.times.size
        self.x = np.asarray(x, dtype=float).reshape(N, -1)
        self.u = np.asarray(u, dtype=float).reshape(N, -1)
        self.a = np.asarray(a, dtype=float).reshape(N, -1)
        if self.x.shape != self.u.shape:
            raise PathError("x and u must have equal shapes")

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def n(self) -> int:
        return self.x.shape[1]

    @property
    def d(self) -> int:
        return self.a.shape[1]

    def _interval(self, t: float) -> int:
        j = int(np.searchsorted(self.times, t, side="right")) - 1
        return min(max(j, 0), self.times.size - 2)

    def evaluate(self, t: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        j = self._interval(t)
        t0, t1 = self.times[j], self.times[j + 1]
        s = (t - t0) / (t1 - t0)
        lerp = lambda arr: (1 - s) * arr[j] + s * arr[j + 1]
        return lerp(self.x), lerp(self.u), lerp(self.a)

    def derivative(self, t: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        j = self._interval(t)
        dt = self.times[j + 1] - self.times[j]
        return ((self.x[j + 1] - self.x[j]) / dt, (self.u[j + 1] - self.u[j]) / dt,
                (self.a[j + 1] - self.a[j]) / dt)

    def squared_speed_integral(self, s0: float, s1: float) -> np.ndarray:
        """Integrals of ||dx||^2, ||du||^2, ||da||^2 over [s0, s1]."""
        pts = [s0] + [t for t in self.times if s0 < t < s1] + [s1]
        out = np.zeros(3)
        for lo, hi in zip(pts[:-1], pts[1:]):
            dx, du, da = self.derivative(0.5 * (lo + hi))
            out += (hi - lo) * np.array([dx @ dx, du @ du, da @ da])
        return out

    def total_variation_u(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.u, axis=0), axis=1)))

    def sample(self, times) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        vals = [self.evaluate(t) for t in np.asarray(times, dtype=float)]
        return (np.array([v[0] for v in vals]), np.array([v[1] for v in vals]),
                np.array([v[2] for v in vals]))

    def to_dict(self) -> dict:
        return {"times": self.times, "x": self.x, "u": self.u, "a": self.a}

    @classmethod
    def from_dict(cls, data: dict) -> "ContinuousPath":
        return cls(data["times"], data["x"], data["u"], data["a"])

    @classmethod
    def constant(cls, T: float, x, u, a) -> "ContinuousPath":
        x, u, a = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (x, u, a))
        return cls([0.0, T], [x, x], [u, u], [a, a])

    def __eq__(self, other) -> bool:
        if not isinstance(other, ContinuousPath):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k)) for k in ("times", "x", "u", "a"))


class SmoothPath:
    """Triple defined by callables.

    Parameters
    ----------
    T : float
    x, u, a : callable
        ``t -> array``.
    dx, du, da : callable
        Matching derivatives.
    """

    exact_moments = False

    def __init__(self, T: float, x: Callable, u: Callable, a: Callable, dx: Callable, du: Callable,
                 da: Callable):
        self._T = float(T)
        self._f = (x, u, a)
        self._df = (dx, du, da)
        self._n = np.atleast_1d(x(0.0)).size
        self._d = np.atleast_1d(a(0.0)).size

    @property
    def T(self) -> float:
        return self._T

    @property
    def n(self) -> int:
        return self._n

    @property
    def d(self) -> int:
        return self._d

    def evaluate(self, t: float):
        return tuple(np.atleast_1d(np.asarray(fn(t), dtype=float)) for fn in self._f)

    def derivative(self, t: float):
        return tuple(np.atleast_1d(np.asarray(fn(t), dtype=float)) for fn in self._df)

    def squared_speed_integral(self, s0: float, s1: float) -> np.ndarray:
        mid, half = 0.5 * (s0 + s1), 0.5 * (s1 - s0)
        out = np.zeros(3)
        for node, wt in zip(_GAUSS_NODES, _GAUSS_WEIGHTS):
            ders = self.derivative(mid + half * node)
            out += wt * half * np.array([float(v @ v) for v in ders])
        return out

    def sample(self, times):
        vals = [self.evaluate(t) for t in np.asarray(times, dtype=float)]
        return (np.array([v[0] for v in vals]), np.array([v[1] for v in vals]),
                np.array([v[2] for v in vals]))

    def to_piecewise(self, times) -> ContinuousPath:
        x, u, a = self.sample(times)
        return ContinuousPath(times, x, u, a)

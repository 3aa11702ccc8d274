"""
Sweeping dynamics  -x'(t) in N(x(t) - u(t); C) + f(x(t), a(t)).

The velocity set at (x, u, a) is cone{g_i : i active at x - u} + f(x, a).
Trajectories for given controls come from the implicit catching-up
scheme, which keeps every node inside the moving set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .geometry import (ACTIVE_TOL, GeneratorSet, active_indices, distance_to_translate,
                       project_cone_of_generators, project_translated_polyhedron)
from .paths import ContinuousPath
from .problem import ProblemSpec


class EmptyImageError(ValueError):
    """The velocity set is empty because x - u lies outside the cone."""


@dataclass(frozen=True)
class VelocityProjection:
    point: np.ndarray
    distance: float
    coefficients: np.ndarray
    active: Tuple[int, ...]


def project_onto_velocity_set(w, x, u, a, spec: ProblemSpec, tol: float = ACTIVE_TOL) -> VelocityProjection:
    """Nearest point to ``w`` in the velocity set F(x, u, a).

    Parameters
    ----------
    w : array_like
        Point to project.
    x, u, a : array_like
        State, shift and control.
    spec : ProblemSpec

    Returns
    -------
    VelocityProjection
        The nearest point, its distance to ``w``, the cone coefficients
        over all m generators and the active index tuple.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    act = active_indices(x - u, spec.C, tol)
    if act.outside:
        vals = spec.C.values(x - u)
        raise EmptyImageError(f"x - u outside the cone (max <g_i, x - u> = {vals.max():.3g})")
    drift = spec.f.value(x, a)
    idx = tuple(sorted(act.indices))
    coeffs = np.zeros(spec.m)
    shifted = np.asarray(w, dtype=float) - drift
    if idx:
        cone_pt, c = project_cone_of_generators(shifted, spec.C.matrix[list(idx)])
        coeffs[list(idx)] = c
    else:
        cone_pt = np.zeros_like(shifted)
    point = cone_pt + drift
    return VelocityProjection(point, float(np.linalg.norm(np.asarray(w, dtype=float) - point)), coeffs, idx)


def catching_up_integrate(spec: ProblemSpec, controls, k: int) -> ContinuousPath:
    """Trajectory of the sweeping process for prescribed controls.

    Uses x_{j+1} = Proj(x_j - h f(x_j, a(t_j)); C + u(t_{j+1})) on the
    uniform mesh with h = T / k.  The returned path carries the sampled
    controls alongside the state.

    Parameters
    ----------
    spec : ProblemSpec
    controls : path
        Anything with ``evaluate(t) -> (x, u, a)``; only u and a are used.
    k : int
        Number of steps.
    """
    if int(k) != k or k < 1:
        raise ValueError(f"step count must be a positive integer, got {k}")
    k = int(k)
    h = spec.T / k
    times = np.linspace(0.0, spec.T, k + 1)
    us = np.array([controls.evaluate(t)[1] for t in times])
    as_ = np.array([controls.evaluate(t)[2] for t in times])
    if not spec.C.contains(spec.x0, us[0]):
        raise ValueError("x0 - u(0) lies outside the cone")
    xs = np.zeros((k + 1, spec.n))
    xs[0] = spec.x0
    for j in range(k):
        pred = xs[j] - h * spec.f.value(xs[j], as_[j])
        xs[j + 1], _ = project_translated_polyhedron(pred, spec.C, us[j + 1])
    return ContinuousPath(times, xs, us, as_)


def _control_variation(path, t: float, pieces: int = 64) -> float:
    """v(t) = integral of ||u'|| over [0, t]."""
    if t <= 0:
        return 0.0
    if isinstance(path, ContinuousPath):
        total = 0.0
        times = path.times
        for j in range(times.size - 1):
            lo, hi = times[j], min(times[j + 1], t)
            if hi <= lo:
                break
            total += (hi - lo) * np.linalg.norm((path.u[j + 1] - path.u[j]) / (times[j + 1] - times[j]))
        return float(total)
    from .paths import _GAUSS_NODES, _GAUSS_WEIGHTS
    edges = np.linspace(0.0, t, pieces + 1)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        for node, wt in zip(_GAUSS_NODES, _GAUSS_WEIGHTS):
            total += wt * half * np.linalg.norm(path.derivative(mid + half * node)[1])
    return float(total)


@dataclass(frozen=True)
class WellposednessBounds:
    state_bound: float
    interval_speed_bounds: np.ndarray
    control_variation: float

    def speed_bound_at(self, du_norm: float, growth: float) -> float:
        return 2.0 * (1.0 + self.state_bound) * growth + du_norm


def wellposedness_bounds(spec: ProblemSpec, controls, k: Optional[int] = None) -> WellposednessBounds:
    """A priori bounds on the state and its speed.

    The state bound is ||x0|| + exp(2MT) (2MT (1 + ||x0||) + V) where V is
    the total variation of u over [0, T].  The speed bound on a mesh
    interval is 2 (1 + state bound) M + ||u'|| evaluated there.

    Parameters
    ----------
    spec : ProblemSpec
    controls : path
    k : int, optional
        Mesh used to report interval speed bounds.  Defaults to the
        node count of a piecewise-linear control path, or 100.
    """
    M, T = spec.f.growth, spec.T
    x0n = float(np.linalg.norm(spec.x0))
    V = _control_variation(controls, T)
    bound = x0n + math.exp(2 * M * T) * (2 * M * T * (1 + x0n) + V)
    if k is None:
        k = controls.times.size - 1 if isinstance(controls, ContinuousPath) else 100
    times = np.linspace(0.0, T, k + 1)
    speeds = np.array([2 * (1 + bound) * M + np.linalg.norm(controls.derivative(0.5 * (lo + hi))[1])
                       for lo, hi in zip(times[:-1], times[1:])])
    return WellposednessBounds(bound, speeds, V)


def moving_set_modulus_check(controls, C: GeneratorSet, samples: int = 1000, seed: int = 0,
                             box: float = 5.0, tol: float = 0.0) -> float:
    """Worst slack of |dist(y; C+u(t)) - dist(y; C+u(s))| <= |v(t) - v(s)|.

    Returns the largest value of the left side minus the right side over
    random (y, t, s).  A nonpositive result means no violation.
    """
    rng = np.random.default_rng(seed)
    worst = -math.inf
    T = controls.T
    for _ in range(samples):
        y = rng.uniform(-box, box, C.n)
        t, s = rng.uniform(0.0, T, 2)
        lhs = abs(distance_to_translate(y, C, controls.evaluate(t)[1])
                  - distance_to_translate(y, C, controls.evaluate(s)[1]))
        rhs = abs(_control_variation(controls, t) - _control_variation(controls, s))
        worst = max(worst, lhs - rhs - tol)
    return float(worst)

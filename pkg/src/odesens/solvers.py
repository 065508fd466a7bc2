"""Explicit Euler and adaptive embedded Runge-Kutta 3(2) integrators.

Both integrators are generic over the scalar kind of the state (real,
complex, dual): the stepping arithmetic never leaves the kind, while
step-size control reduces each component to a real magnitude first.
Output can be requested either as a plain time span, in which case the
solver reports its own step points, or as a prescribed vector of time
points.  Prescribed points are filled from the cubic Hermite continuous
extension of accepted steps, so they never influence step selection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .scalars import is_finite_scalar, magnitude

__all__ = [
    "Span",
    "Points",
    "TimeSpec",
    "Trajectory",
    "ToleranceConfig",
    "EulerMethod",
    "RK23Method",
    "SolverMethod",
    "SolverError",
    "NonFiniteStateError",
    "MaxStepsExceededError",
    "StepUnderflowError",
    "SpanModeError",
    "euler_solve",
    "rk23_step",
    "rk23_solve",
    "hermite_interp",
    "run_solver",
]

_EPS = float(np.finfo(float).eps)


class SolverError(RuntimeError):
    """Base class for integration failures."""


class NonFiniteStateError(SolverError):
    """A state component became NaN or infinite during integration."""


class MaxStepsExceededError(SolverError):
    """The adaptive solver used up its step budget."""


class StepUnderflowError(SolverError):
    """The adaptive step size shrank below the resolvable scale at t."""


class SpanModeError(ValueError):
    """An operation that needs a prescribed output grid got a plain span."""


@dataclass(frozen=True)
class Span:
    """Integration window ``[t0, t_end]``; the solver picks output times."""

    t0: float
    t_end: float

    def __post_init__(self):
        if not self.t_end > self.t0:
            raise ValueError(f"t_end ({self.t_end}) must exceed t0 ({self.t0})")


@dataclass(frozen=True)
class Points:
    """Strictly increasing output times; row k of the result is at times[k].

    A single point is allowed and means "initial state only".
    """

    times: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.shape[0] < 1:
            raise ValueError("prescribed time points must form a non-empty 1-D vector")
        if times.shape[0] > 1 and not np.all(np.diff(times) > 0.0):
            raise ValueError("prescribed time points must be strictly increasing")
        object.__setattr__(self, "times", times)


TimeSpec = Union[Span, Points]


@dataclass(frozen=True)
class Trajectory:
    """Time grid plus the state at each grid row."""

    times: np.ndarray
    states: np.ndarray


@dataclass(frozen=True)
class ToleranceConfig:
    """Error tolerances and step-control constants for the adaptive solver.

    The defaults mirror the documented defaults of the MATLAB-style solver
    family this scheme comes from (rel 1e-3, abs 1e-6).
    """

    rel_tol: float = 1e-3
    abs_tol: float = 1e-6
    safety: float = 0.8
    min_factor: float = 0.2
    max_factor: float = 5.0
    max_steps: int = 1_000_000

    def __post_init__(self):
        if self.rel_tol <= 0.0 or self.abs_tol <= 0.0:
            raise ValueError("tolerances must be positive")
        if not 0.0 < self.min_factor < 1.0 < self.max_factor:
            raise ValueError("need 0 < min_factor < 1 < max_factor")
        if not 0.0 < self.safety <= 1.0:
            raise ValueError("safety must lie in (0, 1]")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")


@dataclass(frozen=True)
class EulerMethod:
    """Fixed-step explicit Euler with step size ``dt``."""

    dt: float


@dataclass(frozen=True)
class RK23Method:
    """Adaptive embedded 3(2) Runge-Kutta."""

    tol: ToleranceConfig = field(default_factory=ToleranceConfig)


SolverMethod = Union[EulerMethod, RK23Method]


def run_solver(rhs: Callable, time: TimeSpec, y0, method: SolverMethod) -> Trajectory:
    """Dispatch to the configured integrator."""
    if isinstance(method, EulerMethod):
        return euler_solve(rhs, time, y0, method.dt)
    if isinstance(method, RK23Method):
        return rk23_solve(rhs, time, y0, method.tol)
    raise TypeError(f"unknown solver method: {method!r}")


def _state_array(y0) -> np.ndarray:
    y = np.asarray(y0)
    if y.ndim != 1:
        raise ValueError("initial state must be a 1-D vector")
    return y.copy()


def _magnitudes(v: np.ndarray) -> np.ndarray:
    if v.dtype == object:
        return np.array([magnitude(x) for x in v])
    return np.abs(v)


def _all_finite(v: np.ndarray) -> bool:
    if v.dtype == object:
        return all(is_finite_scalar(x) for x in v)
    return bool(np.all(np.isfinite(v)))


def _check_finite(v: np.ndarray, step: int, t: float):
    if not _all_finite(v):
        raise NonFiniteStateError(f"non-finite state at step {step} (t = {t!r})")


def _substeps(gap: float, dt: float) -> int:
    # The shave keeps a gap that equals dt up to roundoff at one substep.
    return max(1, int(math.ceil((gap / dt) * (1.0 - 1e-12))))


def euler_solve(rhs: Callable, time: TimeSpec, y0, dt: float) -> Trajectory:
    """Integrate ``y' = rhs(t, y)`` with the explicit Euler recurrence.

    For a plain span the states follow ``y_{k+1} = y_k + dt * rhs(t_k, y_k)``
    with the final step shortened to land exactly on ``t_end``.  For
    prescribed points each gap is covered with uniform substeps of size at
    most ``dt`` and only the requested rows are reported.

    Generic over the scalar kind of ``y0``; ``dt`` and the time grid stay
    real.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    y = _state_array(y0)
    step = 0

    if isinstance(time, Points):
        pts = time.times
        rows = [y]
        for a, b in zip(pts[:-1], pts[1:]):
            n_sub = _substeps(b - a, dt)
            h = (b - a) / n_sub
            for j in range(n_sub):
                y = y + h * rhs(a + j * h, y)
                step += 1
            _check_finite(y, step, b)
            rows.append(y)
        return Trajectory(pts.copy(), np.array(rows))

    if not isinstance(time, Span):
        raise TypeError(f"unknown time specification: {time!r}")

    span = time.t_end - time.t0
    q = span / dt
    n_full = int(math.floor(q))
    if q - n_full > 1.0 - 1e-9:
        n_full += 1
    times = time.t0 + dt * np.arange(n_full + 1)
    remainder = time.t_end - times[-1]
    if remainder > dt * 1e-9:
        times = np.append(times, time.t_end)
    times[-1] = time.t_end

    rows = [y]
    for k in range(len(times) - 1):
        h = times[k + 1] - times[k]
        y = y + h * rhs(times[k], y)
        step += 1
        _check_finite(y, step, times[k + 1])
        rows.append(y)
    return Trajectory(times, np.array(rows))


def rk23_step(rhs: Callable, t: float, y: np.ndarray, h: float, k1=None):
    """One embedded 3(2) step.

    Returns ``(y_next, err_estimate, k4)`` where ``y_next`` is the 3rd-order
    advance, ``err_estimate`` the difference to the embedded 2nd-order
    solution and ``k4 = rhs(t + h, y_next)``, reusable as the next step's
    first stage and as the derivative for Hermite interpolation.
    """
    if h <= 0.0:
        raise ValueError("step size must be positive")
    if k1 is None:
        k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * h, y + (0.5 * h) * k1)
    k3 = rhs(t + 0.75 * h, y + (0.75 * h) * k2)
    y_next = y + h * ((2.0 / 9.0) * k1 + (1.0 / 3.0) * k2 + (4.0 / 9.0) * k3)
    k4 = rhs(t + h, y_next)
    err = h * ((-5.0 / 72.0) * k1 + (1.0 / 12.0) * k2 + (1.0 / 9.0) * k3 - 0.125 * k4)
    return y_next, err, k4


def _error_norm(err, y_old, y_new, tol: ToleranceConfig) -> float:
    scale = tol.abs_tol + tol.rel_tol * np.maximum(_magnitudes(y_old), _magnitudes(y_new))
    return float(np.max(_magnitudes(err) / scale))


def _initial_step(t0: float, t_end: float, y0, f0, tol: ToleranceConfig) -> float:
    scale = tol.abs_tol + tol.rel_tol * _magnitudes(y0)
    d0 = float(np.max(_magnitudes(y0) / scale))
    d1 = float(np.max(_magnitudes(f0) / scale))
    guess = d0 / d1 if d1 > 0.0 else math.inf
    h = min(0.1 * (t_end - t0), guess)
    h = max(h, 16.0 * _EPS * abs(t0 + 1.0))
    return min(h, t_end - t0)


def rk23_solve(rhs: Callable, time: TimeSpec, y0, tol: ToleranceConfig | None = None) -> Trajectory:
    """Adaptive 3(2) integration with FSAL stage reuse.

    A step is accepted when the scaled error norm
    ``max_i |e_i| / (abs_tol + rel_tol * max(|y_i|, |y_next_i|))`` is at
    most one; magnitudes include complex or dual payloads, so perturbations
    carried there influence step selection.  With prescribed points the
    step sequence is identical to the plain-span run and requested rows are
    filled from the cubic Hermite extension of the accepted steps.
    """
    tol = tol if tol is not None else ToleranceConfig()
    points = None
    if isinstance(time, Points):
        points = time.times
        t0, t_end = float(points[0]), float(points[-1])
    elif isinstance(time, Span):
        t0, t_end = time.t0, time.t_end
    else:
        raise TypeError(f"unknown time specification: {time!r}")

    y = _state_array(y0)
    if points is not None and points.shape[0] == 1:
        return Trajectory(points.copy(), np.array([y]))

    f = np.asarray(rhs(t0, y))
    _check_finite(f, 0, t0)
    h = _initial_step(t0, t_end, y, f, tol)

    knot_t = [t0]
    knot_y = [y]
    knot_f = [f]
    t = t0
    attempts = 0
    while t < t_end:
        attempts += 1
        if attempts > tol.max_steps:
            raise MaxStepsExceededError(
                f"exceeded {tol.max_steps} step attempts at t = {t!r}"
            )
        clamped = h >= t_end - t
        h_try = (t_end - t) if clamped else h
        y_next, err_vec, k4 = rk23_step(rhs, t, y, h_try, k1=f)
        _check_finite(np.asarray(y_next), attempts, t + h_try)
        err = _error_norm(np.asarray(err_vec), np.asarray(y), np.asarray(y_next), tol)
        if err <= 1.0:
            t = t_end if clamped else t + h_try
            y = y_next
            f = k4
            knot_t.append(t)
            knot_y.append(y)
            knot_f.append(f)
        if err == 0.0:
            factor = tol.max_factor
        else:
            factor = min(tol.max_factor, max(tol.min_factor, tol.safety * err ** (-1.0 / 3.0)))
        h = h_try * factor
        if t < t_end and h < 16.0 * _EPS * abs(t):
            raise StepUnderflowError(f"step size underflow at t = {t!r} (h = {h!r})")

    if points is None:
        return Trajectory(np.array(knot_t), np.array(knot_y))

    kt = np.array(knot_t)
    rows = []
    for p in points:
        idx = int(np.searchsorted(kt, p, side="right")) - 1
        if idx == len(kt) - 1 or kt[idx] == p:
            rows.append(knot_y[idx])
        else:
            rows.append(
                hermite_interp(
                    kt[idx], knot_y[idx], knot_f[idx],
                    kt[idx + 1], knot_y[idx + 1], knot_f[idx + 1],
                    float(p),
                )
            )
    return Trajectory(points.copy(), np.array(rows))


def hermite_interp(t_a: float, y_a, f_a, t_b: float, y_b, f_b, t_query: float):
    """Cubic Hermite value between two solver knots.

    Exact at the endpoints and reproduces cubic polynomials exactly when
    ``f_a``/``f_b`` are the endpoint derivatives.
    """
    if not t_a <= t_query <= t_b:
        raise ValueError(f"query time {t_query} outside knot interval [{t_a}, {t_b}]")
    h = t_b - t_a
    s = (t_query - t_a) / h
    s2 = s * s
    s3 = s2 * s
    h00 = 2.0 * s3 - 3.0 * s2 + 1.0
    h10 = s3 - 2.0 * s2 + s
    h01 = -2.0 * s3 + 3.0 * s2
    h11 = s3 - s2
    return h00 * y_a + (h10 * h) * f_a + h01 * y_b + (h11 * h) * f_b

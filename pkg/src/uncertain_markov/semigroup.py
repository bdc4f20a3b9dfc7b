"""Upper expectation semigroup of an uncertain generator.

``T_t f`` is obtained by integrating the backward equation

    dv/ds = max_g Q(g) v,    v(0) = f,

state by state, with fixed-step classical RK4. The maximising control at
every grid time is kept so that a Markov policy can be read off afterwards.
Lower (infimum) semigroups follow from ``-T_t(-f)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ParameterError, ShapeError, UsageError
from .models import UncertainGenerator

DEFAULT_STEP = 1e-3


@dataclass(frozen=True, eq=False)
class SemigroupRun:
    """Trajectory ``s -> T_s f`` on a fixed time grid.

    ``argmax_field[j]`` holds the maximising control at ``iterates[j]``; it
    drives the backward step from ``time_grid[j]`` to ``time_grid[j+1]``.
    ``error_estimate[j]`` is the step-halving residual of that step.
    """

    time_grid: np.ndarray
    iterates: np.ndarray
    argmax_field: np.ndarray
    step_size: float
    error_estimate: np.ndarray
    labels: tuple[str, ...] = ()

    @property
    def final(self) -> np.ndarray:
        return self.iterates[-1]

    @property
    def horizon(self) -> float:
        return float(self.time_grid[-1])

    def __len__(self):
        return len(self.time_grid)


def default_step(gen: UncertainGenerator) -> float:
    R = gen.max_total_rate()
    return DEFAULT_STEP if R == 0 else min(DEFAULT_STEP, 0.1 / R)


def max_step(gen: UncertainGenerator) -> float:
    """Largest step for which RK4 on the backward equation stays order preserving."""
    R = gen.max_total_rate()
    return math.inf if R == 0 else 1.0 / (2.0 * R)


def resolve_step(gen: UncertainGenerator, step: float | None) -> float:
    if step is None:
        return default_step(gen)
    step = float(step)
    if not step > 0 or not math.isfinite(step):
        raise ParameterError(f"step must be positive, got {step}")
    if step > max_step(gen):
        raise ParameterError(
            f"step {step} exceeds 1/(2 * max total rate) = {max_step(gen)}; "
            "monotonicity of the scheme is not guaranteed")
    return step


def time_grid(t: float, step: float) -> np.ndarray:
    """Uniform grid ``0, h, 2h, ...`` ending exactly at ``t``; the last step may be shorter."""
    t = float(t)
    if t < 0 or not math.isfinite(t):
        raise ParameterError(f"horizon must be a finite nonnegative number, got {t}")
    if t == 0:
        return np.zeros(1)
    n = max(1, math.ceil(t / step - 1e-9))
    grid = np.arange(n + 1) * step
    grid[-1] = t
    return grid


def rk4_step(rhs: Callable[[np.ndarray], np.ndarray], v: np.ndarray, h: float,
             k1: np.ndarray | None = None) -> np.ndarray:
    if k1 is None:
        k1 = rhs(v)
    k2 = rhs(v + 0.5 * h * k1)
    k3 = rhs(v + 0.5 * h * k2)
    k4 = rhs(v + h * k3)
    return v + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def halving_residual(rhs, v: np.ndarray, h: float, full: np.ndarray, k1: np.ndarray) -> float:
    half = rk4_step(rhs, v, 0.5 * h, k1)
    half = rk4_step(rhs, half, 0.5 * h)
    return float(np.max(np.abs(half - full), initial=0.0))


def _sup(gen: UncertainGenerator, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    W = gen.apply_all(v)
    best = np.argmax(W, axis=0)  # first maximiser = smallest grid index
    return np.take_along_axis(W, best[None], axis=0)[0], best


def apply_generator_sup(gen: UncertainGenerator, v) -> tuple[np.ndarray, np.ndarray]:
    """Per-state maximum of ``Q(g) v`` over the grid and the lowest maximising index."""
    v = np.asarray(v, dtype=float)
    if v.ndim == 0 or v.shape[0] != gen.n_states:
        raise ShapeError(f"state function has shape {v.shape}, expected ({gen.n_states},)")
    return _sup(gen, v)


def _as_state_function(gen: UncertainGenerator, f) -> np.ndarray:
    f = np.array(f, dtype=float)
    if f.ndim not in (1, 2) or f.shape[0] != gen.n_states:
        raise ShapeError(f"state function has shape {f.shape}, expected ({gen.n_states},) or ({gen.n_states}, B)")
    if not np.all(np.isfinite(f)):
        raise ParameterError("state function must be finite")
    return f


def evolve(gen: UncertainGenerator, f, t: float, step: float | None = None,
           estimate_error: bool = True) -> SemigroupRun:
    """Integrate the backward equation from ``f`` over ``[0, t]`` and keep every iterate.

    ``f`` may carry a trailing batch axis, in which case each column evolves
    independently.
    """
    f = _as_state_function(gen, f)
    h = resolve_step(gen, step)
    grid = time_grid(t, h)
    K = len(grid) - 1
    iterates = np.empty((K + 1,) + f.shape)
    argmax = np.empty((K + 1,) + f.shape, dtype=np.intp)
    errors = np.zeros(K)
    rhs = lambda u: _sup(gen, u)[0]
    v = f
    iterates[0] = f
    for j in range(K):
        k1, argmax[j] = _sup(gen, v)
        dt = grid[j + 1] - grid[j]
        nxt = rk4_step(rhs, v, dt, k1)
        if estimate_error:
            errors[j] = halving_residual(rhs, v, dt, nxt, k1)
        v = nxt
        iterates[j + 1] = v
    argmax[K] = _sup(gen, v)[1]
    return SemigroupRun(grid, iterates, argmax, h, errors, gen.labels)


def transition(gen: UncertainGenerator, f, t: float, step: float | None = None) -> np.ndarray:
    """``T_t f`` only, without storing the trajectory."""
    f = _as_state_function(gen, f)
    grid = time_grid(t, resolve_step(gen, step))
    rhs = lambda u: _sup(gen, u)[0]
    v = f
    for dt in np.diff(grid):
        v = rk4_step(rhs, v, dt)
    return v


@dataclass
class SemigroupReport:
    lhs: np.ndarray
    rhs: np.ndarray
    max_abs_gap: float
    passed: bool


@dataclass
class MonotoneReport:
    lower: np.ndarray
    upper: np.ndarray
    max_violation: float
    passed: bool


@dataclass
class ConstantsReport:
    values: np.ndarray
    max_abs_gap: float
    passed: bool


def check_semigroup(gen, f, s: float, t: float, step: float | None = None,
                    tol: float = 1e-6) -> SemigroupReport:
    """Compare ``T_s(T_t f)`` with ``T_{s+t} f``."""
    lhs = transition(gen, transition(gen, f, t, step), s, step)
    rhs = transition(gen, f, s + t, step)
    gap = float(np.max(np.abs(lhs - rhs)))
    return SemigroupReport(lhs, rhs, gap, gap <= tol)


def check_monotone(gen, f, g, t: float, step: float | None = None,
                   slack: float = 1e-10) -> MonotoneReport:
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != g.shape:
        raise ShapeError("f and g must have the same shape")
    if np.any(f > g):
        raise UsageError("monotonicity check needs f <= g pointwise")
    lo = transition(gen, f, t, step)
    hi = transition(gen, g, t, step)
    violation = float(np.max(lo - hi))
    return MonotoneReport(lo, hi, violation, violation <= slack)


def check_constants(gen, c: float, t: float, step: float | None = None,
                    tol: float = 1e-10) -> ConstantsReport:
    values = transition(gen, np.full(gen.n_states, float(c)), t, step)
    gap = float(np.max(np.abs(values - c)))
    return ConstantsReport(values, gap, gap <= tol)

"""Greedy Markov selection from a semigroup run.

The backward iterate at backward time ``s`` governs forward time ``t - s``:
backward step ``j`` (from ``s_j`` to ``s_{j+1}``) becomes forward cell
``[t - s_{j+1}, t - s_j]``, with the control that maximised ``Q(g) v(s_j)``.
Under that single linear chain the expectation of ``f`` should reproduce
the upper semigroup value, up to the lag of the policy at switching times.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UsageError
from .models import UncertainGenerator
from .oracle import MarkovPolicy, exact_expectation
from .semigroup import SemigroupRun, evolve


def extract_policy(run: SemigroupRun) -> MarkovPolicy:
    K = len(run.time_grid) - 1
    if K < 1:
        raise UsageError("run has no time steps to turn into policy cells")
    if run.argmax_field.ndim != 2:
        raise UsageError("policy extraction needs a run of a single state function")
    t = run.time_grid[-1]
    boundaries = t - run.time_grid[::-1]
    choice = run.argmax_field[K - 1::-1]
    return MarkovPolicy(boundaries, choice)


@dataclass
class SelectionReport:
    hjb: np.ndarray
    selected: np.ndarray
    max_gap: float
    passed: bool
    policy: MarkovPolicy | None


def verify_selection(gen: UncertainGenerator, f, t: float, step: float | None = None,
                     tol: float = 1e-4) -> SelectionReport:
    """Compare ``T_t f`` with the value of the greedy policy extracted for this ``(f, t)``."""
    run = evolve(gen, f, t, step, estimate_error=False)
    if len(run.time_grid) == 1:
        f = run.final
        return SelectionReport(f, f.copy(), 0.0, True, None)
    policy = extract_policy(run)
    selected = exact_expectation(gen, policy, f, step=run.step_size)
    gap = float(np.max(np.abs(run.final - selected)))
    return SelectionReport(run.final, selected, gap, gap <= tol, policy)

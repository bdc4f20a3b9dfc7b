"""Policy oracle: linear evaluation, simulation and brute force over Markov policies.

Everything here works with a *fixed* Markov policy, i.e. a control per
(time cell, state). Under such a policy the chain is an ordinary
time-inhomogeneous CTMC, so its expectations can be computed exactly and
sampled, independently of the max-over-controls backward equation. Any
policy value is a lower bound for the upper semigroup.
"""

from __future__ import annotations

import bisect
import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ParameterError, ShapeError, SizeError, UsageError
from .models import UncertainGenerator
from .semigroup import resolve_step, rk4_step

HORIZON_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class MarkovPolicy:
    """Piecewise-constant state feedback: ``choice[j, k]`` is used on ``[b_j, b_{j+1})`` at state ``k``."""

    cell_boundaries: np.ndarray
    choice: np.ndarray

    def __post_init__(self):
        b = np.array(self.cell_boundaries, dtype=float)
        choice = np.array(self.choice, dtype=np.intp)
        if b.ndim != 1 or len(b) < 2:
            raise ShapeError("need at least one cell")
        if b[0] != 0.0 or np.any(np.diff(b) <= 0):
            raise UsageError("cell boundaries must start at 0 and increase strictly")
        if choice.ndim != 2 or choice.shape[0] != len(b) - 1:
            raise ShapeError(f"choice must have shape ({len(b) - 1}, N), got {choice.shape}")
        if np.any(choice < 0):
            raise ParameterError("negative control index in policy")
        b.setflags(write=False)
        choice.setflags(write=False)
        object.__setattr__(self, "cell_boundaries", b)
        object.__setattr__(self, "choice", choice)

    @property
    def horizon(self) -> float:
        return float(self.cell_boundaries[-1])

    @property
    def n_cells(self) -> int:
        return self.choice.shape[0]

    @property
    def n_states(self) -> int:
        return self.choice.shape[1]

    @classmethod
    def constant(cls, t: float, n_states: int, control: int = 0, n_cells: int = 1) -> "MarkovPolicy":
        return cls(np.linspace(0.0, t, n_cells + 1), np.full((n_cells, n_states), control))

    def check_against(self, gen: UncertainGenerator, t: float | None = None) -> None:
        if self.n_states != gen.n_states:
            raise ShapeError(f"policy covers {self.n_states} states, generator has {gen.n_states}")
        if np.any(self.choice >= gen.n_controls):
            raise ParameterError("policy uses a control index outside the grid")
        if t is not None and abs(self.horizon - t) > HORIZON_TOL * max(1.0, t):
            raise UsageError(f"policy covers [0, {self.horizon}] but horizon {t} was requested")


@dataclass(frozen=True, eq=False)
class Trajectory:
    jump_times: np.ndarray
    states: np.ndarray  # states[0] is the initial state, states[i] holds after jump i
    terminal_time: float

    def state_at(self, s: float) -> int:
        return int(self.states[np.searchsorted(self.jump_times, s, side="right")])

    @property
    def final_state(self) -> int:
        return int(self.states[-1])


def expm_action(Q, v, t: float, tol: float = 1e-17) -> np.ndarray:
    """``exp(t Q) v`` by uniformisation.

    ``Q`` is a Q-matrix (dense or sparse). The horizon is cut into pieces of
    uniformised length at most 1, on each of which the Poisson-weighted power
    series of ``I + Q / rate`` is summed until the remaining weight drops
    below ``tol``.
    """
    Q = sp.csr_matrix(Q, dtype=float)
    v = np.array(v, dtype=float)
    rate = float(np.max(-Q.diagonal(), initial=0.0))
    if t < 0:
        raise ParameterError("t must be nonnegative")
    if t == 0 or rate == 0:
        return v
    P = (sp.identity(Q.shape[0], format="csr") + Q / rate).tocsr()
    pieces = max(1, math.ceil(rate * t))
    a = rate * t / pieces
    for _ in range(pieces):
        term = v
        weight = math.exp(-a)
        acc = weight * term
        mass = weight
        k = 0
        while 1.0 - mass > tol and k < 200:
            k += 1
            term = P @ term
            weight *= a / k
            mass += weight
            acc = acc + weight * term
            if weight < tol * 1e-3 and k > a:
                break
        v = acc
    return v


def exact_expectation(gen: UncertainGenerator, policy: MarkovPolicy, f, step: float | None = None,
                      method: str = "rk4", t: float | None = None) -> np.ndarray:
    """``E[f(X_T) | X_0 = k]`` for every ``k`` under ``policy`` with ``T = policy.horizon``.

    Evolves the linear backward equation cell by cell, last cell first.
    ``method="rk4"`` uses the fixed-step RK4 integrator with substeps no
    longer than ``step``; ``method="uniformization"`` uses :func:`expm_action`.
    """
    policy.check_against(gen, t)
    v = np.array(f, dtype=float)
    if v.shape[0] != gen.n_states:
        raise ShapeError(f"state function has length {v.shape[0]}, expected {gen.n_states}")
    if method not in ("rk4", "uniformization"):
        raise ParameterError(f"unknown method {method!r}")
    h = resolve_step(gen, step) if method == "rk4" else None
    b = policy.cell_boundaries
    for j in reversed(range(policy.n_cells)):
        mixed = gen.select(policy.choice[j])
        duration = b[j + 1] - b[j]
        if method == "uniformization":
            v = expm_action(mixed.matrix(0), v, duration)
            continue
        rhs = lambda u, _m=mixed: _m.apply_all(u)[0]
        n_sub = max(1, math.ceil(duration / h - 1e-9))
        dt = duration / n_sub
        for _ in range(n_sub):
            v = rk4_step(rhs, v, dt)
    return v


class _PathSampler:
    """Precomputed lookup tables for sampling paths of one (generator, policy) pair."""

    def __init__(self, gen: UncertainGenerator, policy: MarkovPolicy):
        cum = np.cumsum(gen.rates, axis=2)
        d = gen.rates.shape[2]
        self.cum = cum.tolist()
        self.total = cum[:, :, -1].tolist()
        # last slot with positive rate; guards a uniform draw that rounds up to the row total
        self.last = (d - 1 - np.argmax(gen.rates[:, :, ::-1] > 0, axis=2)).tolist()
        self.cols = gen.cols.tolist()
        choice = policy.choice
        K = choice.shape[0]
        # ends[j][k]: first cell after j in which state k uses a different control (or K)
        ends = np.empty(choice.shape, dtype=np.intp)
        ends[K - 1] = K
        for j in range(K - 2, -1, -1):
            ends[j] = np.where(choice[j] == choice[j + 1], ends[j + 1], j + 1)
        self.ends = ends.tolist()
        self.choice = choice.tolist()
        self.bounds = policy.cell_boundaries.tolist()

    def sample(self, eta0: int, rng: np.random.Generator) -> tuple[list[float], list[int]]:
        # A holding time that crosses the end of the current state's constant-control
        # stretch is discarded and redrawn with the new rates; exact by memorylessness.
        # Boundaries where the state's rates do not change are skipped.
        b, choice, ends = self.bounds, self.choice, self.ends
        K = len(b) - 1
        k = int(eta0)
        s = 0.0
        j = 0
        times: list[float] = []
        states = [k]
        while j < K:
            g = choice[j][k]
            stop = ends[j][k]
            R = self.total[g][k]
            if R <= 0.0:
                s, j = b[stop], stop
                continue
            tau = rng.exponential(1.0 / R)
            if s + tau >= b[stop]:
                s, j = b[stop], stop
                continue
            s += tau
            while b[j + 1] <= s:
                j += 1
            slot = bisect.bisect_right(self.cum[g][k], rng.random() * R)
            k = self.cols[k][min(slot, self.last[g][k])]
            times.append(s)
            states.append(k)
        return times, states


def simulate(gen: UncertainGenerator, policy: MarkovPolicy, eta0: int, seed) -> Trajectory:
    """Event-driven sample path of the chain controlled by ``policy``, started at ``eta0``."""
    policy.check_against(gen)
    if not 0 <= int(eta0) < gen.n_states:
        raise ShapeError(f"initial state {eta0} out of range")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    times, states = _PathSampler(gen, policy).sample(eta0, rng)
    return Trajectory(np.array(times, dtype=float), np.array(states, dtype=np.intp), policy.horizon)


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Stream for one Monte Carlo trial; depends only on ``(seed, trial)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(trial),))))


def thread_count(threads: int | None = None) -> int:
    if threads is None:
        threads = int(os.environ.get("UM_THREADS", "0") or 0)
    if threads <= 0:
        threads = os.cpu_count() or 1
    return threads


@dataclass
class Estimate:
    mean: float
    stderr: float
    n: int
    state: int


def estimate_expectation(gen: UncertainGenerator, policy: MarkovPolicy, f, eta0: int, t: float,
                         n_samples: int, seed: int, threads: int | None = None) -> Estimate:
    """Monte Carlo estimate of ``E[f(X_t) | X_0 = eta0]`` under ``policy``.

    Trial ``i`` draws from :func:`trial_rng` ``(seed, i)`` and writes into slot
    ``i``, so the result does not depend on how trials are spread over threads.
    """
    if n_samples < 2:
        raise ParameterError("n_samples must be at least 2")
    policy.check_against(gen, t)
    f = np.asarray(f, dtype=float)
    if f.shape != (gen.n_states,):
        raise ShapeError(f"state function has shape {f.shape}, expected ({gen.n_states},)")
    if not 0 <= int(eta0) < gen.n_states:
        raise ShapeError(f"initial state {eta0} out of range")
    sampler = _PathSampler(gen, policy)
    values = np.empty(n_samples)

    def run(lo: int, hi: int) -> None:
        for i in range(lo, hi):
            _, states = sampler.sample(eta0, trial_rng(seed, i))
            values[i] = f[states[-1]]

    workers = min(thread_count(threads), n_samples)
    bounds = np.linspace(0, n_samples, workers + 1).astype(int)
    if workers == 1:
        run(0, n_samples)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, bounds[:-1], bounds[1:]))
    mean = float(np.sum(values) / n_samples)
    stderr = float(np.std(values, ddof=1) / math.sqrt(n_samples))
    return Estimate(mean, stderr, n_samples, int(eta0))


@dataclass
class BruteForceResult:
    best_value: np.ndarray
    best_policies: list  # per state, a policy attaining best_value there
    best_policy: MarkovPolicy  # largest total value over states
    values: np.ndarray  # (n_policies, N) in enumeration order
    n_policies: int


def brute_force_sup(gen: UncertainGenerator, f, t: float, K_cells: int,
                    restrict_states: Sequence[int] | None = None, default_control: int = 0,
                    budget: int = 10**6) -> BruteForceResult:
    """Best value over all Markov policies on ``K_cells`` equal cells.

    Controls vary only at ``restrict_states`` (all states by default); other
    states use ``default_control``. Values are exact (uniformisation), computed
    from cached per-cell transition matrices.
    """
    f = np.asarray(f, dtype=float)
    N, m = gen.n_states, gen.n_controls
    if f.shape != (N,):
        raise ShapeError(f"state function has shape {f.shape}, expected ({N},)")
    if K_cells < 1:
        raise ParameterError("K_cells must be at least 1")
    free = list(range(N)) if restrict_states is None else sorted({int(k) for k in restrict_states})
    if any(not 0 <= k < N for k in free):
        raise ShapeError("restrict_states contains an invalid state")
    n_free = K_cells * len(free)
    n_pol = m ** n_free
    if n_pol > budget:
        raise SizeError(f"{m}^{n_free} = {n_pol} policies exceed the budget of {budget}")

    bounds = np.linspace(0.0, t, K_cells + 1)
    durations = np.diff(bounds)
    eye = np.eye(N)
    cache: dict = {}

    def propagator(j: int, choice: tuple) -> np.ndarray:
        key = (float(durations[j]), choice)
        if key not in cache:
            cache[key] = expm_action(gen.select(np.array(choice)).matrix(0), eye, durations[j])
        return cache[key]

    def make(i: int) -> MarkovPolicy:
        digits = np.unravel_index(i, (m,) * n_free) if n_free else ()
        choice = np.full((K_cells, N), default_control)
        if n_free:
            choice[:, free] = np.array(digits).reshape(K_cells, len(free))
        return MarkovPolicy(bounds, choice)

    values = np.empty((n_pol, N))
    for i, combo in enumerate(itertools.product(range(m), repeat=n_free)):
        choice = np.full((K_cells, N), default_control)
        if n_free:
            choice[:, free] = np.array(combo).reshape(K_cells, len(free))
        v = f
        for j in reversed(range(K_cells)):
            v = propagator(j, tuple(choice[j])) @ v
        values[i] = v
    best_idx = np.argmax(values, axis=0)
    return BruteForceResult(
        values.max(axis=0),
        [make(int(i)) for i in best_idx],
        make(int(np.argmax(values.sum(axis=1)))),
        values,
        n_pol,
    )

"""Stationary distributions, the envelope sandwich and ergodicity certificates.

Finite CTMCs are classified structurally: the closed communicating classes
of the off-diagonal support graph carry the extreme stationary
distributions, and a chain is ergodic iff there is exactly one such class
(continuous time rules out periodicity).

A nonlinear spin system is certified ergodic when its upper and lower
envelope systems are both attractive and ergodic with the same stationary
distribution. For increasing ``f`` the nonlinear value then sits between the
two linear ones, ``T_lower f <= T f <= T_upper f``, which forces the same
limit.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from .errors import NumericalError, ParameterError, UsageError
from .models import (
    ControlGrid,
    SpeedFunction,
    build_uncertain_generator,
    check_qmatrix,
    envelope_speeds,
    is_attractive,
)
from .semigroup import default_step, resolve_step, transition
from .statespace import SiteGraph, is_increasing, up_set_family

RESIDUAL_TOL = 1e-10
SAME_MU_TOL = 1e-8


def _as_qmatrix(Q) -> sp.csr_matrix:
    if isinstance(Q, SpeedFunction):
        if not Q.is_linear:
            raise UsageError("a speed function with several controls has no single Q-matrix")
        return build_uncertain_generator(Q).matrix(0)
    Q = sp.csr_matrix(Q, dtype=float)
    check_qmatrix(Q, single_flip=False, tol=1e-9)
    return Q


def closed_classes(Q) -> list[np.ndarray]:
    """Closed communicating classes, each as a sorted index array, ordered by smallest member."""
    Q = _as_qmatrix(Q)
    off = Q.tocoo()
    keep = (off.row != off.col) & (off.data > 0)
    rows, cols = off.row[keep], off.col[keep]
    N = Q.shape[0]
    adj = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(N, N))
    n_comp, labels = connected_components(adj, directed=True, connection="strong")
    leaky = set(labels[rows[labels[rows] != labels[cols]]].tolist())
    classes = [np.flatnonzero(labels == c) for c in range(n_comp) if c not in leaky]
    return sorted(classes, key=lambda members: members[0])


def stationary_distributions(Q) -> list[np.ndarray]:
    """One extreme stationary distribution per closed class.

    Each is supported on its class and solves ``mu^T Q = 0, sum(mu) = 1``
    through a bordered linear system (one balance equation replaced by the
    normalisation).
    """
    Q = _as_qmatrix(Q)
    N = Q.shape[0]
    scale = max(1.0, float(np.max(np.abs(Q.data), initial=0.0)))
    result = []
    for members in closed_classes(Q):
        mu = np.zeros(N)
        if len(members) == 1:
            mu[members[0]] = 1.0
            result.append(mu)
            continue
        A = Q[members][:, members].T.tolil()
        A[len(members) - 1, :] = np.ones(len(members))
        rhs = np.zeros(len(members))
        rhs[-1] = 1.0
        local = spla.spsolve(A.tocsc(), rhs)
        if not np.all(np.isfinite(local)):
            raise NumericalError("singular stationary system")
        mu[members] = local
        residual = float(np.max(np.abs(Q.T @ mu)))
        if residual > RESIDUAL_TOL * scale or np.min(local) < -1e-12:
            raise NumericalError(f"stationary solve residual {residual:.3e}, min weight {np.min(local):.3e}")
        mu = np.clip(mu, 0.0, None)
        result.append(mu / mu.sum())
    return result


@dataclass
class LinearErgodicity:
    ergodic: bool
    mu: np.ndarray | None


def is_ergodic_linear(Q) -> LinearErgodicity:
    dists = stationary_distributions(Q)
    if len(dists) == 1:
        return LinearErgodicity(True, dists[0])
    return LinearErgodicity(False, None)


def total_variation(mu, nu) -> float:
    return 0.5 * float(np.sum(np.abs(np.asarray(mu) - np.asarray(nu))))


class VerdictStatus(str, enum.Enum):
    CERTIFIED = "certified_ergodic"
    NOT_CERTIFIED = "not_certified"
    FAILED_PRECONDITION = "failed_precondition"


@dataclass
class ErgodicityVerdict:
    status: VerdictStatus
    mu: np.ndarray | None
    diagnostics: dict = field(default_factory=dict)
    tv_distance: float | None = None

    @property
    def certified(self) -> bool:
        return self.status is VerdictStatus.CERTIFIED

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "mu": None if self.mu is None else [float(w) for w in self.mu],
            "diagnostics": dict(self.diagnostics),
            "tv_distance": self.tv_distance,
        }


def certify_nonlinear_ergodicity(c: SpeedFunction) -> ErgodicityVerdict:
    """Sufficient test: both envelope systems attractive and ergodic with the same distribution."""
    upper, lower = envelope_speeds(c)
    diag = {
        "upper_attractive": is_attractive(upper),
        "lower_attractive": is_attractive(lower),
    }
    up = is_ergodic_linear(upper)
    lo = is_ergodic_linear(lower)
    diag["upper_ergodic"] = up.ergodic
    diag["lower_ergodic"] = lo.ergodic
    tv = total_variation(up.mu, lo.mu) if up.ergodic and lo.ergodic else None
    diag["same_mu"] = tv is not None and tv <= SAME_MU_TOL
    if all(diag.values()):
        return ErgodicityVerdict(VerdictStatus.CERTIFIED, up.mu, diag, tv)
    return ErgodicityVerdict(VerdictStatus.NOT_CERTIFIED, None, diag, tv)


def contact_criterion(graph: SiteGraph, grid) -> bool:
    """``max lambda < 1 / max degree``; true on graphs without edges (no infection channel)."""
    if graph.n_sites == 0:
        raise UsageError("contact criterion needs at least one site")
    values = grid.values if isinstance(grid, ControlGrid) else tuple(grid)
    if not values:
        raise ParameterError("need at least one lambda value")
    lam = np.asarray(values, dtype=float)
    if np.any(~(lam > 0)):
        raise ParameterError("lambda values must be positive")
    deg = graph.max_degree()
    if deg == 0:
        return True
    return bool(lam.max() < 1.0 / deg)


def _envelope_step(gens, step):
    if step is None:
        return min(default_step(g) for g in gens)
    return min(resolve_step(g, step) for g in gens)


@dataclass
class SandwichReport:
    status: VerdictStatus | None
    lower: np.ndarray | None
    value: np.ndarray | None
    upper: np.ndarray | None
    max_violation: float
    passed: bool
    diagnostics: dict = field(default_factory=dict)


def sandwich_check(c: SpeedFunction, f, t: float, step: float | None = None,
                   tol: float = 1e-8) -> SandwichReport:
    """Check ``T_lower f - tol <= T f <= T_upper f + tol`` pointwise.

    ``f`` may be a single increasing state function or a matrix whose columns
    are increasing state functions.
    """
    f = np.asarray(f, dtype=float)
    columns = f.reshape(f.shape[0], -1)
    if not all(is_increasing(columns[:, i]) for i in range(columns.shape[1])):
        raise UsageError("sandwich check is for increasing state functions only")
    upper, lower = envelope_speeds(c)
    diag = {"upper_attractive": is_attractive(upper), "lower_attractive": is_attractive(lower)}
    if not all(diag.values()):
        return SandwichReport(VerdictStatus.FAILED_PRECONDITION, None, None, None, float("nan"), False, diag)
    gens = [build_uncertain_generator(s) for s in (lower, c, upper)]
    h = _envelope_step(gens, step)
    lo, mid, hi = (transition(g, f, t, h) for g in gens)
    violation = float(max(np.max(lo - mid), np.max(mid - hi)))
    return SandwichReport(None, lo, mid, hi, violation, violation <= tol, diag)


@dataclass
class InvarianceReport:
    gaps: np.ndarray  # one per up-set indicator, indexed by its base configuration
    max_gap: float
    passed: bool


def invariance_check(c: SpeedFunction, mu, t: float, step: float | None = None,
                     tol: float = 1e-6) -> InvarianceReport:
    """``|sum mu T_t f - sum mu f|`` over every up-set indicator ``f``."""
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (c.n_states,):
        raise ParameterError(f"distribution must have length {c.n_states}")
    if np.any(mu < -1e-12) or abs(mu.sum() - 1.0) > 1e-10:
        raise ParameterError("mu is not a probability vector")
    gen = build_uncertain_generator(c)
    F = up_set_family(c.n_sites)
    TF = transition(gen, F, t, step)
    gaps = np.abs(mu @ TF - mu @ F)
    gap = float(gaps.max())
    return InvarianceReport(gaps, gap, gap <= tol)


@dataclass
class ProbeReport:
    horizons: np.ndarray
    gaps: np.ndarray
    limit: float  # sum_k mu(k) f(k)
    mu: np.ndarray


def convergence_probe(c: SpeedFunction, f, horizons: Sequence[float], step: float | None = None,
                      verdict: ErgodicityVerdict | None = None) -> ProbeReport:
    """``max_eta |T_t f(eta) - sum mu f|`` at each horizon.

    Horizons are visited in increasing order, each reached from the previous
    one, so a single integration covers all of them.
    """
    verdict = verdict or certify_nonlinear_ergodicity(c)
    if not verdict.certified:
        raise UsageError("convergence probe needs a certified ergodic model")
    f = np.asarray(f, dtype=float)
    if not is_increasing(f):
        raise UsageError("convergence probe is for increasing state functions")
    order = np.argsort(horizons, kind="stable")
    hs = np.asarray(horizons, dtype=float)
    if np.any(hs < 0):
        raise ParameterError("horizons must be nonnegative")
    gen = build_uncertain_generator(c)
    limit = float(verdict.mu @ f)
    gaps = np.empty(len(hs))
    v, now = f, 0.0
    for i in order:
        v = transition(gen, v, hs[i] - now, step)
        now = hs[i]
        gaps[i] = np.max(np.abs(v - limit))
    return ProbeReport(hs, gaps, limit, verdict.mu)

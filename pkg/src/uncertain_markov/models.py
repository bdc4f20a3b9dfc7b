"""Controlled speed functions, Q-matrix families and envelope speed functions.

A spin system flips site ``x`` of configuration ``eta`` at rate
``c(g, x, eta)``, where ``g`` is drawn from a finite control grid. For each
grid point the rates assemble into a Q-matrix whose only off-diagonal
entries sit at single flips; the list of these matrices is the uncertain
generator.

Attractiveness uses the usual orientation: a site's 0->1 rate must not
decrease and its 1->0 rate must not increase when the rest of the
configuration grows. The ordering is sometimes printed the other way
round, but under that reading the contact process would fail to be
attractive, so only the usual orientation is supported.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ParameterError, ShapeError, UsageError
from .statespace import SiteGraph, bit_table, sites_from_length

ROW_SUM_TOL = 1e-12


@dataclass(frozen=True)
class ControlGrid:
    """Finite discretisation of the control set.

    ``values`` carries the model parameter attached to each label (``lambda``
    for contact, ``beta`` for Ising); tabular models may leave it empty.
    """

    labels: tuple[str, ...]
    values: tuple[float, ...] = ()
    parameter: str = ""

    def __post_init__(self):
        labels = tuple(str(s) for s in self.labels)
        if not labels:
            raise ParameterError("control grid must not be empty")
        if len(set(labels)) != len(labels):
            raise ParameterError(f"control labels must be unique, got {labels}")
        values = tuple(float(v) for v in self.values)
        if values and len(values) != len(labels):
            raise ShapeError(f"{len(labels)} labels but {len(values)} parameter values")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.labels)

    @classmethod
    def from_values(cls, values: Sequence[float], parameter: str = "", prefix: str = "g"):
        values = tuple(float(v) for v in values)
        return cls(tuple(f"{prefix}{i}" for i in range(len(values))), values, parameter)

    @classmethod
    def singleton(cls, label: str = "g0") -> "ControlGrid":
        return cls((label,))

    def index(self, label: str) -> int:
        try:
            return self.labels.index(str(label))
        except ValueError:
            raise ParameterError(f"unknown control label {label!r}") from None


@dataclass(frozen=True, eq=False)
class SpeedFunction:
    """Flip rates stored densely as ``rates[g, x, eta]``."""

    rates: np.ndarray
    grid: ControlGrid
    graph: SiteGraph | None = None

    def __post_init__(self):
        rates = np.array(self.rates, dtype=float)
        if rates.ndim != 3:
            raise ShapeError(f"rate table must have shape (controls, sites, states), got {rates.shape}")
        m, n, N = rates.shape
        if sites_from_length(N) != n:
            raise ShapeError(f"rate table has {n} sites but {N} states")
        if m != len(self.grid):
            raise ShapeError(f"rate table has {m} controls, grid has {len(self.grid)}")
        if self.graph is not None and self.graph.n_sites != n:
            raise ShapeError(f"graph has {self.graph.n_sites} sites, rate table has {n}")
        if not np.all(np.isfinite(rates)):
            raise ParameterError("rates must be finite")
        if np.any(rates < 0):
            raise ParameterError("rates must be nonnegative")
        rates.setflags(write=False)
        object.__setattr__(self, "rates", rates)

    @property
    def n_controls(self) -> int:
        return self.rates.shape[0]

    @property
    def n_sites(self) -> int:
        return self.rates.shape[1]

    @property
    def n_states(self) -> int:
        return self.rates.shape[2]

    @property
    def is_linear(self) -> bool:
        return self.n_controls == 1

    def rate(self, g: int, x: int, eta: int) -> float:
        return float(self.rates[g, x, eta])


def _check_positive(grid: ControlGrid, name: str) -> np.ndarray:
    if len(grid.values) != len(grid):
        raise ParameterError(f"every control needs a {name} value")
    values = np.asarray(grid.values, dtype=float)
    if np.any(~(values > 0)) or not np.all(np.isfinite(values)):
        raise ParameterError(f"{name} values must be positive and finite, got {grid.values}")
    return values


def _adjacency(graph: SiteGraph) -> np.ndarray:
    A = np.zeros((graph.n_sites, graph.n_sites))
    for i, j in graph.edges:
        A[i, j] = A[j, i] = 1.0
    return A


def contact_speed(graph: SiteGraph, grid: ControlGrid) -> SpeedFunction:
    """Contact process: recover at rate 1, get infected at ``lambda(g)`` per infected neighbour."""
    lam = _check_positive(grid, "lambda")
    bits = bit_table(graph.n_sites).T.astype(float)  # (n, N)
    infected_nbrs = _adjacency(graph) @ bits
    infection = lam[:, None, None] * infected_nbrs[None]
    rates = np.where(bits[None] == 1, 1.0, infection)
    return SpeedFunction(rates, grid, graph)


def ising_speed(graph: SiteGraph, grid: ControlGrid) -> SpeedFunction:
    """Glauber-type Ising rates ``exp(-beta(g) * sum_{y~x} s(x) s(y))`` with spins ``s = 2*eta - 1``."""
    beta = _check_positive(grid, "beta")
    spins = 2.0 * bit_table(graph.n_sites).T - 1.0  # (n, N)
    local_field = spins * (_adjacency(graph) @ spins)
    rates = np.exp(-beta[:, None, None] * local_field[None])
    return SpeedFunction(rates, grid, graph)


def tabular_speed(table, grid: ControlGrid | None = None, graph: SiteGraph | None = None) -> SpeedFunction:
    """Wrap an explicit ``table[g][x][eta]`` of rates."""
    try:
        rates = np.array(table, dtype=float)
    except ValueError as exc:
        raise ShapeError(f"rate table is ragged or incomplete: {exc}") from None
    if rates.ndim != 3:
        raise ShapeError(f"rate table must be nested [control][site][state], got ndim={rates.ndim}")
    if grid is None:
        grid = ControlGrid(tuple(f"g{i}" for i in range(rates.shape[0])))
    return SpeedFunction(rates, grid, graph)


@dataclass(frozen=True, eq=False)
class UncertainGenerator:
    """A finite family of Q-matrices on a common state space.

    Off-diagonal entries are stored row-wise in padded form: ``cols[k, j]``
    is the ``j``-th potential target of state ``k`` and ``rates[g, k, j]``
    its rate under control ``g``. Padding slots point back at ``k`` with
    rate 0. Diagonals are implicit (minus the row total), which keeps
    ``Q v`` exactly zero on constant ``v``.
    """

    cols: np.ndarray
    rates: np.ndarray
    labels: tuple[str, ...]
    n_sites: int | None = None
    speed: SpeedFunction | None = None
    _matrices: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        cols = np.asarray(self.cols, dtype=np.intp)
        rates = np.asarray(self.rates, dtype=float)
        if rates.ndim != 3 or cols.shape != rates.shape[1:]:
            raise ShapeError(f"cols {cols.shape} and rates {rates.shape} disagree")
        if len(self.labels) != rates.shape[0]:
            raise ShapeError("one label per family member is required")
        if np.any(rates < 0) or not np.all(np.isfinite(rates)):
            raise ParameterError("off-diagonal rates must be finite and nonnegative")
        cols.setflags(write=False)
        rates.setflags(write=False)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "rates", rates)

    @property
    def n_controls(self) -> int:
        return self.rates.shape[0]

    @property
    def n_states(self) -> int:
        return self.rates.shape[1]

    def __len__(self):
        return self.n_controls

    def total_rates(self) -> np.ndarray:
        """``-q(k, k)`` per control and state, shape ``(m, N)``."""
        return self.rates.sum(axis=2)

    def max_total_rate(self) -> float:
        return float(self.total_rates().max(initial=0.0))

    def apply_all(self, v: np.ndarray) -> np.ndarray:
        """``Q(g) v`` for every control, shape ``(m, N)`` or ``(m, N, B)`` for batched ``v``."""
        v = np.asarray(v, dtype=float)
        if v.shape[0] != self.n_states:
            raise ShapeError(f"state function has length {v.shape[0]}, expected {self.n_states}")
        if v.ndim == 1:
            diff = v[self.cols] - v[:, None]
            return np.sum(self.rates * diff[None], axis=2)
        diff = v[self.cols] - v[:, None, :]
        return np.sum(self.rates[..., None] * diff[None], axis=2)

    def apply(self, g: int, v: np.ndarray) -> np.ndarray:
        self._check_control(g)
        v = np.asarray(v, dtype=float)
        if v.shape != (self.n_states,):
            raise ShapeError(f"state function has shape {v.shape}, expected ({self.n_states},)")
        return np.sum(self.rates[int(g)] * (v[self.cols] - v[:, None]), axis=1)

    def select(self, choice: np.ndarray) -> "UncertainGenerator":
        """Linear generator whose row ``k`` is row ``k`` of ``Q(choice[k])``."""
        choice = np.asarray(choice, dtype=np.intp)
        if choice.shape != (self.n_states,):
            raise ShapeError(f"choice must have shape ({self.n_states},)")
        if np.any((choice < 0) | (choice >= self.n_controls)):
            raise ParameterError("choice contains an invalid control index")
        mixed = self.rates[choice, np.arange(self.n_states)][None]
        return UncertainGenerator(self.cols, mixed, ("policy",), self.n_sites)

    def _check_control(self, g: int) -> None:
        if not 0 <= int(g) < self.n_controls:
            raise ParameterError(f"control index {g} out of range for {self.n_controls} controls")

    def matrix(self, g: int) -> sp.csr_matrix:
        """Q-matrix of control ``g`` as a sparse matrix."""
        self._check_control(g)
        g = int(g)
        if g not in self._matrices:
            N, d = self.cols.shape
            rows = np.repeat(np.arange(N), d)
            cols = self.cols.ravel()
            keep = rows != cols
            off = sp.coo_matrix((self.rates[g].ravel()[keep], (rows[keep], cols[keep])), shape=(N, N)).tocsr()
            Q = off - sp.diags(np.asarray(off.sum(axis=1)).ravel())
            self._matrices[g] = Q.tocsr()
        return self._matrices[g]

    def dense(self, g: int) -> np.ndarray:
        return self.matrix(g).toarray()

    @classmethod
    def from_matrices(cls, matrices: Sequence, labels: Sequence[str] | None = None) -> "UncertainGenerator":
        """Family of arbitrary Q-matrices (a chain with uncertain Q-matrix)."""
        mats = [np.asarray(sp.csr_matrix(Q).toarray(), dtype=float) for Q in matrices]
        if not mats:
            raise ParameterError("need at least one Q-matrix")
        N = mats[0].shape[0]
        for Q in mats:
            check_qmatrix(Q, single_flip=False)
            if Q.shape != (N, N):
                raise ShapeError("all Q-matrices must share one dimension")
        support = np.zeros((N, N), dtype=bool)
        for Q in mats:
            support |= Q != 0
        np.fill_diagonal(support, False)
        d = max(1, int(support.sum(axis=1).max()))
        cols = np.tile(np.arange(N)[:, None], (1, d))
        rates = np.zeros((len(mats), N, d))
        for k in range(N):
            targets = np.flatnonzero(support[k])
            cols[k, :len(targets)] = targets
            for g, Q in enumerate(mats):
                rates[g, k, :len(targets)] = Q[k, targets]
        if labels is None:
            labels = tuple(f"g{i}" for i in range(len(mats)))
        return cls(cols, rates, tuple(labels))


def check_qmatrix(Q, single_flip: bool = True, tol: float = ROW_SUM_TOL) -> None:
    """Raise ``ParameterError`` unless ``Q`` is a Q-matrix (optionally with spin-system sparsity)."""
    A = Q.toarray() if sp.issparse(Q) else np.asarray(Q, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ShapeError(f"Q-matrix must be square, got {A.shape}")
    off = A - np.diag(np.diag(A))
    if np.any(off < 0):
        raise ParameterError("negative off-diagonal entry")
    if np.max(np.abs(A.sum(axis=1)), initial=0.0) > tol:
        raise ParameterError("row sums are not zero")
    if single_flip:
        N = A.shape[0]
        idx = np.arange(N)
        diff = idx[:, None] ^ idx[None, :]
        one_flip = (diff != 0) & ((diff & (diff - 1)) == 0)
        if np.any((off != 0) & ~one_flip):
            raise ParameterError("nonzero rate between configurations that differ in more than one site")


def build_uncertain_generator(c: SpeedFunction) -> UncertainGenerator:
    N, n = c.n_states, c.n_sites
    cols = np.arange(N)[:, None] ^ (1 << np.arange(n))[None, :]
    rates = np.ascontiguousarray(np.transpose(c.rates, (0, 2, 1)))  # (m, N, n)
    return UncertainGenerator(cols, rates, c.grid.labels, n, c)


def qmatrix_from_speed(c: SpeedFunction, g: int) -> sp.csr_matrix:
    if not 0 <= int(g) < c.n_controls:
        raise ParameterError(f"control index {g} out of range for {c.n_controls} controls")
    sub = SpeedFunction(c.rates[int(g):int(g) + 1], ControlGrid((c.grid.labels[int(g)],)), c.graph)
    return build_uncertain_generator(sub).matrix(0)


def envelope_speeds(c: SpeedFunction) -> tuple[SpeedFunction, SpeedFunction]:
    """Upper and lower envelope speed functions.

    The upper one takes the largest 0->1 rate and the smallest 1->0 rate
    over the grid; the lower one does the opposite. Both are control-free.
    """
    occupied = bit_table(c.n_sites).T.astype(bool)  # (n, N)
    hi = c.rates.max(axis=0)
    lo = c.rates.min(axis=0)
    upper = np.where(occupied, lo, hi)
    lower = np.where(occupied, hi, lo)
    return (
        SpeedFunction(upper[None], ControlGrid(("upper",)), c.graph),
        SpeedFunction(lower[None], ControlGrid(("lower",)), c.graph),
    )


def is_attractive(c: SpeedFunction, exhaustive: bool = False) -> bool:
    """Attractiveness of a linear (single-control) spin system.

    For ``xi <= eta`` agreeing at ``x``: ``c(x, xi) <= c(x, eta)`` when both are
    0 there, ``c(x, xi) >= c(x, eta)`` when both are 1. The default scan only
    visits covering pairs; ``exhaustive=True`` checks every comparable pair.
    """
    if not c.is_linear:
        raise UsageError("attractiveness is defined for single-control speed functions")
    r = c.rates[0]  # (n, N)
    n, N = r.shape
    idx = np.arange(N)
    if exhaustive:
        below = (idx[:, None] & ~idx[None, :]) == 0  # [xi, eta]
        for x in range(n):
            bx = (idx >> x) & 1
            same = bx[:, None] == bx[None, :]
            grows = r[x][:, None] > r[x][None, :]
            shrinks = r[x][:, None] < r[x][None, :]
            zero = (bx == 0)[:, None]
            if np.any(below & same & np.where(zero, grows, shrinks)):
                return False
        return True
    for x in range(n):
        for y in range(n):
            if y == x:
                continue
            low = idx[(idx >> y) & 1 == 0]
            high = low | (1 << y)
            at_zero = ((low >> x) & 1) == 0
            if np.any(at_zero & (r[x, low] > r[x, high])):
                return False
            if np.any(~at_zero & (r[x, low] < r[x, high])):
                return False
    return True


_PARAMETER_KEY = {"contact": "lambda", "ising": "beta"}


def speed_from_dict(desc: dict) -> SpeedFunction:
    """Build a speed function from a model description.

    Keys: ``sites`` (int), ``edges`` (list of ``[i, j]``), ``model`` (``"contact"``,
    ``"ising"`` or ``"tabular"``), ``controls`` (list of ``{"label": ..., "lambda"
    | "beta": ...}``) and, for tabular models, ``rates[g][x][state_index]``.
    """
    if not isinstance(desc, dict):
        raise ParameterError("model description must be a JSON object")
    missing = [k for k in ("sites", "model", "controls") if k not in desc]
    if missing:
        raise ParameterError(f"model description lacks {', '.join(missing)}")
    sites = desc["sites"]
    if not isinstance(sites, int) or isinstance(sites, bool):
        raise ParameterError("'sites' must be an integer")
    graph = SiteGraph(sites, tuple(tuple(e) for e in desc.get("edges", [])))
    kind = desc["model"]
    controls = desc["controls"]
    if not isinstance(controls, list) or not controls:
        raise ParameterError("'controls' must be a non-empty list")
    labels = []
    for i, entry in enumerate(controls):
        if not isinstance(entry, dict):
            raise ParameterError(f"control #{i} must be an object")
        labels.append(str(entry.get("label", f"g{i}")))
    if kind in _PARAMETER_KEY:
        key = _PARAMETER_KEY[kind]
        try:
            values = tuple(float(entry[key]) for entry in controls)
        except KeyError:
            raise ParameterError(f"every control of a {kind} model needs '{key}'") from None
        grid = ControlGrid(tuple(labels), values, key)
        return contact_speed(graph, grid) if kind == "contact" else ising_speed(graph, grid)
    if kind == "tabular":
        if "rates" not in desc:
            raise ParameterError("tabular model needs 'rates'")
        speed = tabular_speed(desc["rates"], ControlGrid(tuple(labels)), graph)
        return speed
    raise ParameterError(f"unknown model kind {kind!r}")

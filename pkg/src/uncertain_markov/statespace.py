"""Configuration space {0,1}^S for a finite site set.

Configurations are encoded canonically as integers: site ``x`` contributes
bit ``x``, so index ``i`` of a length-``2**n`` state vector is the
configuration whose bits spell ``i``. Every other module passes
configurations around as these indices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import ShapeError, SiteError, SizeError

MAX_SITES = 12

Config = Union[int, Sequence[int]]


@dataclass(frozen=True)
class SiteGraph:
    """Undirected simple graph on sites ``0..n_sites-1``."""

    n_sites: int
    edges: tuple[tuple[int, int], ...] = ()
    _neighbors: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = int(self.n_sites)
        if n < 0 or n > MAX_SITES:
            raise SizeError(f"n_sites must be in [0, {MAX_SITES}], got {n}")
        seen = set()
        for edge in self.edges:
            if len(edge) != 2:
                raise ShapeError(f"edge {edge!r} is not a pair")
            i, j = int(edge[0]), int(edge[1])
            if not (0 <= i < n and 0 <= j < n):
                raise SiteError(f"edge {edge!r} references a site outside [0, {n})")
            if i == j:
                raise ShapeError(f"self-loop at site {i}")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ShapeError(f"duplicate edge {key}")
            seen.add(key)
        edges = tuple(sorted(seen))
        nbrs: list[list[int]] = [[] for _ in range(n)]
        for i, j in edges:
            nbrs[i].append(j)
            nbrs[j].append(i)
        object.__setattr__(self, "n_sites", n)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "_neighbors", tuple(tuple(sorted(a)) for a in nbrs))

    def neighbors(self, x: int) -> tuple[int, ...]:
        _check_site(x, self.n_sites)
        return self._neighbors[x]

    def degree(self, x: int) -> int:
        return len(self.neighbors(x))

    def max_degree(self) -> int:
        return max((len(a) for a in self._neighbors), default=0)

    @classmethod
    def path(cls, n: int) -> "SiteGraph":
        return cls(n, tuple((i, i + 1) for i in range(n - 1)))

    @classmethod
    def cycle(cls, n: int) -> "SiteGraph":
        if n < 3:
            return cls.path(n)
        return cls(n, tuple((i, (i + 1) % n) for i in range(n)))

    @classmethod
    def complete(cls, n: int) -> "SiteGraph":
        return cls(n, tuple((i, j) for i in range(n) for j in range(i + 1, n)))

    @classmethod
    def isolated(cls, n: int) -> "SiteGraph":
        return cls(n, ())


def _check_sites(n_sites: int) -> int:
    n = int(n_sites)
    if not 1 <= n <= MAX_SITES:
        raise SizeError(f"number of sites must be in [1, {MAX_SITES}], got {n_sites}")
    return n


def _check_site(x: int, n_sites: int) -> None:
    if not 0 <= x < n_sites:
        raise SiteError(f"site {x} out of range for {n_sites} sites")


def n_states(n_sites: int) -> int:
    return 1 << _check_sites(n_sites)


def sites_from_length(length: int) -> int:
    """Number of sites for a state vector of the given length."""
    n = int(length).bit_length() - 1
    if length < 2 or (1 << n) != length:
        raise ShapeError(f"state vector length {length} is not 2**n with n >= 1")
    return _check_sites(n)


def encode(bits: Sequence[int]) -> int:
    index = 0
    for x, b in enumerate(bits):
        if b not in (0, 1):
            raise ShapeError(f"bit at site {x} is {b!r}, expected 0 or 1")
        index |= int(b) << x
    return index


def decode(index: int, n_sites: int) -> tuple[int, ...]:
    n = _check_sites(n_sites)
    if not 0 <= index < (1 << n):
        raise ShapeError(f"index {index} out of range for {n} sites")
    return tuple((index >> x) & 1 for x in range(n))


def enumerate_configurations(sites: int) -> list[tuple[int, ...]]:
    """All configurations in canonical order; entry ``i`` encodes to ``i``."""
    n = _check_sites(sites)
    return [decode(i, n) for i in range(1 << n)]


def bit_table(n_sites: int) -> np.ndarray:
    """``(2**n, n)`` array of bits, row ``i`` is the configuration with index ``i``."""
    n = _check_sites(n_sites)
    idx = np.arange(1 << n)
    return ((idx[:, None] >> np.arange(n)[None, :]) & 1).astype(np.int8)


def flip(eta: Config, x: int, n_sites: int | None = None) -> Config:
    """Configuration ``eta`` with the bit at site ``x`` negated.

    Accepts either an index (then ``n_sites`` is required) or a bit sequence;
    the result has the same form as the input.
    """
    if isinstance(eta, (int, np.integer)):
        if n_sites is None:
            raise ShapeError("n_sites is required when eta is an index")
        n = _check_sites(n_sites)
        _check_site(x, n)
        if not 0 <= eta < (1 << n):
            raise ShapeError(f"index {eta} out of range for {n} sites")
        return int(eta) ^ (1 << x)
    bits = tuple(int(b) for b in eta)
    if n_sites is not None and len(bits) != n_sites:
        raise ShapeError(f"configuration has {len(bits)} sites, expected {n_sites}")
    _check_site(x, len(bits))
    return bits[:x] + (1 - bits[x],) + bits[x + 1:]


def leq(xi: Config, eta: Config) -> bool:
    """Coordinatewise order: ``xi(x) <= eta(x)`` at every site."""
    if isinstance(xi, (int, np.integer)) and isinstance(eta, (int, np.integer)):
        return (int(xi) & ~int(eta)) == 0
    if isinstance(xi, (int, np.integer)) or isinstance(eta, (int, np.integer)):
        raise ShapeError("compare two indices or two bit sequences, not a mix")
    if len(xi) != len(eta):
        raise ShapeError(f"site counts differ: {len(xi)} vs {len(eta)}")
    return all(a <= b for a, b in zip(xi, eta))


def is_increasing(f: Iterable[float]) -> bool:
    """True iff ``f(eta) <= f(eta_x)`` for every upward single flip.

    Every covering relation of the Boolean lattice is one upward flip, so
    this is equivalent to ``xi <= eta  =>  f(xi) <= f(eta)``.
    """
    values = np.asarray(f, dtype=float)
    n = sites_from_length(values.shape[0])
    idx = np.arange(values.shape[0])
    for x in range(n):
        low = idx[(idx >> x) & 1 == 0]
        if np.any(values[low] > values[low | (1 << x)]):
            return False
    return True


def is_increasing_exhaustive(f: Iterable[float]) -> bool:
    """Pairwise definition over all comparable pairs; O(N^2), used as a cross-check."""
    values = np.asarray(f, dtype=float)
    N = values.shape[0]
    sites_from_length(N)
    idx = np.arange(N)
    comparable = (idx[:, None] & ~idx[None, :]) == 0  # [xi, eta]: xi <= eta
    return not np.any(comparable & (values[:, None] > values[None, :]))


def site_sum(n_sites: int) -> np.ndarray:
    """The state function eta -> number of sites with value 1."""
    return bit_table(n_sites).sum(axis=1).astype(float)


def up_set_indicator(eta0: int, n_sites: int) -> np.ndarray:
    """Indicator of ``{eta : eta >= eta0}``."""
    n = _check_sites(n_sites)
    if not 0 <= eta0 < (1 << n):
        raise ShapeError(f"index {eta0} out of range for {n} sites")
    idx = np.arange(1 << n)
    return ((idx & eta0) == eta0).astype(float)


def up_set_family(n_sites: int) -> np.ndarray:
    """All up-set indicators stacked as columns, shape ``(N, N)``; column ``j`` is for ``eta0 = j``."""
    n = _check_sites(n_sites)
    idx = np.arange(1 << n)
    return ((idx[:, None] & idx[None, :]) == idx[None, :]).astype(float)

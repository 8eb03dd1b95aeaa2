"""Star-switch combinatorics: request-type indexing, link states and matchings.

A switch with ``N`` clients serves bipartite requests, one request type per
unordered client pair.  Request types are indexed lexicographically over
pairs ``(i, j)`` with ``i < j``.  A service vector is a matching: every client
takes part in at most one served request per slot.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

#: Largest client count for which matchings are enumerated exhaustively.
MAX_ENUMERATION_CLIENTS = 12


class InvalidTopologyError(ValueError):
    pass


@dataclass(frozen=True)
class SwitchTopology:
    n_clients: int
    pairs: tuple[tuple[int, int], ...] = field(repr=False)
    index: dict[tuple[int, int], int] = field(repr=False, compare=False)
    incidence: np.ndarray = field(repr=False, compare=False)

    @property
    def n_request_types(self) -> int:
        return len(self.pairs)

    @property
    def d(self) -> int:
        return len(self.pairs)

    def pair_of(self, e: int) -> tuple[int, int]:
        return self.pairs[e]

    def index_of(self, i: int, j: int) -> int:
        if i > j:
            i, j = j, i
        return self.index[(i, j)]

    @property
    def endpoints(self) -> tuple[np.ndarray, np.ndarray]:
        """Arrays ``(first, second)`` of client indices for every request type."""
        return _endpoints(self.n_clients)

    def __hash__(self) -> int:
        return hash(self.n_clients)


def build_topology(n_clients: int) -> SwitchTopology:
    n = int(n_clients)
    if n != n_clients or n < 2:
        raise InvalidTopologyError(f"a switch needs at least 2 clients, got {n_clients!r}")
    pairs = tuple(itertools.combinations(range(n), 2))
    A = np.zeros((n, len(pairs)), dtype=np.int64)
    for e, (i, j) in enumerate(pairs):
        A[i, e] = 1
        A[j, e] = 1
    A.setflags(write=False)
    return SwitchTopology(n, pairs, {p: e for e, p in enumerate(pairs)}, A)


@lru_cache(maxsize=None)
def _endpoints(n: int) -> tuple[np.ndarray, np.ndarray]:
    pairs = list(itertools.combinations(range(n), 2))
    first = np.array([p[0] for p in pairs], dtype=np.int64)
    second = np.array([p[1] for p in pairs], dtype=np.int64)
    first.setflags(write=False)
    second.setflags(write=False)
    return first, second


def state_mask(state) -> int:
    """Encode a 0/1 link-state vector as an integer (client ``j`` is bit ``j``)."""
    mask = 0
    for j, s in enumerate(state):
        if s:
            mask |= 1 << j
    return mask


def mask_to_state(mask: int, n: int) -> np.ndarray:
    return np.array([(mask >> j) & 1 for j in range(n)], dtype=np.int64)


def all_states(n: int) -> np.ndarray:
    """All ``2**n`` link states as rows, row ``m`` being the state with mask ``m``."""
    m = np.arange(2**n)
    return ((m[:, None] >> np.arange(n)[None, :]) & 1).astype(np.int64)


def _matchings_on(active: tuple[int, ...], index: dict) -> list[tuple[int, ...]]:
    # Branch on the lowest active client: leave it unmatched or pair it.
    if len(active) < 2:
        return [()]
    v, rest = active[0], active[1:]
    out = list(_matchings_on(rest, index))
    for t, u in enumerate(rest):
        e = index[(v, u)]
        for m in _matchings_on(rest[:t] + rest[t + 1:], index):
            out.append((e,) + m)
    return out


@lru_cache(maxsize=None)
def _matching_table(n: int, mask: int) -> np.ndarray:
    if n > MAX_ENUMERATION_CLIENTS:
        raise InvalidTopologyError(
            f"exhaustive matching enumeration supports at most {MAX_ENUMERATION_CLIENTS} clients"
        )
    topo = build_topology(n)
    active = tuple(j for j in range(n) if (mask >> j) & 1)
    rows = []
    for m in _matchings_on(active, topo.index):
        y = np.zeros(topo.d, dtype=np.int64)
        y[list(m)] = 1
        rows.append(tuple(y))
    rows.sort()
    table = np.array(rows, dtype=np.int64).reshape(len(rows), topo.d)
    table.setflags(write=False)
    return table


def matching_table(topology: SwitchTopology, state) -> np.ndarray:
    """All matchings available in ``state`` as rows of a 0/1 matrix.

    Rows are sorted lexicographically, so row 0 is always the empty matching.
    The table is cached per (N, state) and must not be modified.
    """
    mask = state if isinstance(state, (int, np.integer)) else state_mask(state)
    return _matching_table(topology.n_clients, int(mask))


def enumerate_matchings(topology: SwitchTopology, state) -> set[tuple[int, ...]]:
    """The action set of a link state, as a set of 0/1 tuples of length ``d``."""
    return {tuple(int(v) for v in row) for row in matching_table(topology, state)}


def _argmax_row(table: np.ndarray, weights: np.ndarray) -> int:
    pos = weights > 0
    if pos.all():
        values = table @ weights
    else:
        # Nonpositive edges get a penalty that drives any matching using one
        # strictly below the empty matching; other values stay exact.
        penalty = float(np.abs(weights).sum()) + 1.0
        values = table @ np.where(pos, weights, -penalty)
    return int(np.argmax(values))


def max_weight_matching(topology: SwitchTopology, state, weights) -> np.ndarray:
    """Maximum-weight matching among the active clients of ``state``.

    Edges with nonpositive weight are never served.  Ties are broken in favour
    of the lexicographically smallest service vector.
    """
    w = np.asarray(weights, dtype=float)
    if w.shape != (topology.d,):
        raise ValueError(f"expected {topology.d} weights, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite")
    table = matching_table(topology, state)
    return table[_argmax_row(table, w)].copy()


def lle_cost_vector(topology: SwitchTopology, y) -> np.ndarray:
    """LLEs consumed per client by service vector ``y`` (that is, ``A @ y``)."""
    return topology.incidence @ np.asarray(y, dtype=np.int64)


def is_matching(topology: SwitchTopology, y, state=None) -> bool:
    y = np.asarray(y)
    if y.shape != (topology.d,) or not np.isin(y, (0, 1)).all():
        return False
    load = topology.incidence @ y
    if load.max(initial=0) > 1:
        return False
    if state is not None:
        return bool(np.all(load <= np.asarray(state)))
    return True

"""Seeded random streams, arrival processes and load profiles.

Every run derives three independent PCG64 streams from its integer seed with
``numpy.random.SeedSequence(seed).spawn(3)``: link states, request arrivals,
LLE arrivals, in that order.  Draws are taken in blocks of ``CHUNK`` slots,
so a run's output depends only on the seed and the configuration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from .topology import SwitchTopology

CHUNK = 8192
STREAMS = ("links", "requests", "lles")


def make_streams(seed: int) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence(int(seed)).spawn(len(STREAMS))
    return {name: np.random.Generator(np.random.PCG64(ss)) for name, ss in zip(STREAMS, children)}


def _probs(p, size: int, what: str) -> np.ndarray:
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if p.size == 1:
        p = np.full(size, p[0])
    if p.shape != (size,):
        raise ValueError(f"{what} needs {size} probabilities, got {p.size}")
    if np.isnan(p).any() or np.any(p < 0) or np.any(p > 1):
        raise ValueError(f"{what} probabilities must lie in [0, 1]")
    p.setflags(write=False)
    return p


@dataclass(frozen=True)
class ArrivalModel:
    """Independent Bernoulli arrivals per request type (and per client LLE)."""

    p_req: np.ndarray
    p_lle: Optional[np.ndarray] = None

    @classmethod
    def for_topology(cls, topology: SwitchTopology, p_req, p_lle=None) -> "ArrivalModel":
        req = _probs(p_req, topology.d, "request arrival")
        lle = None if p_lle is None else _probs(p_lle, topology.n_clients, "LLE arrival")
        return cls(req, lle)

    @property
    def b(self) -> np.ndarray:
        return self.p_req

    @property
    def b_hat(self) -> Optional[np.ndarray]:
        return self.p_lle


def bernoulli_chunks(p: np.ndarray, rng: np.random.Generator, slots: int,
                     chunk: int = CHUNK) -> Iterator[np.ndarray]:
    """Yield 0/1 int64 blocks of shape (<= chunk, len(p)) covering ``slots`` slots."""
    done = 0
    while done < slots:
        n = min(chunk, slots - done)
        yield (rng.random((n, p.size)) < p).astype(np.int64)
        done += n


def generate_arrivals(model: ArrivalModel, rng, slots: int):
    """Draw ``slots`` slots of arrivals.

    ``rng`` is either a generator (used for requests and, when modelled, LLEs,
    in that order) or a stream dict from :func:`make_streams`.  Returns
    ``(b, b_hat)`` with ``b_hat`` None when the model has no LLE process.
    """
    if isinstance(rng, dict):
        req_rng, lle_rng = rng["requests"], rng["lles"]
    else:
        req_rng = lle_rng = rng
    b = _collect(bernoulli_chunks(model.p_req, req_rng, slots), slots, model.p_req.size)
    bh = None
    if model.p_lle is not None:
        bh = _collect(bernoulli_chunks(model.p_lle, lle_rng, slots), slots, model.p_lle.size)
    return b, bh


def _collect(chunks, slots, width):
    out = np.zeros((slots, width), dtype=np.int64)
    at = 0
    for blk in chunks:
        out[at:at + len(blk)] = blk
        at += len(blk)
    return out


def default_heavy_types(topology: SwitchTopology, count: int = 3) -> tuple[int, ...]:
    """Disjoint pairs (0,1), (2,3), (4,5) ... as far as the client count allows."""
    pairs = [(2 * t, 2 * t + 1) for t in range(count) if 2 * t + 1 < topology.n_clients]
    return tuple(topology.index_of(i, j) for i, j in pairs)


@dataclass(frozen=True)
class LoadProfile:
    kind: str = "uniform"
    total_load: float = 1.0
    skew_factor: float = 16.0
    heavy_types: Optional[Sequence[int]] = field(default=None)

    def __post_init__(self):
        if self.kind not in ("uniform", "skewed"):
            raise ValueError(f"unknown load profile {self.kind!r}")
        if self.total_load < 0:
            raise ValueError("total load must be nonnegative")

    def direction(self, topology: SwitchTopology) -> np.ndarray:
        """Per-type shares summing to one."""
        w = np.ones(topology.d)
        if self.kind == "skewed":
            heavy = self.heavy_types
            if heavy is None:
                heavy = default_heavy_types(topology)
            w[list(heavy)] = self.skew_factor
        return w / w.sum()

    def probabilities(self, topology: SwitchTopology) -> np.ndarray:
        p = self.total_load * self.direction(topology)
        if np.any(p > 1 + 1e-12):
            raise ValueError(
                f"total load {self.total_load} puts a request type above one arrival per slot"
            )
        return np.minimum(p, 1.0)

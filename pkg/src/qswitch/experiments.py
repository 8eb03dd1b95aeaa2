"""Seeded experiment grids for both switch models.

Each grid cell (load or step size, seed) is an independent run.  Cells are
evaluated in sorted order, or farmed out to worker processes, and the
results are always aggregated in that same order, so tables do not depend
on the worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .arrivals import ArrivalModel, LoadProfile
from .capacity import as_link_model, boundary_scaling
from .congestion import CongestionParams, InvalidParametersError, run_congestion, static_congestion_solve
from .decoherent import run_decoherent
from .topology import build_topology

DEFAULT_SEEDS = tuple(range(10))


@dataclass
class RunMetrics:
    """A rectangular table of per-checkpoint or per-cell results."""

    columns: tuple
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.columns = tuple(self.columns)
        for r in self.rows:
            self._check(r)

    def _check(self, row):
        if len(row) != len(self.columns):
            raise ValueError(f"row has {len(row)} fields, table has {len(self.columns)} columns")

    def append(self, row):
        self._check(row)
        self.rows.append(tuple(row))

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    @classmethod
    def from_trace(cls, trace, **meta) -> "RunMetrics":
        m = cls(trace.columns, list(trace.rows()), dict(meta))
        slots = m.column("slot")
        if any(b <= a for a, b in zip(slots, slots[1:])):
            raise ValueError("checkpoints must be strictly increasing")
        return m


def mean_ci(values) -> tuple[float, float, float]:
    """``(mean, stderr, half_width)`` with a 2-standard-error half width."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return math.nan, math.nan, math.nan
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return float(v.mean()), se, 2.0 * se


def trace_slope(slots, values) -> float:
    """Least-squares slope of ``values`` against ``slots``."""
    x = np.asarray(slots, dtype=float)
    y = np.asarray(values, dtype=float)
    if x.size < 2:
        return 0.0
    xc = x - x.mean()
    return float(xc @ (y - y.mean()) / (xc @ xc))


def _frac(x: float, boundary: Optional[float]) -> float:
    return x / boundary if boundary else math.nan


def _map(fn: Callable, cells: Sequence, workers: int) -> list:
    if workers <= 1 or len(cells) <= 1:
        return [fn(c) for c in cells]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, cells))


# -- experiment 1: stability versus load ------------------------------------


@dataclass(frozen=True)
class _DecoherentCell:
    n: int
    tau: object
    profile: LoadProfile
    slots: int
    seed: int
    tail: int


def _run_decoherent_cell(cell: _DecoherentCell):
    topo = build_topology(cell.n)
    p = cell.profile.probabilities(topo)
    tr = run_decoherent(topo, cell.tau, ArrivalModel.for_topology(topo, p), cell.slots, cell.seed,
                        checkpoint=max(cell.slots, 1))
    s = tr.sum_lambda_per_slot
    final = float(s[-1]) if s.size else 0.0
    lo = max(0, s.size - cell.tail)
    slope = trace_slope(np.arange(lo + 1, s.size + 1), s[lo:])
    return final, slope


def profile_boundary(n: int, tau: float, kind: str, skew_factor: float = 16.0,
                     heavy_types=None, tol: float = 1e-6) -> float:
    """Total load at which the profile direction meets the capacity boundary."""
    topo = build_topology(n)
    u = LoadProfile(kind, 1.0, skew_factor, heavy_types).direction(topo)
    return boundary_scaling(topo, as_link_model(tau, n), u, tol=tol)


def experiment1(total_loads: Iterable[float], kind: str = "uniform", slots: int = 50000,
                seeds: Sequence[int] = DEFAULT_SEEDS, n: int = 6, tau: float = 0.8,
                skew_factor: float = 16.0, heavy_types=None, tail: int = 10000,
                workers: int = 1, boundary: Optional[float] = None) -> RunMetrics:
    """Final sum of multipliers per total load, one row per (load, seed) plus a mean row.

    Total load is the expected number of request arrivals per slot.  The
    profile boundary (same units) is stored in ``meta["boundary"]``.  Rows
    with ``seed == -1`` aggregate one load: mean, stderr and a 2-stderr CI.
    """
    loads = sorted(float(x) for x in total_loads)
    if any(x < 0 for x in loads):
        raise ValueError("loads must be nonnegative")
    if boundary is None and loads:
        boundary = profile_boundary(n, tau, kind, skew_factor, heavy_types)
    seeds = sorted(int(s) for s in seeds)
    cells = [_DecoherentCell(n, tau, LoadProfile(kind, x, skew_factor, heavy_types), slots, s, tail)
             for x in loads for s in seeds]
    out = _map(_run_decoherent_cell, cells, workers)
    cols = ("total_load", "load_fraction", "seed", "final_sum_lambda", "tail_slope", "stderr", "ci_low", "ci_high")
    m = RunMetrics(cols, meta=dict(model="decoherent", kind=kind, n=n, tau=tau, slots=slots, seeds=seeds,
                                    boundary=boundary))
    at = 0
    for x in loads:
        block = out[at:at + len(seeds)]
        at += len(seeds)
        for s, (final, slope) in zip(seeds, block):
            m.append((x, _frac(x, boundary), s, final, slope, 0.0, final, final))
        mu, se, hw = mean_ci([f for f, _ in block])
        m.append((x, _frac(x, boundary), -1, mu, float(np.mean([sl for _, sl in block])) if block else math.nan,
                  se, mu - hw, mu + hw))
    return m


# -- experiment 2: congestion control versus step size ----------------------


@dataclass(frozen=True)
class _CongestionCell:
    n: int
    p_req: float
    p_lle: float
    params: CongestionParams
    slots: int
    seed: int
    gap_cost: Optional[str]
    force: bool = False


def _run_congestion_cell(cell: _CongestionCell):
    topo = build_topology(cell.n)
    am = ArrivalModel.for_topology(topo, cell.p_req, cell.p_lle)
    tr = run_congestion(topo, am, cell.params, cell.slots, cell.seed, checkpoint=max(cell.slots, 1),
                        gap_cost=cell.gap_cost, force=cell.force)
    if not tr.checkpoints.size:
        return 0.0, 0.0, 0.0, 0, 0, 0
    return (float(tr.gap[-1]), float(tr.avg_admission_req[-1]), float(tr.avg_admission_lle[-1]),
            tr.max_q, int(tr.max_qhat[-1]), int(tr.underflows[-1]))


def experiment2(alphas: Iterable[float] = (1.0, 0.1, 0.01), p: float = 0.3, slots: int = 100000,
                seeds: Sequence[int] = DEFAULT_SEEDS, n: int = 6, gamma: float = 2.0,
                delta: Optional[float] = None, p_lle: Optional[float] = None,
                memory: Optional[int] = None, service_rule: str = "per-request",
                gap_cost: Optional[str] = None, force: bool = False, workers: int = 1) -> RunMetrics:
    """Final optimality gap and average admission per step size.

    Parameters default to ``delta = 2(gamma + alpha) + alpha`` with the
    minimum memory for each alpha.  Every row carries the static optimum
    (objective and admission) for its alpha; ``seed == -1`` rows aggregate.
    """
    alphas = sorted((float(a) for a in alphas), reverse=True)
    seeds = sorted(int(s) for s in seeds)
    p_lle = p if p_lle is None else p_lle
    topo = build_topology(n)
    params = {}
    for a in alphas:
        base = CongestionParams.theorem_default(a, gamma, service_rule=service_rule)
        params[a] = CongestionParams(a, gamma, base.delta if delta is None else delta,
                                     base.memory_capacity if memory is None else memory, service_rule)
        if not (params[a].theorem_valid or force):
            raise InvalidParametersError(f"alpha={a}: theorem-invalid parameters: "
                                         + "; ".join(params[a].problems()))
    cost = service_rule if gap_cost is None else gap_cost
    optimum = {a: static_congestion_solve(topo, p, p_lle, gamma, params[a].delta, cost) for a in alphas}
    cells = [_CongestionCell(n, p, p_lle, params[a], slots, s, gap_cost, force) for a in alphas for s in seeds]
    out = _map(_run_congestion_cell, cells, workers)
    cols = ("alpha", "delta", "seed", "gap", "avg_admission_req", "avg_admission_lle", "max_q", "max_qhat",
            "underflows", "optimal_objective", "optimal_admission", "gap_stderr", "admission_stderr")
    m = RunMetrics(cols, meta=dict(model="congestion", n=n, p_req=p, p_lle=p_lle, gamma=gamma, slots=slots,
                                    seeds=seeds, service_rule=service_rule, gap_cost=cost))
    at = 0
    for a in alphas:
        block = out[at:at + len(seeds)]
        at += len(seeds)
        opt = optimum[a]
        for s, r in zip(seeds, block):
            m.append((a, params[a].delta, s, *r, opt.objective, opt.admission, 0.0, 0.0))
        gmu, gse, _ = mean_ci([r[0] for r in block])
        amu, ase, _ = mean_ci([r[1] for r in block])
        lmu = float(np.mean([r[2] for r in block])) if block else math.nan
        mq = max((r[3] for r in block), default=0)
        mqh = max((r[4] for r in block), default=0)
        und = sum(r[5] for r in block)
        m.append((a, params[a].delta, -1, gmu, amu, lmu, mq, mqh, und, opt.objective, opt.admission, gse, ase))
    return m


__all__ = ["RunMetrics", "experiment1", "experiment2", "profile_boundary", "trace_slope", "mean_ci",
           "DEFAULT_SEEDS"]

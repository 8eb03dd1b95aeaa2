"""Online max-weight policy for the per-slot decoherence model.

Each slot the switch observes which clients hold an LLE, serves a
maximum-weight matching with the current multipliers as weights, and
updates ``lam <- [lam + alpha * (b_k - y_k)]^+``.  With ``alpha = 1`` the
multipliers are exactly the request queue lengths.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import _kernels
from .arrivals import ArrivalModel, CHUNK, bernoulli_chunks, make_streams
from .capacity import as_link_model
from .topology import SwitchTopology, matching_table, max_weight_matching, state_mask


@dataclass(frozen=True)
class SlotPolicyState:
    lam: np.ndarray
    k: int = 0
    arrived: Optional[np.ndarray] = None
    served: Optional[np.ndarray] = None

    @classmethod
    def initial(cls, topology: SwitchTopology) -> "SlotPolicyState":
        z = np.zeros(topology.d)
        return cls(z, 0, z.copy(), z.copy())


@dataclass(frozen=True)
class SlotObservation:
    state: np.ndarray
    arrivals: np.ndarray


def slot_step(policy: SlotPolicyState, obs: SlotObservation, topology: SwitchTopology,
              alpha: float = 1.0):
    """Serve one slot and return ``(y_k, next_state)``."""
    y = max_weight_matching(topology, obs.state, policy.lam)
    b = np.asarray(obs.arrivals, dtype=float)
    lam = np.maximum(policy.lam + alpha * (b - y), 0.0)
    arrived = (policy.arrived if policy.arrived is not None else 0.0) + b
    served = (policy.served if policy.served is not None else 0.0) + y
    return y, replace(policy, lam=lam, k=policy.k + 1, arrived=arrived, served=served)


def queue_recursion(arrivals: np.ndarray, services: np.ndarray) -> np.ndarray:
    """Plain queue recursion ``Q_{k+1} = [Q_k + b_k - y_k]^+`` from ``Q_0 = 0``.

    Returns the queue after every slot, shape ``(slots, d)``.
    """
    q = np.zeros(arrivals.shape[1], dtype=np.int64)
    out = np.empty(arrivals.shape, dtype=np.int64)
    for k in range(arrivals.shape[0]):
        for e in range(q.size):
            v = q[e] + arrivals[k, e] - services[k, e]
            q[e] = v if v > 0 else 0
        out[k] = q
    return out


@dataclass
class SlotTrace:
    slots: int
    seed: int
    checkpoints: np.ndarray
    sum_lambda: np.ndarray  # at checkpoints
    residual_sq: np.ndarray
    served_total: np.ndarray
    sum_lambda_per_slot: np.ndarray = field(repr=False)
    final_lambda: np.ndarray = field(repr=False)
    states: Optional[np.ndarray] = field(default=None, repr=False)
    arrivals: Optional[np.ndarray] = field(default=None, repr=False)
    services: Optional[np.ndarray] = field(default=None, repr=False)
    lambdas: Optional[np.ndarray] = field(default=None, repr=False)

    columns = ("slot", "sum_lambda", "residual_sq", "served_total")

    def rows(self):
        for r in zip(self.checkpoints, self.sum_lambda, self.residual_sq, self.served_total):
            yield (int(r[0]), float(r[1]), float(r[2]), int(r[3]))


def checkpoint_slots(slots: int, every: int) -> np.ndarray:
    """Slots (1-based) at which metrics are reported; the last slot is always one."""
    if slots <= 0:
        return np.zeros(0, dtype=np.int64)
    every = max(1, int(every))
    pts = np.arange(every, slots + 1, every)
    if pts.size == 0 or pts[-1] != slots:
        pts = np.append(pts, slots)
    return pts.astype(np.int64)


def run_decoherent(topology: SwitchTopology, model, arrival_model: ArrivalModel, slots: int,
                   seed: int, checkpoint: int = 100, alpha: float = 1.0,
                   record: bool = False, engine: str = "auto") -> SlotTrace:
    """Simulate ``slots`` slots of the stochastic dual policy.

    Link states and arrivals are i.i.d. across slots and independent of each
    other.  Arrivals of slot ``k`` enter the update of slot ``k``; the service
    decision uses the multipliers held at the start of the slot.  ``engine``
    selects the compiled loop (``"numba"``) or repeated :func:`slot_step`
    calls (``"python"``); both produce identical traces.
    """
    if slots < 0:
        raise ValueError("slots must be nonnegative")
    model = as_link_model(model, topology.n_clients)
    compiled = _kernels.pick_engine(engine)
    n, d = topology.n_clients, topology.d
    bits = 1 << np.arange(n)
    if compiled:
        offsets, counts, edges, sizes = _kernels.state_tables(topology)
    streams = make_streams(seed)
    link_chunks = bernoulli_chunks(model.tau, streams["links"], slots)
    req_chunks = bernoulli_chunks(arrival_model.p_req, streams["requests"], slots)

    cps = checkpoint_slots(slots, checkpoint)
    sum_lam = np.zeros(slots)
    cum_b_at = np.zeros((cps.size, d))
    cum_y_at = np.zeros((cps.size, d))
    rec = {}
    if record:
        rec = dict(states=np.zeros(slots, dtype=np.int64), arrivals=np.zeros((slots, d), dtype=np.int64),
                   services=np.zeros((slots, d), dtype=np.int64), lambdas=np.zeros((slots, d)))

    lam = np.zeros(d)
    policy = SlotPolicyState.initial(topology)
    cum_b = np.zeros(d)
    cum_y = np.zeros(d)
    k0 = 0
    ci = 0
    for S, B in zip(link_chunks, req_chunks):
        masks = S @ bits
        nb = len(B)
        Y = np.zeros((nb, d), dtype=np.int64)
        lam_blk = np.zeros((nb if record else 1, d))
        if compiled:
            _kernels.decoherent_chunk(masks, B, lam, float(alpha), offsets, counts, edges, sizes,
                                      Y, sum_lam[k0:k0 + nb], lam_blk, record)
        else:
            for t in range(nb):
                y, policy = slot_step(policy, SlotObservation(S[t], B[t]), topology, alpha)
                Y[t] = y
                sum_lam[k0 + t] = policy.lam.sum()
                if record:
                    lam_blk[t] = policy.lam
            lam = policy.lam
        cb = cum_b + np.cumsum(B, axis=0)
        cy = cum_y + np.cumsum(Y, axis=0)
        while ci < cps.size and cps[ci] <= k0 + nb:
            r = cps[ci] - k0 - 1
            cum_b_at[ci] = cb[r]
            cum_y_at[ci] = cy[r]
            ci += 1
        cum_b, cum_y = cb[-1], cy[-1]
        if record:
            rec["states"][k0:k0 + nb] = masks
            rec["arrivals"][k0:k0 + nb] = B
            rec["services"][k0:k0 + nb] = Y
            rec["lambdas"][k0:k0 + nb] = lam_blk
        k0 += nb

    kk = cps[:, None].astype(float) if cps.size else np.ones((0, 1))
    resid = np.maximum(cum_b_at / kk - cum_y_at / kk, 0.0)
    return SlotTrace(
        slots=slots, seed=seed, checkpoints=cps,
        sum_lambda=sum_lam[cps - 1] if cps.size else np.zeros(0),
        residual_sq=(resid**2).sum(axis=1),
        served_total=cum_y_at.sum(axis=1).astype(np.int64),
        sum_lambda_per_slot=sum_lam, final_lambda=np.array(lam), **rec,
    )


def monte_carlo_drift(topology: SwitchTopology, model, arrival_model: ArrivalModel, lam,
                      slots: int, seed: int):
    """Sample ``b_k - y_k`` at frozen multipliers ``lam``.

    Returns ``(mean, standard_error)`` per request type over ``slots`` slots.
    """
    model = as_link_model(model, topology.n_clients)
    lam = np.asarray(lam, dtype=float)
    n = topology.n_clients
    bits = 1 << np.arange(n)
    streams = make_streams(seed)
    # Best response per state is fixed while lam is frozen.
    best = np.array([max_weight_matching(topology, m, lam) for m in range(2**n)], dtype=float)
    total = np.zeros(topology.d)
    total_sq = np.zeros(topology.d)
    for S, B in zip(bernoulli_chunks(model.tau, streams["links"], slots),
                    bernoulli_chunks(arrival_model.p_req, streams["requests"], slots)):
        diff = B - best[S @ bits]
        total += diff.sum(axis=0)
        total_sq += (diff**2).sum(axis=0)
    mean = total / slots
    var = np.maximum(total_sq / slots - mean**2, 0.0) * slots / max(slots - 1, 1)
    return mean, np.sqrt(var / slots)


__all__ = [
    "SlotPolicyState", "SlotObservation", "SlotTrace", "slot_step", "run_decoherent",
    "queue_recursion", "monte_carlo_drift", "checkpoint_slots", "state_mask", "CHUNK",
]

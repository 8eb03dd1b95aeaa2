"""Congestion-controlled switch without decoherence.

Requests (one queue per pair) and LLEs (one queue per client) are both
commodities.  Each slot the controller admits arrivals whose multiplier is
at most ``gamma``, serves a max-weight matching with per-edge weight
``lam_e + lam_hat_i + lam_hat_j - delta`` and takes a dual step of size
``alpha``.  Multipliers are kept as integer queues (``lam = alpha * Q``) so
thresholds are compared exactly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import _kernels, lp
from .arrivals import ArrivalModel, bernoulli_chunks, make_streams
from .decoherent import checkpoint_slots
from .topology import SwitchTopology, matching_table

log = logging.getLogger(__name__)

PER_REQUEST = "per-request"
LITERAL = "literal"
SERVICE_RULES = (PER_REQUEST, LITERAL)


class InvalidParametersError(ValueError):
    pass


class InvariantViolation(AssertionError):
    """An LLE or request queue would underflow under theorem-valid parameters."""


def _units(value: float, alpha: float) -> float:
    """``value / alpha``, snapped to the nearest integer when within rounding."""
    u = value / alpha
    r = round(u)
    return float(r) if abs(u - r) <= 1e-9 * max(1.0, abs(u)) else u


@dataclass(frozen=True)
class CongestionParams:
    alpha: float
    gamma: float
    delta: float
    memory_capacity: int
    service_rule: str = PER_REQUEST

    def __post_init__(self):
        if not (0 < self.alpha <= 1):
            raise InvalidParametersError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.gamma < 0:
            raise InvalidParametersError("gamma must be nonnegative")
        if self.delta <= 0:
            raise InvalidParametersError("delta must be positive")
        if self.memory_capacity < 0:
            raise InvalidParametersError("memory capacity must be nonnegative")
        if self.service_rule not in SERVICE_RULES:
            raise InvalidParametersError(f"unknown service rule {self.service_rule!r}")

    @classmethod
    def theorem_default(cls, alpha: float, gamma: float = 2.0, **kw) -> "CongestionParams":
        """``delta = 2(gamma + alpha) + alpha`` and the minimum memory that goes with it."""
        return cls(alpha, gamma, 2 * (gamma + alpha) + alpha, required_memory(alpha, gamma), **kw)

    @property
    def admit_units(self) -> float:
        return _units(self.gamma, self.alpha)

    @property
    def service_units(self) -> float:
        """Service threshold per request in queue units."""
        per = 3.0 if self.service_rule == LITERAL else 1.0
        return _units(per * self.delta, self.alpha)

    @property
    def delta_window(self) -> tuple[float, float]:
        g, a = self.gamma, self.alpha
        return 2 * (g + a) + a, 3 * (g + a)

    @property
    def theorem_valid(self) -> bool:
        ga = _units(self.gamma, self.alpha)
        du = _units(self.delta, self.alpha)
        in_window = du >= 2 * ga + 3 - 1e-9 and du < 3 * ga + 3 - 1e-9
        return (in_window and self.memory_capacity >= required_memory(self.alpha, self.gamma)
                and self.service_rule == PER_REQUEST)

    def problems(self) -> list[str]:
        out = []
        lo, hi = self.delta_window
        ga = _units(self.gamma, self.alpha)
        du = _units(self.delta, self.alpha)
        if not (du >= 2 * ga + 3 - 1e-9 and du < 3 * ga + 3 - 1e-9):
            out.append(f"delta={self.delta} outside [{lo:g}, {hi:g})")
        need = required_memory(self.alpha, self.gamma)
        if self.memory_capacity < need:
            out.append(f"memory={self.memory_capacity} below required {need}")
        if self.service_rule != PER_REQUEST:
            out.append(f"service rule {self.service_rule!r} is not covered by the guarantee")
        return out


def required_memory(alpha: float, gamma: float) -> int:
    """LLEs per client needed to honour the multiplier cap: ceil(gamma/alpha + 1)."""
    return int(math.ceil(_units(gamma, alpha) + 1 - 1e-9))


@dataclass(frozen=True)
class CongestionState:
    Q: np.ndarray  # request queues, lam = alpha * Q
    Q_hat: np.ndarray  # LLE queues, lam_hat = alpha * Q_hat
    alpha: float
    k: int = 0
    admitted: int = 0
    admitted_lle: int = 0
    served: int = 0
    arrived: int = 0
    arrived_lle: int = 0
    underflows: int = 0
    max_q: int = 0
    max_q_hat: int = 0

    @classmethod
    def initial(cls, topology: SwitchTopology, alpha: float) -> "CongestionState":
        return cls(np.zeros(topology.d, dtype=np.int64), np.zeros(topology.n_clients, dtype=np.int64), alpha)

    @property
    def lam(self) -> np.ndarray:
        return self.alpha * self.Q

    @property
    def lam_hat(self) -> np.ndarray:
        return self.alpha * self.Q_hat


@dataclass(frozen=True)
class CongestionObservation:
    requests: np.ndarray
    lles: np.ndarray


def admit(state: CongestionState, obs: CongestionObservation, params: CongestionParams):
    """Admit every arrival whose multiplier does not exceed ``gamma``."""
    t = params.admit_units + 1e-9
    w = np.where(state.Q <= t, obs.requests, 0).astype(np.int64)
    wh = np.where(state.Q_hat <= t, obs.lles, 0).astype(np.int64)
    return w, wh


def service_weights(state: CongestionState, params: CongestionParams, topology: SwitchTopology) -> np.ndarray:
    """Per-edge service weights in queue units (``omega / alpha``)."""
    i, j = topology.endpoints
    return (state.Q + state.Q_hat[i] + state.Q_hat[j]) - params.service_units


def _serve_row(table: np.ndarray, omega: np.ndarray) -> int:
    pos = omega > 1e-9
    if not pos.any():
        return 0
    w = np.where(pos, omega, -(np.abs(omega).sum() + 1.0))
    return int(np.argmax(table @ w))


def serve(state: CongestionState, params: CongestionParams, topology: SwitchTopology) -> np.ndarray:
    """Max-weight matching over all request types; nonpositive weights are never served."""
    table = matching_table(topology, (1 << topology.n_clients) - 1)
    omega = service_weights(state, params, topology)
    return table[_serve_row(table.astype(float), omega)].copy()


def congestion_step(state: CongestionState, obs: CongestionObservation, params: CongestionParams,
                    topology: SwitchTopology):
    """Admit, serve, then update the multipliers; returns ``(w, w_hat, y, next_state)``."""
    w, wh = admit(state, obs, params)
    y = serve(state, params, topology)
    Ay = topology.incidence @ y
    short = bool(np.any(state.Q < y) or np.any(state.Q_hat < Ay))
    if short and params.theorem_valid:
        raise InvariantViolation(f"queue underflow at slot {state.k + 1} with theorem-valid parameters")
    Q = np.maximum(state.Q + w - y, 0)
    Qh = np.maximum(state.Q_hat + wh - Ay, 0)
    nxt = replace(
        state, Q=Q, Q_hat=Qh, k=state.k + 1,
        admitted=state.admitted + int(w.sum()), admitted_lle=state.admitted_lle + int(wh.sum()),
        served=state.served + int(y.sum()),
        arrived=state.arrived + int(np.sum(obs.requests)), arrived_lle=state.arrived_lle + int(np.sum(obs.lles)),
        underflows=state.underflows + int(short),
        max_q=max(state.max_q, int(Q.max(initial=0))), max_q_hat=max(state.max_q_hat, int(Qh.max(initial=0))),
    )
    return w, wh, y, nxt


# -- static problem ---------------------------------------------------------


@dataclass
class StaticCongestionSolution:
    x: np.ndarray
    theta: np.ndarray = field(repr=False)
    z: np.ndarray = None
    z_hat: np.ndarray = None
    objective: float = 0.0
    service_cost: str = LITERAL

    @property
    def admission(self) -> float:
        """Optimal average request admission per slot."""
        return float(self.z.sum())

    @property
    def admission_lle(self) -> float:
        return float(self.z_hat.sum())


def service_cost_per_request(delta: float, service_cost: str) -> float:
    return (3.0 if service_cost == LITERAL else 1.0) * delta


def static_congestion_solve(topology: SwitchTopology, b, b_hat, gamma: float, delta: float,
                            service_cost: str = LITERAL) -> StaticCongestionSolution:
    """Solve the static admission/service problem over ``x in conv(Y)``.

    Minimises ``c * <1, x> - gamma * <1, [z; z_hat]>`` subject to
    ``0 <= z <= min(b, x)`` and ``0 <= z_hat <= min(b_hat, A x)``.  With the
    literal service cost, ``c = 3 * delta`` (``delta`` charged on the request and
    on both LLEs); with ``"per-request"`` it is ``delta``.
    """
    if service_cost not in SERVICE_RULES:
        raise ValueError(f"unknown service cost {service_cost!r}")
    b = np.asarray(b, dtype=float).ravel()
    bh = np.asarray(b_hat, dtype=float).ravel()
    if b.size == 1 and topology.d != 1:
        b = np.full(topology.d, b[0])
    if bh.size == 1:
        bh = np.full(topology.n_clients, bh[0])
    if b.shape != (topology.d,) or bh.shape != (topology.n_clients,):
        raise ValueError("arrival rates do not match the topology")
    if np.any(b < 0) or np.any(bh < 0):
        raise ValueError("arrival rates must be nonnegative")
    table = matching_table(topology, (1 << topology.n_clients) - 1).astype(float)
    m, d, n = table.shape[0], topology.d, topology.n_clients
    AY = table @ topology.incidence.T  # (m, n) LLE use per matching
    nv = m + d + n
    c = np.zeros(nv)
    c[:m] = service_cost_per_request(delta, service_cost) * table.sum(axis=1)
    c[m:] = -gamma
    G = np.zeros((1 + d + n, nv))
    G[0, :m] = 1.0
    G[1:1 + d, :m] = -table.T
    G[1:1 + d, m:m + d] = np.eye(d)
    G[1 + d:, :m] = -AY.T
    G[1 + d:, m + d:] = np.eye(n)
    g = np.zeros(1 + d + n)
    g[0] = 1.0
    senses = ["=="] + ["<="] * (d + n)
    upper = np.concatenate([np.full(m, np.inf), b, bh])
    sol = lp.lp_solve(lp.LinearProgram(c, G, g, senses, upper=upper))
    if not sol.optimal:
        raise RuntimeError(f"static congestion LP unexpectedly {sol.status}")
    theta = np.clip(sol.x[:m], 0.0, None)
    return StaticCongestionSolution(theta @ table, theta, sol.x[m:m + d], sol.x[m + d:], sol.objective, service_cost)


def fluid_feasible(topology: SwitchTopology, b, b_hat) -> bool:
    """Whether some ``x in conv(Y)`` has ``b <= x`` and ``A x <= b_hat``."""
    b = np.asarray(b, dtype=float).ravel()
    bh = np.asarray(b_hat, dtype=float).ravel()
    table = matching_table(topology, (1 << topology.n_clients) - 1).astype(float)
    m = table.shape[0]
    G = np.vstack([np.ones((1, m)), table.T, (table @ topology.incidence.T).T])
    g = np.concatenate([[1.0], b, bh])
    senses = ["=="] + [">="] * topology.d + ["<="] * topology.n_clients
    return lp.lp_feasible(lp.LinearProgram(np.zeros(m), G, g, senses))


@dataclass
class Lemma1Report:
    verdict: Optional[bool]  # None when the preconditions fail
    reason: str = ""
    solution: Optional[StaticCongestionSolution] = None
    shortfall: float = 0.0  # max_e (b_e - x_e)^+
    excess: float = 0.0  # max_j ((A x)_j - b_hat_j)^+

    @property
    def preconditions_met(self) -> bool:
        return self.verdict is not None


def lemma1_check(topology: SwitchTopology, b, b_hat, gamma: float, delta: float,
                 tol: float = 1e-6, service_cost: str = LITERAL) -> Lemma1Report:
    """Check that the static optimum serves all requests within the LLE budget.

    Requires ``gamma > delta > 0`` and a feasible fluid problem; otherwise the
    report carries no verdict.
    """
    if not gamma > delta > 0:
        return Lemma1Report(None, "preconditions-unmet: need gamma > delta > 0")
    if not fluid_feasible(topology, b, b_hat):
        return Lemma1Report(None, "preconditions-unmet: no x in conv(Y) with b <= x and Ax <= b_hat")
    sol = static_congestion_solve(topology, b, b_hat, gamma, delta, service_cost)
    b = np.broadcast_to(np.asarray(b, dtype=float), (topology.d,))
    bh = np.broadcast_to(np.asarray(b_hat, dtype=float), (topology.n_clients,))
    short = float(np.max(b - sol.x, initial=0.0))
    excess = float(np.max(topology.incidence @ sol.x - bh, initial=0.0))
    ok = short <= tol and excess <= tol
    why = "static optimum solves the fluid problem" if ok else (
        f"static optimum misses the fluid constraints (shortfall {short:.3g}, LLE excess {excess:.3g})")
    return Lemma1Report(ok, why, sol, max(short, 0.0), max(excess, 0.0))


# -- simulation -------------------------------------------------------------


@dataclass
class CongestionTrace:
    slots: int
    seed: int
    params: CongestionParams
    optimum: StaticCongestionSolution
    checkpoints: np.ndarray
    gap: np.ndarray
    avg_admission_req: np.ndarray
    avg_admission_lle: np.ndarray
    window_admission_req: np.ndarray  # admitted requests since the previous checkpoint
    max_qhat: np.ndarray
    underflows: np.ndarray
    avg_service: np.ndarray
    final_state: CongestionState = field(repr=False)
    max_q: int = 0
    served_total: int = 0
    lle_used_total: int = 0
    admission_dominated: bool = True

    columns = ("slot", "gap", "avg_admission_req", "avg_admission_lle", "max_qhat", "underflows",
               "window_admission_req")

    def rows(self):
        for r in zip(self.checkpoints, self.gap, self.avg_admission_req, self.avg_admission_lle,
                     self.max_qhat, self.underflows, self.window_admission_req):
            yield (int(r[0]), float(r[1]), float(r[2]), float(r[3]), int(r[4]), int(r[5]), int(r[6]))

    @property
    def max_multiplier(self) -> float:
        return self.params.alpha * max(self.max_q, int(self.max_qhat[-1]) if self.max_qhat.size else 0)


def objective_on_averages(served: float, admitted: float, admitted_lle: float, k: int,
                          gamma: float, delta: float, service_cost: str) -> float:
    """Static objective evaluated at running averages after ``k`` slots."""
    if k == 0:
        return 0.0
    c = service_cost_per_request(delta, service_cost)
    return (c * served - gamma * (admitted + admitted_lle)) / k


def run_congestion(topology: SwitchTopology, arrivals: ArrivalModel, params: CongestionParams,
                   slots: int, seed: int, checkpoint: int = 100, force: bool = False,
                   optimum: Optional[StaticCongestionSolution] = None,
                   engine: str = "auto", gap_cost: Optional[str] = None) -> CongestionTrace:
    """Simulate the congestion-controlled switch for ``slots`` slots.

    Theorem-invalid parameters are refused unless ``force`` is set; with
    theorem-valid parameters any queue underflow raises
    :class:`InvariantViolation`.  The optimality gap uses the static problem
    whose service cost is ``gap_cost``, by default the one matching
    ``params.service_rule``.
    """
    if slots < 0:
        raise ValueError("slots must be nonnegative")
    if arrivals.p_lle is None:
        raise ValueError("the congestion model needs LLE arrival probabilities")
    valid = params.theorem_valid
    if not valid:
        if not force:
            raise InvalidParametersError("theorem-invalid parameters: " + "; ".join(params.problems()))
        log.warning("running with theorem-invalid parameters: %s", "; ".join(params.problems()))
    gap_cost = params.service_rule if gap_cost is None else gap_cost
    if gap_cost not in SERVICE_RULES:
        raise ValueError(f"unknown service cost {gap_cost!r}")
    if optimum is None:
        optimum = static_congestion_solve(topology, arrivals.p_req, arrivals.p_lle, params.gamma,
                                          params.delta, gap_cost)
    compiled = _kernels.pick_engine(engine)
    n, d = topology.n_clients, topology.d
    if compiled:
        edges, sizes = _kernels.edge_lists(matching_table(topology, (1 << n) - 1))
        first, second = topology.endpoints
    streams = make_streams(seed)
    req_chunks = bernoulli_chunks(arrivals.p_req, streams["requests"], slots)
    lle_chunks = bernoulli_chunks(arrivals.p_lle, streams["lles"], slots)

    cps = checkpoint_slots(slots, checkpoint)
    # per checkpoint: cumulative admitted, admitted LLEs, served, underflows; running max of Q, Q_hat
    at = np.zeros((cps.size, 6), dtype=np.int64)
    Q = np.zeros(d, dtype=np.int64)
    Qh = np.zeros(n, dtype=np.int64)
    state = CongestionState.initial(topology, params.alpha)
    totals = np.zeros(4, dtype=np.int64)
    maxima = np.zeros(2, dtype=np.int64)
    S_b = S_bh = 0
    k0 = 0
    ci = 0
    for B, BH in zip(req_chunks, lle_chunks):
        nb = len(B)
        per = np.zeros((nb, 6), dtype=np.int64)
        if compiled:
            bad = _kernels.congestion_chunk(B, BH, Q, Qh, first, second, edges, sizes,
                                            params.admit_units + 1e-9, params.service_units, valid, per)
            if bad >= 0:
                raise InvariantViolation(f"queue underflow at slot {k0 + bad + 1} with theorem-valid parameters")
        else:
            for t in range(nb):
                under = state.underflows
                w, wh, y, state = congestion_step(state, CongestionObservation(B[t], BH[t]), params, topology)
                per[t] = (w.sum(), wh.sum(), y.sum(), state.underflows - under, state.Q.max(), state.Q_hat.max())
            Q, Qh = state.Q, state.Q_hat
        cum = totals + np.cumsum(per[:, :4], axis=0)
        run_max = np.maximum(maxima, np.maximum.accumulate(per[:, 4:], axis=0))
        while ci < cps.size and cps[ci] <= k0 + nb:
            r = cps[ci] - k0 - 1
            at[ci, :4] = cum[r]
            at[ci, 4:] = run_max[r]
            ci += 1
        totals, maxima = cum[-1], run_max[-1]
        S_b += int(B.sum())
        S_bh += int(BH.sum())
        k0 += nb

    kk = np.maximum(cps, 1).astype(float)
    c = service_cost_per_request(params.delta, gap_cost)
    objective = (c * at[:, 2] - params.gamma * (at[:, 0] + at[:, 1])) / kk
    window = np.diff(np.concatenate([[0], at[:, 0]]))
    final = CongestionState(Q.copy(), Qh.copy(), params.alpha, slots, int(totals[0]), int(totals[1]),
                            int(totals[2]), S_b, S_bh, int(totals[3]), int(maxima[0]), int(maxima[1]))
    return CongestionTrace(
        slots=slots, seed=seed, params=params, optimum=optimum, checkpoints=cps,
        gap=objective - optimum.objective, avg_admission_req=at[:, 0] / kk, avg_admission_lle=at[:, 1] / kk,
        window_admission_req=window, max_qhat=at[:, 5], underflows=at[:, 3], avg_service=at[:, 2] / kk,
        final_state=final, max_q=int(maxima[0]), served_total=int(totals[2]),
        lle_used_total=2 * int(totals[2]),  # every served request consumes two LLEs
        admission_dominated=bool(totals[0] <= S_b and totals[1] <= S_bh),
    )

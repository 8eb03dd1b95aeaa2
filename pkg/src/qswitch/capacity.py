"""Capacity region and dual function when LLEs decohere after one slot.

Link states are product-Bernoulli: client ``j`` holds an LLE in a slot with
probability ``tau[j]``, independently.  A rate vector ``b`` is servable when
each state can randomise over its matchings so that the state-averaged
service dominates ``b``; membership is decided with a linear program over
(state, matching) columns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import lp
from .topology import SwitchTopology, all_states, matching_table, max_weight_matching

#: Largest client count accepted by the membership LP.
MAX_CAPACITY_CLIENTS = 8
#: Margin on the uniform inflation variable separating inside from boundary.
BOUNDARY_TOL = 1e-6

INSIDE = "inside"
BOUNDARY = "boundary"
OUTSIDE = "outside"


@dataclass(frozen=True)
class LinkModel:
    tau: np.ndarray

    def __post_init__(self):
        t = np.atleast_1d(np.asarray(self.tau, dtype=float))
        if t.ndim != 1 or np.any(t < 0) or np.any(t > 1) or np.isnan(t).any():
            raise ValueError(f"LLE success probabilities must lie in [0, 1], got {self.tau!r}")
        t.setflags(write=False)
        object.__setattr__(self, "tau", t)

    @classmethod
    def uniform(cls, n: int, tau: float) -> "LinkModel":
        return cls(np.full(n, float(tau)))

    @property
    def n_clients(self) -> int:
        return self.tau.size


def as_link_model(model, n: int) -> LinkModel:
    if isinstance(model, LinkModel):
        lm = model
    else:
        t = np.atleast_1d(np.asarray(model, dtype=float))
        lm = LinkModel(np.full(n, t[0]) if t.size == 1 else t)
    if lm.n_clients != n:
        raise ValueError(f"link model has {lm.n_clients} clients, topology has {n}")
    return lm


@dataclass(frozen=True)
class LinkStateDistribution:
    states: np.ndarray  # (2**N, N), row m has mask m
    prob: np.ndarray

    def __iter__(self):
        return iter(zip(range(len(self.prob)), self.prob))


def state_distribution(model: LinkModel) -> LinkStateDistribution:
    tau = model.tau
    S = all_states(tau.size)
    p = np.prod(np.where(S == 1, tau[None, :], 1.0 - tau[None, :]), axis=1)
    return LinkStateDistribution(S, p)


@dataclass
class StateMixture:
    """Per-state randomisation ``theta(y, s)`` over the matchings of each state."""

    prob: np.ndarray
    matchings: list  # per state: (n_s, d) 0/1 table
    weights: list  # per state: (n_s,) nonnegative, summing to one

    def rates(self) -> np.ndarray:
        """Per-state average service ``x(s)``, shape (2**N, d)."""
        return np.array([w @ M for M, w in zip(self.matchings, self.weights)])

    def served(self) -> np.ndarray:
        """State-averaged service rate ``sum_s p(s) x(s)``."""
        return self.prob @ self.rates()


@dataclass
class MembershipResult:
    verdict: str
    margin: float  # max t with b + t*1 servable
    certificate: StateMixture | None

    def __str__(self) -> str:
        return self.verdict


def _check_dims(topology: SwitchTopology, b) -> np.ndarray:
    b = np.asarray(b, dtype=float).ravel()
    if b.size == 1 and topology.d != 1:
        b = np.full(topology.d, b[0])
    if b.shape != (topology.d,):
        raise ValueError(f"rate vector must have {topology.d} entries, got {b.size}")
    if np.any(b < 0) or not np.isfinite(b).all():
        raise ValueError("rate vector must be finite and nonnegative")
    return b


def _columns(topology: SwitchTopology, dist: LinkStateDistribution):
    tables = [matching_table(topology, m) for m in range(len(dist.prob))]
    owner = np.concatenate([np.full(len(T), s) for s, T in enumerate(tables)])
    Y = np.vstack(tables).astype(float)
    return tables, owner, Y


def _service_lp(topology, dist, target, free_coef, free_lower):
    """LP over theta plus one scalar ``v``: max v s.t. served >= target + v*free_coef."""
    tables, owner, Y = _columns(topology, dist)
    n_theta = Y.shape[0]
    n_states = len(tables)
    d = topology.d
    G = np.zeros((n_states + d, n_theta + 1))
    G[owner, np.arange(n_theta)] = 1.0
    G[n_states:, :n_theta] = (Y * dist.prob[owner][:, None]).T
    G[n_states:, n_theta] = -free_coef
    g = np.concatenate([np.ones(n_states), target])
    senses = ["=="] * n_states + [">="] * d
    c = np.zeros(n_theta + 1)
    c[-1] = 1.0
    lower = np.zeros(n_theta + 1)
    lower[-1] = free_lower
    prob = lp.LinearProgram(c, G, g, senses, lower=lower, maximize=True)
    return prob, tables, owner


def _mixture(x, tables, owner, prob) -> StateMixture:
    theta = np.clip(x[: owner.size], 0.0, None)
    weights = [theta[owner == s] for s in range(len(tables))]
    return StateMixture(prob, tables, weights)


def _require_size(topology: SwitchTopology):
    if topology.n_clients > MAX_CAPACITY_CLIENTS:
        raise ValueError(
            f"capacity LP supports at most {MAX_CAPACITY_CLIENTS} clients, got {topology.n_clients}"
        )


def capacity_membership(topology: SwitchTopology, model, b) -> MembershipResult:
    """Classify ``b`` as inside, on the boundary of, or outside the capacity region."""
    _require_size(topology)
    model = as_link_model(model, topology.n_clients)
    b = _check_dims(topology, b)
    dist = state_distribution(model)
    prob, tables, owner = _service_lp(topology, dist, b, np.ones(topology.d),
                                      -(float(b.max(initial=0.0)) + 1.0))
    sol = lp.lp_solve(prob)
    if not sol.optimal:
        raise RuntimeError(f"membership LP unexpectedly {sol.status}")
    t = float(sol.x[-1])
    if t < -lp.FEAS_TOL:
        return MembershipResult(OUTSIDE, t, None)
    verdict = INSIDE if t > BOUNDARY_TOL else BOUNDARY
    return MembershipResult(verdict, t, _mixture(sol.x, tables, owner, dist.prob))


def max_scaling(topology: SwitchTopology, model, direction) -> float:
    """Largest ``rho`` with ``rho * direction`` servable, from one LP."""
    _require_size(topology)
    model = as_link_model(model, topology.n_clients)
    u = _check_dims(topology, direction)
    if not u.any():
        raise ValueError("direction must be nonzero")
    dist = state_distribution(model)
    prob, _, _ = _service_lp(topology, dist, np.zeros(topology.d), u, 0.0)
    sol = lp.lp_solve(prob)
    return float(sol.x[-1])


def boundary_scaling(topology: SwitchTopology, model, direction, tol: float = 1e-6) -> float:
    """Bisect for ``rho*`` such that ``rho* * direction`` sits on the boundary."""
    u = _check_dims(topology, direction)
    if not u.any():
        raise ValueError("direction must be nonzero")
    if tol <= 0:
        raise ValueError("tol must be positive")
    # No request type can be served more than once per slot.
    lo, hi = 0.0, 1.0 / u.max()
    if capacity_membership(topology, model, hi * u).verdict != OUTSIDE:
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if capacity_membership(topology, model, mid * u).verdict == OUTSIDE:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def _best_responses(topology, dist, lam):
    """Max-weight matching per state with positive probability, in state order."""
    out = []
    for m, p in enumerate(dist.prob):
        if p > 0:
            out.append((p, max_weight_matching(topology, m, lam)))
    return out


def _check_lambda(topology, lam) -> np.ndarray:
    lam = np.asarray(lam, dtype=float).ravel()
    if lam.shape != (topology.d,):
        raise ValueError(f"multiplier must have {topology.d} entries")
    if np.any(lam < 0):
        raise ValueError("multipliers must be nonnegative")
    return lam


def dual_value(topology: SwitchTopology, model, b, lam, dist=None) -> float:
    """Dual function ``h(lam) = 1 + <lam, b> - sum_s p(s) max_{y in Y(s)} <lam, y>``."""
    b = _check_dims(topology, b)
    lam = _check_lambda(topology, lam)
    if dist is None:
        dist = state_distribution(as_link_model(model, topology.n_clients))
    total = 0.0
    for p, y in _best_responses(topology, dist, lam):
        total += p * float(lam @ y)
    return 1.0 + float(lam @ b) - total


def dual_supergradient(topology: SwitchTopology, model, b, lam, dist=None) -> np.ndarray:
    """Supergradient ``b - sum_s p(s) y(s, lam)`` of the dual function."""
    b = _check_dims(topology, b)
    lam = _check_lambda(topology, lam)
    if dist is None:
        dist = state_distribution(as_link_model(model, topology.n_clients))
    served = np.zeros(topology.d)
    for p, y in _best_responses(topology, dist, lam):
        served += p * y
    return b - served


@dataclass
class PDGAResult:
    lambdas: np.ndarray  # (iterations + 1, d), row 0 is the zero start
    values: np.ndarray  # h at every iterate
    stopped_on_plateau: bool = False

    @property
    def sums(self) -> np.ndarray:
        return self.lambdas.sum(axis=1)


def pdga_run(topology: SwitchTopology, model, b, alpha: float, iterations: int,
             plateau: bool = False, plateau_tol: float = 1e-10, plateau_len: int = 100) -> PDGAResult:
    """Deterministic projected dual gradient ascent from ``lam = 0``.

    Runs ``iterations`` steps, or stops early once ``h`` changes by less than
    ``plateau_tol`` for ``plateau_len`` consecutive steps when ``plateau`` is set.
    """
    if alpha <= 0:
        raise ValueError("step size must be positive")
    if iterations < 1:
        raise ValueError("at least one iteration is required")
    b = _check_dims(topology, b)
    dist = state_distribution(as_link_model(model, topology.n_clients))
    lam = np.zeros(topology.d)
    lams = [lam]
    vals = [dual_value(topology, None, b, lam, dist)]
    flat = 0
    for _ in range(iterations):
        g = dual_supergradient(topology, None, b, lam, dist)
        lam = np.maximum(lam + alpha * g, 0.0)
        lams.append(lam)
        vals.append(dual_value(topology, None, b, lam, dist))
        if plateau:
            flat = flat + 1 if abs(vals[-1] - vals[-2]) < plateau_tol else 0
            if flat >= plateau_len:
                return PDGAResult(np.array(lams), np.array(vals), True)
    return PDGAResult(np.array(lams), np.array(vals))

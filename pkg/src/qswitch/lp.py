"""Dense two-phase primal simplex with Bland's anti-cycling rule.

Problems are given in a general row form::

    optimise  c @ x
    subject   G[r] @ x  (<= | == | >=)  g[r]     for every row r
              lower <= x <= upper

and converted internally to ``min c'x, A x = b, x >= 0, b >= 0``.  The
solver is meant for the small dense programs of this package (a few
thousand columns at most).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

#: Primal feasibility tolerance (constraint residuals, phase-1 objective).
FEAS_TOL = 1e-8
#: Comparison tolerance for reduced costs, ratios and pivots.
CMP_TOL = 1e-9

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

_SENSES = {"<=": -1, "==": 0, ">=": 1, "=": 0, "<": -1, ">": 1}


class MalformedProgramError(ValueError):
    pass


@dataclass
class LinearProgram:
    c: np.ndarray
    G: np.ndarray
    g: np.ndarray
    senses: Sequence[str]
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    maximize: bool = False

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.G = np.asarray(self.G, dtype=float)
        if self.G.size == 0:
            self.G = self.G.reshape(0, n)
        self.g = np.asarray(self.g, dtype=float).ravel()
        if self.G.ndim != 2 or self.G.shape[1] != n:
            raise MalformedProgramError(f"constraint matrix shape {self.G.shape} does not match {n} variables")
        if self.g.size != self.G.shape[0]:
            raise MalformedProgramError(f"{self.G.shape[0]} rows but {self.g.size} right-hand sides")
        if isinstance(self.senses, str):
            self.senses = [self.senses] * self.G.shape[0]
        self.senses = list(self.senses)
        if len(self.senses) != self.G.shape[0]:
            raise MalformedProgramError("one sense per row is required")
        bad = [s for s in self.senses if s not in _SENSES]
        if bad:
            raise MalformedProgramError(f"unknown row sense {bad[0]!r}")
        self.lower = np.zeros(n) if self.lower is None else np.asarray(self.lower, dtype=float).ravel()
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float).ravel()
        if self.lower.size != n or self.upper.size != n:
            raise MalformedProgramError("variable bounds must have one entry per variable")
        if (np.isnan(self.lower).any() or np.isnan(self.upper).any()
                or (self.lower == np.inf).any() or (self.upper == -np.inf).any()):
            raise MalformedProgramError("invalid variable bounds")
        if not (np.isfinite(self.c).all() and np.isfinite(self.G).all() and np.isfinite(self.g).all()):
            raise MalformedProgramError("objective and constraint data must be finite")

    @property
    def n_vars(self) -> int:
        return self.c.size

    def residuals(self, x) -> np.ndarray:
        """Constraint violations of ``x`` (zero when satisfied), rows then bounds."""
        x = np.asarray(x, dtype=float)
        lhs = self.G @ x
        viol = np.empty(self.G.shape[0])
        for r, s in enumerate(self.senses):
            k = _SENSES[s]
            if k < 0:
                viol[r] = max(lhs[r] - self.g[r], 0.0)
            elif k > 0:
                viol[r] = max(self.g[r] - lhs[r], 0.0)
            else:
                viol[r] = abs(lhs[r] - self.g[r])
        bnd = np.maximum(self.lower - x, 0.0) + np.maximum(x - self.upper, 0.0)
        return np.concatenate([viol, bnd])


@dataclass
class LPSolution:
    status: str
    x: Optional[np.ndarray] = None
    objective: Optional[float] = None
    duals: Optional[np.ndarray] = field(default=None, repr=False)
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


class _Tableau:
    """Simplex tableau; the last row holds reduced costs and -objective."""

    def __init__(self, A: np.ndarray, b: np.ndarray, basis: list[int]):
        m, n = A.shape
        self.T = np.zeros((m + 1, n + 1))
        self.T[:m, :n] = A
        self.T[:m, n] = b
        self.basis = list(basis)
        self.iterations = 0

    def set_objective(self, cost: np.ndarray) -> None:
        m = len(self.basis)
        n = self.T.shape[1] - 1
        row = np.zeros(n + 1)
        row[: cost.size] = cost
        cb = row[self.basis]
        row -= cb @ self.T[:m]
        self.T[m] = row

    def pivot(self, r: int, col: int) -> None:
        T = self.T
        T[r] /= T[r, col]
        colv = T[:, col].copy()
        colv[r] = 0.0
        T -= np.outer(colv, T[r])
        self.basis[r] = col
        self.iterations += 1

    def run(self, allowed: np.ndarray, max_iter: int) -> str:
        """Minimise the current objective row using Bland's rule."""
        T = self.T
        m = len(self.basis)
        while True:
            red = T[m, :-1]
            cand = np.flatnonzero((red < -CMP_TOL) & allowed)
            if cand.size == 0:
                return OPTIMAL
            col = int(cand[0])
            column = T[:m, col]
            pos = column > CMP_TOL
            if not pos.any():
                return UNBOUNDED
            ratios = np.full(m, np.inf)
            ratios[pos] = T[:m, -1][pos] / column[pos]
            best = ratios.min()
            ties = np.flatnonzero(ratios <= best + CMP_TOL * max(1.0, abs(best)))
            r = int(min(ties, key=lambda i: self.basis[i]))
            self.pivot(r, col)
            if self.iterations > max_iter:
                raise RuntimeError("simplex iteration limit exceeded")


def _standard_form(lp: LinearProgram):
    """Map ``lp`` to ``min c'z, Az = b, z >= 0`` and return the back-substitution."""
    n = lp.n_vars
    cols = []  # (orig var, sign) for each structural column
    offset = np.zeros(n)
    extra_rows = []
    for i in range(n):
        lo, hi = lp.lower[i], lp.upper[i]
        if lo > hi:
            return None
        if np.isfinite(lo):
            offset[i] = lo
            cols.append((i, 1.0))
            if np.isfinite(hi):
                extra_rows.append((len(cols) - 1, hi - lo))
        elif np.isfinite(hi):
            offset[i] = hi
            cols.append((i, -1.0))
        else:
            cols.append((i, 1.0))
            cols.append((i, -1.0))
    nz = len(cols)
    S = np.zeros((n, nz))
    for k, (i, sgn) in enumerate(cols):
        S[i, k] = sgn
    # x = offset + S z
    Gz = lp.G @ S
    gz = lp.g - lp.G @ offset
    rows = [(Gz[r], gz[r], _SENSES[s]) for r, s in enumerate(lp.senses)]
    for k, cap in extra_rows:
        e = np.zeros(nz)
        e[k] = 1.0
        rows.append((e, cap, -1))
    sign = -1.0 if lp.maximize else 1.0
    cz = sign * (lp.c @ S)
    const = sign * (lp.c @ offset)
    return S, offset, rows, cz, const


def lp_solve(problem: LinearProgram, max_iter: int = 200000) -> LPSolution:
    """Solve ``problem`` to an optimal vertex, or report infeasible/unbounded."""
    std = _standard_form(problem)
    if std is None:
        return LPSolution(INFEASIBLE)
    S, offset, rows, cz, const = std
    nz = cz.size
    m = len(rows)
    n_slack = sum(1 for (_, _, k) in rows if k != 0)
    A = np.zeros((m, nz + n_slack))
    b = np.zeros(m)
    row_sign = np.ones(m)
    basis = [-1] * m
    s = nz
    for r, (a, rhs, k) in enumerate(rows):
        A[r, :nz] = a
        if k != 0:
            # <= gets +slack, >= gets -surplus
            A[r, s] = 1.0 if k < 0 else -1.0
            s += 1
        if rhs < 0:
            A[r] *= -1.0
            rhs = -rhs
            row_sign[r] = -1.0
        b[r] = rhs
        if k != 0 and A[r, s - 1] > 0:
            basis[r] = s - 1
    need_art = [r for r in range(m) if basis[r] < 0]
    n_real = A.shape[1]
    A_full = np.hstack([A, np.zeros((m, len(need_art)))])
    for t, r in enumerate(need_art):
        A_full[r, n_real + t] = 1.0
        basis[r] = n_real + t
    tab = _Tableau(A_full, b, basis)
    n_cols = A_full.shape[1]
    total_iter = 0

    if need_art:
        phase1 = np.zeros(n_cols)
        phase1[n_real:] = 1.0
        tab.set_objective(phase1)
        tab.run(np.ones(n_cols, dtype=bool), max_iter)
        if -tab.T[m, -1] > FEAS_TOL * max(1.0, float(np.abs(b).max(initial=0.0))):
            return LPSolution(INFEASIBLE, iterations=tab.iterations)
        # Drive zero-level artificials out of the basis; drop redundant rows.
        keep = []
        for r in range(m):
            if tab.basis[r] >= n_real:
                cand = np.flatnonzero(np.abs(tab.T[r, :n_real]) > CMP_TOL)
                if cand.size:
                    tab.pivot(r, int(cand[0]))
                    keep.append(r)
            else:
                keep.append(r)
        if len(keep) < m:
            keep_rows = keep + [m]
            tab.T = tab.T[keep_rows]
            tab.basis = [tab.basis[r] for r in keep]
            row_sign_kept = row_sign[keep]
        else:
            row_sign_kept = row_sign
        kept_rows = keep
    else:
        row_sign_kept = row_sign
        kept_rows = list(range(m))

    m2 = len(tab.basis)
    allowed = np.zeros(n_cols, dtype=bool)
    allowed[:n_real] = True
    cost = np.zeros(n_cols)
    cost[:nz] = cz
    tab.set_objective(cost)
    status = tab.run(allowed, max_iter)
    if status == UNBOUNDED:
        return LPSolution(UNBOUNDED, iterations=tab.iterations)

    zfull = np.zeros(n_cols)
    for r, col in enumerate(tab.basis):
        zfull[col] = tab.T[r, -1]
    z = zfull[:nz]
    x = offset + S @ z
    obj = float(problem.c @ x)

    duals = np.zeros(len(problem.senses))
    try:
        B = A_full[np.ix_(kept_rows, tab.basis)]
        yb = np.linalg.solve(B.T, cost[tab.basis])
        yb = yb * row_sign_kept
        if problem.maximize:
            yb = -yb
        for t, r in enumerate(kept_rows):
            if r < len(problem.senses):
                duals[r] = yb[t]
    except np.linalg.LinAlgError:
        duals = None

    sol = LPSolution(OPTIMAL, x, obj, duals, tab.iterations)
    viol = problem.residuals(x)
    scale = max(1.0, float(np.abs(problem.g).max(initial=0.0)))
    if viol.size and viol.max() > FEAS_TOL * scale * 10:
        raise RuntimeError(f"simplex returned a point violating constraints by {viol.max():.3e}")
    return sol


def lp_feasible(problem: LinearProgram) -> bool:
    """Phase-1 feasibility of ``problem`` (its objective is ignored)."""
    zero = LinearProgram(np.zeros(problem.n_vars), problem.G, problem.g, problem.senses,
                         problem.lower, problem.upper)
    return lp_solve(zero).status == OPTIMAL

"""Compiled inner loops for the two slot simulators.

Matchings are passed as padded edge lists: ``edges[r, :sizes[r]]`` are the
request types served by row ``r``.  Rows of one action set are sorted
lexicographically (row 0 is the empty matching) and the scan keeps the
first strict maximum, which reproduces the tie-breaking of
:func:`qswitch.topology.max_weight_matching`.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - exercised only without numba
    njit = None

from .topology import matching_table


def edge_lists(table: np.ndarray):
    sizes = table.sum(axis=1).astype(np.int64)
    width = max(1, int(sizes.max(initial=0)))
    edges = np.full((table.shape[0], width), -1, dtype=np.int64)
    for r, row in enumerate(table):
        nz = np.flatnonzero(row)
        edges[r, :nz.size] = nz
    return edges, sizes


def state_tables(topology):
    """Concatenated edge lists of every link state's action set.

    Returns ``(offsets, counts, edges, sizes)`` where state ``m`` owns rows
    ``offsets[m] : offsets[m] + counts[m]``.
    """
    n = topology.n_clients
    tables = [matching_table(topology, m) for m in range(2**n)]
    counts = np.array([len(t) for t in tables], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(np.int64)
    edges, sizes = edge_lists(np.vstack(tables))
    return offsets, counts, edges, sizes


def _best_row(start, count, edges, sizes, w, thr):
    best = 0
    best_val = 0.0
    for r in range(1, count):
        row = start + r
        v = 0.0
        ok = True
        for t in range(sizes[row]):
            x = w[edges[row, t]]
            if x <= thr:
                ok = False
                break
            v += x
        if ok and v > best_val:
            best_val = v
            best = r
    return best


def _decoherent_chunk(masks, B, lam, alpha, offsets, counts, edges, sizes, Y, sum_lam, lam_rec, record):
    d = lam.size
    for k in range(masks.size):
        m = masks[k]
        r = _best_row(offsets[m], counts[m], edges, sizes, lam, 0.0)
        row = offsets[m] + r
        for e in range(d):
            Y[k, e] = 0
        for t in range(sizes[row]):
            Y[k, edges[row, t]] = 1
        s = 0.0
        for e in range(d):
            v = lam[e] + alpha * (B[k, e] - Y[k, e])
            lam[e] = v if v > 0.0 else 0.0
            s += lam[e]
        sum_lam[k] = s
        if record:
            for e in range(d):
                lam_rec[k, e] = lam[e]


def _congestion_chunk(B, BH, Q, Qh, first, second, edges, sizes, ta, su, valid, out):
    """Advance the congestion policy over one block of slots.

    ``out`` has columns (admitted, admitted_lle, served, underflow, max_q,
    max_qhat) per slot.  Returns the slot index of an underflow under
    theorem-valid parameters, or -1.
    """
    d = Q.size
    n = Qh.size
    count = sizes.size
    omega = np.empty(d)
    w = np.empty(d, dtype=np.int64)
    wh = np.empty(n, dtype=np.int64)
    y = np.empty(d, dtype=np.int64)
    ay = np.empty(n, dtype=np.int64)
    for k in range(B.shape[0]):
        for e in range(d):
            w[e] = B[k, e] if Q[e] <= ta else 0
            omega[e] = (Q[e] + Qh[first[e]] + Qh[second[e]]) - su
        for j in range(n):
            wh[j] = BH[k, j] if Qh[j] <= ta else 0
        r = _best_row(0, count, edges, sizes, omega, 1e-9)
        for e in range(d):
            y[e] = 0
        for j in range(n):
            ay[j] = 0
        for t in range(sizes[r]):
            e = edges[r, t]
            y[e] = 1
            ay[first[e]] += 1
            ay[second[e]] += 1
        short = False
        for e in range(d):
            if Q[e] < y[e]:
                short = True
        for j in range(n):
            if Qh[j] < ay[j]:
                short = True
        if short and valid:
            return k
        sw = 0
        sy = 0
        mq = 0
        for e in range(d):
            v = Q[e] + w[e] - y[e]
            Q[e] = v if v > 0 else 0
            sw += w[e]
            sy += y[e]
            if Q[e] > mq:
                mq = Q[e]
        swh = 0
        mqh = 0
        for j in range(n):
            v = Qh[j] + wh[j] - ay[j]
            Qh[j] = v if v > 0 else 0
            swh += wh[j]
            if Qh[j] > mqh:
                mqh = Qh[j]
        out[k, 0] = sw
        out[k, 1] = swh
        out[k, 2] = sy
        out[k, 3] = 1 if short else 0
        out[k, 4] = mq
        out[k, 5] = mqh
    return -1


if njit is not None:
    _best_row = njit(cache=True)(_best_row)
    decoherent_chunk = njit(cache=True)(_decoherent_chunk)
    congestion_chunk = njit(cache=True)(_congestion_chunk)
    HAVE_NUMBA = True
else:  # pragma: no cover
    decoherent_chunk = _decoherent_chunk
    congestion_chunk = _congestion_chunk
    HAVE_NUMBA = False


def pick_engine(engine: str) -> bool:
    """True when the compiled loop should be used."""
    if engine == "python":
        return False
    if engine == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba is not installed")
        return True
    if engine == "auto":
        return HAVE_NUMBA
    raise ValueError(f"unknown engine {engine!r}")

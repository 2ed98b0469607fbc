"""Reference computations that share no code with the package's solvers."""
from __future__ import annotations

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.linalg import spsolve


def generator_stationary(conflict: np.ndarray, up: np.ndarray, down: np.ndarray,
                         max_states: int = 100_000) -> dict[frozenset, float]:
    """Stationary law of the activation chain, reached by breadth-first search from the idle state.

    From state ``s`` transmitter ``u`` switches on at rate ``up[u]`` if it conflicts
    with nobody in ``s`` and switches off at rate ``down[u]``. The balance
    equations are solved directly, with one row replaced by the normalisation.
    """
    n = len(up)
    start = frozenset()
    index = {start: 0}
    order = [start]
    rows, cols, vals = [], [], []
    k = 0
    while k < len(order):
        s = order[k]
        for u in range(n):
            if u in s:
                t, rate = s - {u}, down[u]
            elif up[u] > 0 and not any(conflict[u, v] for v in s):
                t, rate = s | {u}, up[u]
            else:
                continue
            if t not in index:
                index[t] = len(order)
                order.append(t)
                if len(order) > max_states:
                    raise RuntimeError("state space too large for the oracle")
            rows.append(index[t]); cols.append(k); vals.append(rate)   # inflow to t
            rows.append(k); cols.append(k); vals.append(-rate)         # outflow from s
        k += 1
    m = len(order)
    q = csr_matrix((vals, (rows, cols)), shape=(m, m)).tolil()
    q[0, :] = np.ones(m)
    b = np.zeros(m)
    b[0] = 1.0
    pi = spsolve(q.tocsr(), b)
    return {s: float(p) for s, p in zip(order, pi)}


def brute_independent_sets(conflict: np.ndarray) -> set[frozenset]:
    n = conflict.shape[0]
    out = set()
    for mask in range(1 << n):
        members = [i for i in range(n) if mask >> i & 1]
        if all(not conflict[a, b] for a in members for b in members if a < b):
            out.add(frozenset(members))
    return out

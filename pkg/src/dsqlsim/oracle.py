"""Value-iteration oracle for the Q-update fixed point on a routing snapshot."""

from __future__ import annotations

import numpy as np

from .qlearning import RoutingGraph

ORACLE_TOL = 1e-9


def value_iteration(graph: RoutingGraph, dn: int, beta: float, tol: float = 1e-13,
                    max_iter: int = 100_000) -> np.ndarray:
    """V*(c) = max_m LQ(c,m) * (r(c,m) + beta * V*(m)), V*(dn) = R_max / (1 - beta)."""
    n = graph.n
    terminal = graph.reward_max / (1.0 - beta)
    r = graph.reward.copy()
    r[:, dn] = graph.reward_max
    v = np.zeros(n)
    v[dn] = terminal
    has_nb = graph.adjacency.any(axis=1)
    for _ in range(max_iter):
        q = np.where(graph.adjacency, graph.lq * (r + beta * v[None, :]), -np.inf)
        new = np.where(has_nb, q.max(axis=1), 0.0)
        new[dn] = terminal
        if np.max(np.abs(new - v)) < tol:
            return new
        v = new
    raise RuntimeError("value iteration did not converge")


def action_values(graph: RoutingGraph, dn: int, beta: float, v: np.ndarray | None = None) -> np.ndarray:
    """Q*(c, m) for every edge; -inf where no link exists."""
    if v is None:
        v = value_iteration(graph, dn, beta)
    r = graph.reward.copy()
    r[:, dn] = graph.reward_max
    return np.where(graph.adjacency, graph.lq * (r + beta * v[None, :]), -np.inf)


def best_among(values, ids, tol: float = ORACLE_TOL):
    """Id of the best value; near-ties within ``tol`` go to the smallest id."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return None
    top = values.max()
    return min(i for i, v in zip(ids, values) if v >= top - tol)


def optimal_policy(graph: RoutingGraph, dn: int, beta: float,
                   tol: float = ORACLE_TOL) -> dict[int, int | None]:
    q = action_values(graph, dn, beta)
    out = {}
    for c in range(graph.n):
        if c == dn:
            continue
        nb = np.flatnonzero(graph.adjacency[c])
        out[c] = best_among(q[c, nb], nb.tolist(), tol) if nb.size else None
    return out


def value_iteration_all(graph: RoutingGraph, beta: float, tol: float = 1e-13,
                        max_iter: int = 100_000) -> np.ndarray:
    """V*[c, dn] for every destination at once, iterating over the edge list."""
    n = graph.n
    terminal = graph.reward_max / (1.0 - beta)
    c_e, m_e = np.nonzero(graph.adjacency)
    v = np.zeros((n, n))
    np.fill_diagonal(v, terminal)
    if c_e.size == 0:
        return v
    rows = np.arange(c_e.size)
    r = np.repeat(graph.reward[c_e, m_e][:, None], n, axis=1)
    r[rows, m_e] = graph.reward_max
    lq = graph.lq[c_e, m_e][:, None]
    # edges are sorted by source, so each source owns one contiguous segment
    owners, starts = np.unique(c_e, return_index=True)
    diag = np.arange(n)
    for _ in range(max_iter):
        new = np.zeros((n, n))
        new[owners] = np.maximum.reduceat(lq * (r + beta * v[m_e]), starts, axis=0)
        new[diag, diag] = terminal
        if np.max(np.abs(new - v)) < tol:
            return new
        v = new
    raise RuntimeError("value iteration did not converge")

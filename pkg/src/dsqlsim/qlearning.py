"""Tabular Q-learning over (destination, communication type, neighbour) keys.

Tables are dense arrays indexed ``[destination, comm_type, neighbour]`` with a
presence mask, so an absent key reads as 0 and a whole hello round can be
applied to every node at once.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .core import AppClass, NodeId, NodeKind

TIE_TOL = 1e-9


class CommType(enum.IntEnum):
    # order doubles as the tie-break preference
    V2V = 0
    V2I = 1
    CELLULAR = 2
    P80211 = 3


def comm_type_for(app: AppClass, next_hop: NodeKind) -> CommType:
    to_bs = next_hop is NodeKind.BASE_STATION
    if app is AppClass.TRAFFIC_INTENSIVE:
        return CommType.V2I if to_bs else CommType.V2V
    return CommType.CELLULAR if to_bs else CommType.P80211


def family_types(app: AppClass) -> tuple[CommType, CommType]:
    if app is AppClass.TRAFFIC_INTENSIVE:
        return (CommType.V2V, CommType.V2I)
    return (CommType.CELLULAR, CommType.P80211)


class QKey(NamedTuple):
    destination: NodeId
    comm_type: CommType
    neighbor: NodeId


class NoRouteError(ValueError):
    """No candidate next hop."""


class QTable:
    """Q-values owned by one node. Absent keys read as 0."""

    def __init__(self, owner: NodeId, n_nodes: int, values=None, present=None, last_seen=None):
        self.owner = owner
        self.n_nodes = n_nodes
        shape = (n_nodes, len(CommType), n_nodes)
        self.values = np.zeros(shape) if values is None else values
        self.present = np.zeros(shape, dtype=bool) if present is None else present
        self.last_seen = np.full(n_nodes, -1, dtype=np.int64) if last_seen is None else last_seen

    def __len__(self) -> int:
        return int(self.present.sum())

    def _check(self, key: QKey) -> None:
        if not (0 <= key.destination < self.n_nodes and 0 <= key.neighbor < self.n_nodes):
            raise KeyError(f"key {key} outside a {self.n_nodes}-node table")
        if key.neighbor == self.owner:
            raise ValueError(f"node {self.owner} cannot list itself as a neighbour")

    def get(self, key: QKey) -> float:
        if not (0 <= key.destination < self.n_nodes and 0 <= key.neighbor < self.n_nodes):
            raise KeyError(f"key {key} outside a {self.n_nodes}-node table")
        return float(self.values[key.destination, int(key.comm_type), key.neighbor])

    def set(self, key: QKey, value: float) -> None:
        self._check(key)
        idx = (key.destination, int(key.comm_type), key.neighbor)
        self.values[idx] = value
        self.present[idx] = True

    def touch(self, neighbor: NodeId, tick: int) -> None:
        self.last_seen[neighbor] = max(int(self.last_seen[neighbor]), int(tick))

    @property
    def entries(self) -> dict[QKey, float]:
        out = {}
        for dn, te, nb in zip(*np.nonzero(self.present)):
            out[QKey(int(dn), CommType(int(te)), int(nb))] = float(self.values[dn, te, nb])
        return out

    def max_value(self, dn: NodeId, comm_types: Sequence[CommType],
                  neighbors: Sequence[NodeId] | None = None) -> float:
        """max Q(dn, te, y) over the given types and neighbours; 0 if none."""
        te = [int(t) for t in comm_types]
        block = self.values[dn][te]
        if neighbors is not None:
            if len(neighbors) == 0:
                return 0.0
            block = block[:, list(neighbors)]
        return float(block.max()) if block.size else 0.0

    def dump(self) -> str:
        lines = [f"{self.owner} {k.destination} {k.comm_type.name} {k.neighbor} {v!r}"
                 for k, v in sorted(self.entries.items())]
        return "".join(line + "\n" for line in lines)


class QTableSet:
    """Every node's table stacked in one array ``[owner, dn, te, neighbour]``."""

    def __init__(self, n_nodes: int):
        self.n_nodes = n_nodes
        shape = (n_nodes, n_nodes, len(CommType), n_nodes)
        self.values = np.zeros(shape)
        self.present = np.zeros(shape, dtype=bool)
        self.last_seen = np.full((n_nodes, n_nodes), -1, dtype=np.int64)

    def table(self, owner: NodeId) -> QTable:
        return QTable(owner, self.n_nodes, self.values[owner], self.present[owner],
                      self.last_seen[owner])

    def max_q(self) -> float:
        return float(self.values.max()) if self.values.size else 0.0

    def copy(self) -> "QTableSet":
        out = QTableSet(self.n_nodes)
        out.values[...] = self.values
        out.present[...] = self.present
        out.last_seen[...] = self.last_seen
        return out

    def dump(self) -> str:
        return "".join(self.table(i).dump() for i in range(self.n_nodes))


def q_update(table: QTable, key: QKey, lq: float, reward: float, max_next_q: float,
             alpha: float, beta: float) -> float:
    """Q <- alpha * LQ * (Red + beta * max_y Q_m) + (1 - alpha) * Q."""
    old = table.get(key)
    new = alpha * lq * (reward + beta * max_next_q) + (1.0 - alpha) * old
    table.set(key, new)
    return new


def select_action(table: QTable, dn: NodeId, candidates: Sequence[tuple[NodeId, CommType]],
                  epsilon: float, rng: np.random.Generator, tie_tol: float = TIE_TOL):
    """Epsilon-greedy choice; greedy ties go to the smallest id, then comm-type order."""
    if not candidates:
        raise NoRouteError(f"node {table.owner} has no candidate next hop toward {dn}")
    if rng.random() < epsilon:
        return candidates[int(rng.integers(len(candidates)))]
    q = np.array([table.values[dn, int(te), m] for m, te in candidates])
    best = q.max()
    tied = [c for c, v in zip(candidates, q) if v >= best - tie_tol]
    return min(tied, key=lambda c: (c[0], int(c[1])))


def evict_stale(table: QTable, now_tick: int, horizon_ticks: int) -> int:
    """Drop all keys of neighbours unseen for longer than the horizon.

    Neighbours never touched (last_seen = -1) are left alone.
    """
    if horizon_ticks <= 0:
        raise ValueError("horizon_ticks must be positive")
    stale = (table.last_seen >= 0) & (now_tick - table.last_seen > horizon_ticks)
    if not stale.any():
        return 0
    mask = table.present[:, :, stale]
    removed = int(mask.sum())
    table.present[:, :, stale] = False
    table.values[:, :, stale] = 0.0
    return removed


@dataclass
class RoutingGraph:
    """Deterministic one-family routing instance.

    ``reward[c, m]`` is the immediate reward for hop c -> m when m is not the
    destination; a hop into the destination earns ``reward_max`` and the
    delivered state is absorbing with value reward_max / (1 - beta).
    """
    adjacency: np.ndarray
    lq: np.ndarray
    reward: np.ndarray
    comm_type: np.ndarray
    reward_max: float = 1.0

    def __post_init__(self):
        self.adjacency = np.asarray(self.adjacency, dtype=bool).copy()
        np.fill_diagonal(self.adjacency, False)
        n = self.adjacency.shape[0]
        self.lq = np.asarray(self.lq, dtype=float)
        self.reward = np.asarray(self.reward, dtype=float)
        self.comm_type = np.asarray(self.comm_type, dtype=np.int64)
        for name in ("lq", "reward", "comm_type"):
            if getattr(self, name).shape != (n, n):
                raise ValueError(f"{name} must be {n}x{n}")
        if np.any((self.lq < 0) | (self.lq > 1)):
            raise ValueError("lq must lie in [0, 1]")

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    def neighbors(self, c: NodeId) -> list[NodeId]:
        return [int(m) for m in np.flatnonzero(self.adjacency[c])]


def _edges(graph: RoutingGraph):
    c_e, m_e = np.nonzero(graph.adjacency)
    return c_e, m_e, graph.comm_type[c_e, m_e]


def next_state_values(tables: QTableSet, graph: RoutingGraph, beta: float,
                      edges=None) -> np.ndarray:
    """V[m, dn] = max over current neighbours y of Q_m(dn, te(m,y), y); 0 without neighbours."""
    c_e, m_e, te_e = _edges(graph) if edges is None else edges
    n = graph.n
    v = np.zeros((n, n))
    if c_e.size:
        owners, starts = np.unique(c_e, return_index=True)
        v[owners] = np.maximum.reduceat(tables.values[c_e, :, te_e, m_e], starts, axis=0)
    np.fill_diagonal(v, graph.reward_max / (1.0 - beta))
    return v


def hello_sweep(tables: QTableSet, graph: RoutingGraph, alpha: float, beta: float,
                tick: int | None = None) -> None:
    """Apply the Q-update to every (owner, destination, neighbour) link at once."""
    c_e, m_e, te_e = edges = _edges(graph)
    if c_e.size == 0:
        return
    n = graph.n
    rows = np.arange(c_e.size)
    v = next_state_values(tables, graph, beta, edges)
    old = tables.values[c_e, :, te_e, m_e]
    r = np.repeat(graph.reward[c_e, m_e][:, None], n, axis=1)
    r[rows, m_e] = graph.reward_max
    target = graph.lq[c_e, m_e][:, None] * (r + beta * v[m_e])
    mask = np.ones((c_e.size, n), dtype=bool)
    mask[rows, c_e] = False
    tables.values[c_e, :, te_e, m_e] = np.where(mask, alpha * target + (1.0 - alpha) * old, old)
    tables.present[c_e, :, te_e, m_e] |= mask
    if tick is not None:
        tables.last_seen[c_e, m_e] = np.maximum(tables.last_seen[c_e, m_e], tick)


@dataclass(frozen=True)
class TrainReport:
    converged: bool
    episodes_used: int
    max_q: float


def train(graph, episodes_budget: int, q_threshold: float, alpha: float = 0.5,
          beta: float = 0.5, epsilon: float = 0.7, rng: np.random.Generator | None = None,
          tables: QTableSet | None = None) -> tuple[QTableSet, TrainReport]:
    """Episodes of one hello sweep plus one epsilon-greedy packet walk.

    ``graph`` may be a list of graphs (one per application family) sharing the
    same tables; each episode then sweeps and walks every graph. Stops once the
    largest Q-value exceeds ``q_threshold`` or the budget is spent; the latter
    is reported as not converged.
    """
    if q_threshold <= 0:
        raise ValueError("q_threshold must be positive")
    graphs = [graph] if isinstance(graph, RoutingGraph) else list(graph)
    rng = rng or np.random.default_rng(0)
    tables = tables or QTableSet(graphs[0].n)
    active = [[c for c in range(g.n) if g.adjacency[c].any()] for g in graphs]
    used = 0
    for _ in range(episodes_budget):
        used += 1
        for g, act in zip(graphs, active):
            hello_sweep(tables, g, alpha, beta)
            if act:
                _packet_walk(tables, g, alpha, beta, epsilon, rng, act)
        if tables.max_q() > q_threshold:
            return tables, TrainReport(True, used, tables.max_q())
    return tables, TrainReport(False, used, tables.max_q())


def _packet_walk(tables, graph, alpha, beta, epsilon, rng, active) -> None:
    src = active[int(rng.integers(len(active)))]
    dn = int(rng.integers(graph.n - 1))
    dn = dn + 1 if dn >= src else dn
    visited = {src}
    c = src
    for _ in range(graph.n):
        cands = [(m, CommType(int(graph.comm_type[c, m])))
                 for m in graph.neighbors(c) if m not in visited]
        if not cands:
            return
        m, te = select_action(tables.table(c), dn, cands, epsilon, rng)
        if m == dn:
            reward, nxt = graph.reward_max, graph.reward_max / (1.0 - beta)
        else:
            reward = graph.reward[c, m]
            fam = _family_of(te)
            nxt = tables.table(m).max_value(dn, fam, graph.neighbors(m))
        q_update(tables.table(c), QKey(dn, te, m), graph.lq[c, m], reward, nxt, alpha, beta)
        if m == dn:
            return
        visited.add(m)
        c = m


def _family_of(te: CommType) -> tuple[CommType, CommType]:
    if te in (CommType.V2V, CommType.V2I):
        return (CommType.V2V, CommType.V2I)
    return (CommType.CELLULAR, CommType.P80211)


def greedy_policy(tables: QTableSet, graph: RoutingGraph, dn: NodeId,
                  tie_tol: float = TIE_TOL) -> dict[NodeId, NodeId | None]:
    """Greedy next hop from every non-destination node toward ``dn``."""
    rng = np.random.default_rng(0)
    out = {}
    for c in range(graph.n):
        if c == dn:
            continue
        cands = [(m, CommType(int(graph.comm_type[c, m]))) for m in graph.neighbors(c)]
        out[c] = select_action(tables.table(c), dn, cands, 0.0, rng, tie_tol)[0] if cands else None
    return out

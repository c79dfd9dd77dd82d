"""Vehicle motion, hello exchange, link statistics and the connectivity metric.

Vehicles move in straight lines at constant velocity on a torus. Base
stations and RSUs sit on a regular grid. Link quality is the hello reception
ratio over a sliding window of hello rounds, pooled over both directions.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .config import ScenarioConfig
from .core import Node, NodeId, NodeKind

_SPEED_TOL = 1e-9


@dataclass(frozen=True)
class VehicleState:
    id: NodeId
    pos: tuple[float, float]
    vel: tuple[float, float]
    cpu_freq_hz: float = 1e9
    antenna_bandwidth: float = 10e6
    hello_sent: int = 0
    hello_received_from: dict = field(default_factory=dict)
    hello_sent_to: dict = field(default_factory=dict)
    v_bounds: tuple[float, float] = (12.0, 35.0)

    def __post_init__(self):
        lo, hi = self.v_bounds
        s = self.speed
        if s < lo - _SPEED_TOL or s > hi + _SPEED_TOL:
            raise ValueError(f"vehicle {self.id}: speed {s:.3f} m/s outside [{lo}, {hi}]")

    @property
    def speed(self) -> float:
        return math.hypot(*self.vel)


def step_mobility(state: VehicleState, dt_ms: float,
                  area: tuple[float, float] = (36000.0, 48000.0)) -> VehicleState:
    """Advance one vehicle by vel * dt with torus wraparound."""
    if dt_ms <= 0:
        raise ValueError("dt_ms must be positive")
    dt = dt_ms / 1000.0
    x = (state.pos[0] + state.vel[0] * dt) % area[0]
    y = (state.pos[1] + state.vel[1] * dt) % area[1]
    return dataclasses.replace(state, pos=(x, y))


@dataclass(frozen=True)
class LinkStats:
    pair: tuple[NodeId, NodeId]
    sent: int = 0
    received: int = 0
    last_distance_m: float = 0.0

    def __post_init__(self):
        a, b = self.pair
        if a > b:
            object.__setattr__(self, "pair", (b, a))
        if not 0 <= self.received <= self.sent:
            raise ValueError("received count must lie in [0, sent]")

    @property
    def hrr(self) -> float:
        return self.received / self.sent if self.sent else 0.0


def link_quality(stats: LinkStats) -> float:
    """LQ is the hello reception ratio; 0 when nothing was ever sent."""
    return stats.hrr


def connectivity_metric(bx, v_r, r_r, v_s, r_s):
    """Com = B_x * V_r * r_r / (V_s * r_s)."""
    if np.any(np.asarray(v_s) <= 0) or np.any(np.asarray(r_s) <= 0):
        raise ValueError("v_s and r_s must be positive")
    return bx * v_r * r_r / (v_s * r_s)


def grid_positions(count: int, width: float, length: float) -> np.ndarray:
    """Place ``count`` fixed sites at cell centres of a near-square grid."""
    if count == 0:
        return np.zeros((0, 2))
    cols = math.ceil(math.sqrt(count * width / length))
    rows = math.ceil(count / cols)
    out = []
    for k in range(count):
        r, c = divmod(k, cols)
        out.append(((c + 0.5) * width / cols, (r + 0.5) * length / rows))
    return np.array(out, dtype=float)


class WorldState:
    """Physical state of all nodes plus hello counters and HRR windows.

    Node ids run over vehicles first, then base stations, then RSUs. Positions
    are a closed form of the spawn position, velocity and elapsed time, so any
    time can be evaluated without stepping through intermediate ticks.
    """

    def __init__(self, nodes: list[Node], pos0: np.ndarray, vel: np.ndarray,
                 area: tuple[float, float], comm_range_m: float,
                 interference_range_m: float, p_obstacle: float, hrr_window: int = 10,
                 cpu_freq_hz: np.ndarray | None = None, bandwidth_hz: np.ndarray | None = None):
        n = len(nodes)
        self.nodes = list(nodes)
        self.pos0 = np.asarray(pos0, dtype=float).reshape(n, 2)
        self.vel = np.asarray(vel, dtype=float).reshape(n, 2)
        self.area = (float(area[0]), float(area[1]))
        self.comm_range_m = float(comm_range_m)
        self.interference_range_m = float(interference_range_m)
        self.p_obstacle = float(p_obstacle)
        self.hrr_window = int(hrr_window)
        self.cpu_freq_hz = np.full(n, 1e9) if cpu_freq_hz is None else np.asarray(cpu_freq_hz, float)
        self.bandwidth_hz = np.full(n, 10e6) if bandwidth_hz is None else np.asarray(bandwidth_hz, float)
        self.time_ms = 0.0
        self.kinds = [nd.kind for nd in self.nodes]
        self.malicious = np.array([nd.malicious for nd in self.nodes], dtype=bool)
        self.mobile = np.array([k.mobile for k in self.kinds], dtype=bool)
        # [sender, receiver] counters
        self.hello_sent_to = np.zeros((n, n), dtype=np.int64)
        self.hello_received = np.zeros((n, n), dtype=np.int64)
        self.hello_serial = 0
        self.rounds = 0
        self._win_sent = np.zeros((self.hrr_window, n, n), dtype=bool)
        self._win_recv = np.zeros((self.hrr_window, n, n), dtype=bool)
        self._hrr_cache: np.ndarray | None = None
        self.last_received = np.zeros((n, n), dtype=bool)

    @property
    def n(self) -> int:
        return len(self.nodes)

    def positions_at(self, time_ms: float) -> np.ndarray:
        p = self.pos0 + self.vel * (time_ms / 1000.0)
        p[:, 0] %= self.area[0]
        p[:, 1] %= self.area[1]
        return p

    @property
    def pos(self) -> np.ndarray:
        return self.positions_at(self.time_ms)

    def advance(self, dt_ms: float) -> None:
        if dt_ms <= 0:
            raise ValueError("dt_ms must be positive")
        self.time_ms += dt_ms

    def distances(self, time_ms: float | None = None) -> np.ndarray:
        p = self.pos if time_ms is None else self.positions_at(time_ms)
        diff = p[:, None, :] - p[None, :, :]
        return np.sqrt((diff ** 2).sum(axis=-1))

    def adjacency(self, dist: np.ndarray | None = None) -> np.ndarray:
        d = self.distances() if dist is None else dist
        adj = d <= self.comm_range_m
        np.fill_diagonal(adj, False)
        return adj

    def obstacle_matrix(self, dist: np.ndarray | None = None) -> np.ndarray:
        """Per-link loss probability [sender, receiver] with interference escalation."""
        d = self.distances() if dist is None else dist
        near = d <= self.interference_range_m
        np.fill_diagonal(near, False)
        # nodes other than the sender inside the receiver's interference radius
        others = near.sum(axis=0)[None, :] - near
        escalate = (d < self.interference_range_m) & (others >= 1)
        p = np.where(escalate, min(1.0, 2.0 * self.p_obstacle), self.p_obstacle)
        np.fill_diagonal(p, 1.0)
        return p

    def hrr_matrix(self) -> np.ndarray:
        """Symmetric windowed HRR; 0 for pairs with no hello in the window."""
        if self._hrr_cache is None:
            s = self._win_sent.sum(axis=0)
            r = self._win_recv.sum(axis=0)
            s = s + s.T
            r = r + r.T
            out = np.zeros(s.shape)
            np.divide(r, s, out=out, where=s > 0)
            self._hrr_cache = out
        return self._hrr_cache

    def vehicle_state(self, node: NodeId, v_bounds=(0.0, math.inf)) -> VehicleState:
        self._check(node)
        p = self.pos[node]
        return VehicleState(
            id=node, pos=(float(p[0]), float(p[1])), vel=tuple(map(float, self.vel[node])),
            cpu_freq_hz=float(self.cpu_freq_hz[node]),
            antenna_bandwidth=float(self.bandwidth_hz[node]),
            hello_sent=int(self.hello_sent_to[node].sum()),
            hello_received_from={int(j): int(c) for j, c in enumerate(self.hello_received[:, node]) if c},
            hello_sent_to={int(j): int(c) for j, c in enumerate(self.hello_sent_to[node]) if c},
            v_bounds=v_bounds,
        )

    def link_stats(self, a: NodeId, b: NodeId) -> LinkStats:
        self._check(a)
        self._check(b)
        s = int(self._win_sent[:, a, b].sum() + self._win_sent[:, b, a].sum())
        r = int(self._win_recv[:, a, b].sum() + self._win_recv[:, b, a].sum())
        d = float(np.hypot(*(self.pos[a] - self.pos[b])))
        return LinkStats((a, b), sent=s, received=r, last_distance_m=d)

    def _check(self, node: NodeId) -> None:
        if not 0 <= node < self.n:
            raise KeyError(f"unknown node {node}")


def neighbors(world: WorldState, node: NodeId) -> list[NodeId]:
    """Nodes within communication range of ``node``, sorted by id."""
    world._check(node)
    d = np.hypot(*(world.pos - world.pos[node]).T)
    mask = d <= world.comm_range_m
    mask[node] = False
    return [int(i) for i in np.flatnonzero(mask)]


def exchange_hellos(world: WorldState, rng: np.random.Generator,
                    dist: np.ndarray | None = None) -> WorldState:
    """One hello round: every node greets every neighbour; Bernoulli losses."""
    d = world.distances() if dist is None else dist
    adj = world.adjacency(d)
    p_loss = world.obstacle_matrix(d)
    u = rng.random(adj.shape)
    received = adj & (u >= p_loss)
    world.hello_sent_to += adj
    world.hello_received += received
    world.hello_serial += int(adj.sum())
    slot = world.rounds % world.hrr_window
    world._win_sent[slot] = adj
    world._win_recv[slot] = received
    world._hrr_cache = None
    world.last_received = received
    world.rounds += 1
    return world


def spawn_world(cfg: ScenarioConfig, rng: np.random.Generator) -> WorldState:
    """Draw vehicle positions, headings, speeds, CPU rates and roles."""
    nv, nb, nr = cfg.n_vehicles, cfg.n_base_stations, cfg.n_rsus
    pos_v = rng.uniform((0.0, 0.0), (cfg.area_width_m, cfg.area_length_m), size=(nv, 2))
    heading = rng.uniform(0.0, 2.0 * math.pi, size=nv)
    speed = rng.uniform(cfg.v_min_mps, cfg.v_max_mps, size=nv)
    vel_v = np.stack([speed * np.cos(heading), speed * np.sin(heading)], axis=1)
    cpu = rng.uniform(cfg.cpu_freq_min_hz, cfg.cpu_freq_max_hz, size=cfg.n_nodes)
    n_edge = int(round(cfg.edge_fraction * nv))
    edge = set(rng.permutation(nv)[:n_edge].tolist())
    bad = rng.random(cfg.n_nodes) < cfg.p_malicious

    nodes = []
    for i in range(nv):
        kind = NodeKind.EDGE_VEHICLE if i in edge else NodeKind.VEHICLE
        nodes.append(Node(i, kind, bool(bad[i])))
    for k in range(nb):
        nodes.append(Node(nv + k, NodeKind.BASE_STATION, bool(bad[nv + k])))
    for k in range(nr):
        nodes.append(Node(nv + nb + k, NodeKind.RSU, bool(bad[nv + nb + k])))

    infra = np.vstack([grid_positions(nb, cfg.area_width_m, cfg.area_length_m),
                       grid_positions(nr, cfg.area_width_m, cfg.area_length_m)])
    # RSU grid offset by half a cell so it does not coincide with the BS grid
    if nr:
        cols = math.ceil(math.sqrt(nr * cfg.area_width_m / cfg.area_length_m))
        infra[nb:, 0] = (infra[nb:, 0] + 0.5 * cfg.area_width_m / cols) % cfg.area_width_m
    pos0 = np.vstack([pos_v, infra]) if len(infra) else pos_v
    vel = np.vstack([vel_v, np.zeros((nb + nr, 2))])
    return WorldState(nodes, pos0, vel, (cfg.area_width_m, cfg.area_length_m),
                      cfg.comm_range_m, cfg.interference_range_m, cfg.p_obstacle,
                      cfg.hrr_window, cpu, np.full(cfg.n_nodes, cfg.bandwidth_hz))

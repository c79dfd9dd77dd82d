"""Event-driven simulation loop, DSQL and baseline schedulers.

Time advances in whole 1-slot ticks. Three event kinds drive the loop: hello
rounds, hop completions and packet creations. Each node owns one transmitter
that serves one packet at a time; a packet never revisits a node, and a packet
with no unvisited neighbour waits for the next change of its holder's
neighbour table.
"""

from __future__ import annotations

import copy
import heapq
import math
from dataclasses import dataclass

import numpy as np

from . import mlp
from .config import ScenarioConfig
from .core import AppClass, NodeKind, Packet, Rng
from .metrics import DecisionRecord, MetricsReport, Trace, build_report
from .mobility import WorldState, exchange_hellos, spawn_world
from .oracle import best_among, value_iteration_all
from .privacy import EntropyTracker, perturb_action, perturb_reward
from .qlearning import (CommType, QKey, QTableSet, RoutingGraph, TrainReport, hello_sweep,
                        q_update, select_action, train)
from .rewards import cellular_reward, data_amount, local_power, p80211_reward, v2i_rate

SCHEDULERS = ("Dsql", "Random", "GreedyDistance", "StaticPriority")

_HELLO, _HOP, _CREATE = 0, 1, 2
_KIND_PRIORITY = {NodeKind.BASE_STATION: 0, NodeKind.RSU: 1,
                  NodeKind.EDGE_VEHICLE: 2, NodeKind.VEHICLE: 3}


class EngineError(RuntimeError):
    """The run could not start."""


@dataclass
class RunResult:
    report: MetricsReport
    trace: Trace
    tables: QTableSet | None = None
    net: mlp.Perceptron | None = None
    pretrain: TrainReport | None = None


def generate_traffic(cfg: ScenarioConfig, world: WorldState,
                     rng: np.random.Generator) -> list[Packet]:
    """Poisson arrivals per vehicle; destinations uniform over other nodes."""
    duration_ms = cfg.sim_duration_s * 1000.0
    raw = []
    if cfg.packet_rate_hz > 0 and world.n > 1:
        mean_gap = 1000.0 / cfg.packet_rate_hz
        for v in range(cfg.n_vehicles):
            t = 0.0
            while True:
                t += rng.exponential(mean_gap)
                if t >= duration_ms:
                    break
                dn = int(rng.integers(world.n - 1))
                dn = dn + 1 if dn >= v else dn
                app = AppClass.DELAY_SENSITIVE if rng.random() < cfg.delay_sensitive_fraction \
                    else AppClass.TRAFFIC_INTENSIVE
                raw.append((t, v, dn, app))
    raw.sort(key=lambda r: (r[0], r[1]))
    bits = cfg.packet_size_bytes * 8.0
    out = []
    for pid, (t, v, dn, app) in enumerate(raw):
        pos = world.positions_at(t)
        d = float(np.hypot(*(pos[v] - pos[dn])))
        r0 = _rate(cfg, min(max(d, cfg.d_min_m), cfg.comm_range_m))
        out.append(Packet(pid, v, dn, cfg.packet_size_bytes, t, t + 1000.0 * bits / r0, app))
    return out


def _rate(cfg: ScenarioConfig, d):
    return v2i_rate(cfg.bandwidth_hz, cfg.tx_power, cfg.channel_fading, cfg.noise_power,
                    np.maximum(d, cfg.d_min_m), cfg.path_loss_exp)


class Simulation:
    def __init__(self, cfg: ScenarioConfig, scheduler: str = "Dsql"):
        if scheduler not in SCHEDULERS:
            raise EngineError(f"unknown scheduler {scheduler!r}; choose from {', '.join(SCHEDULERS)}")
        if cfg.n_nodes < 1:
            raise EngineError("scenario has no nodes")
        self.cfg = cfg
        self.scheduler = scheduler
        self.rng = Rng(cfg.seed)
        self.world = spawn_world(cfg, self.rng.stream("mobility"))
        self.packets = generate_traffic(cfg, self.world, self.rng.stream("traffic"))
        self._setup()

    @classmethod
    def from_world(cls, cfg: ScenarioConfig, world: WorldState, packets: list[Packet],
                   scheduler: str = "Dsql") -> "Simulation":
        """Run a hand-built world and workload (used by tests)."""
        self = cls.__new__(cls)
        if scheduler not in SCHEDULERS:
            raise EngineError(f"unknown scheduler {scheduler!r}")
        self.cfg, self.scheduler = cfg, scheduler
        self.rng = Rng(cfg.seed)
        for p in packets:
            if not p.expected_delivery_ms > p.created_at_ms:
                raise EngineError(f"packet {p.id}: expected delivery must follow creation")
        self.world, self.packets = world, packets
        self._setup()
        return self

    def _setup(self) -> None:
        cfg, w = self.cfg, self.world
        n = w.n
        self.n = n
        self.is_bs = np.array([k is NodeKind.BASE_STATION for k in w.kinds])
        self.is_edge = np.array([k.is_edge for k in w.kinds])
        self.proc_ms = np.where(self.is_bs, cfg.pd_bs_ms, cfg.pd_11p_ms)
        self.proc_ticks = np.ceil(self.proc_ms / cfg.time_slot_ms).astype(np.int64)
        self.bits = cfg.packet_size_bytes * 8.0
        self.r_dmin = float(_rate(cfg, cfg.d_min_m))
        e_tx_max = cfg.tx_power * self.bits / float(_rate(cfg, cfg.comm_range_m))
        e_loc_max = float(local_power(cfg.bandwidth_hz / 1e6, cfg.cpu_freq_max_hz / 1e9, cfg.d_min_m)) \
            * float(self.proc_ms.max()) / 1000.0
        self.energy_max = e_tx_max + e_loc_max
        self.ct = np.zeros((2, n), dtype=np.int64)
        self.ct[0] = np.where(self.is_bs, CommType.V2I, CommType.V2V)
        self.ct[1] = np.where(self.is_bs, CommType.CELLULAR, CommType.P80211)
        self.trace = Trace(n_vehicles=cfg.n_vehicles, node_energy=np.zeros(n),
                           entropy_threshold=cfg.entropy_threshold)
        self.trace.packets = self.packets
        self.tables = QTableSet(n) if self.scheduler == "Dsql" and self.packets else None
        self.net = None
        self.pretrain = None
        self.entropy = EntropyTracker(n)
        self.has_traffic = bool(self.packets)
        # per-round snapshot
        self.round = -1
        self.nbr = [[] for _ in range(n)]
        self.nbr_version = np.zeros(n, dtype=np.int64)
        self.heard = np.zeros((n, n), dtype=bool)
        self.hrr = np.zeros((n, n))
        self.p_loss = np.zeros((n, n))
        self.red_bar = np.zeros(n)
        self.graphs = None
        self._vstar = {}
        self._pos_cache = (None, None)

    # -- geometry helpers --

    def pos(self, tick: int) -> np.ndarray:
        if self._pos_cache[0] != tick:
            self._pos_cache = (tick, self.world.positions_at(float(tick) * self.cfg.time_slot_ms))
        return self._pos_cache[1]

    def _dist(self, tick: int, a, b):
        p = self.pos(tick)
        return np.hypot(*(p[a] - p[b]).T)

    # -- rewards on arbitrary (c, m) pairs --

    def rewards(self, c, m, dist, fam: int, t_s: float, hops: int = 1) -> np.ndarray:
        cfg = self.cfg
        c = np.asarray(c)
        m = np.asarray(m)
        d = np.maximum(dist, cfg.d_min_m)
        dl = data_amount(self.world.cpu_freq_hz[c] / 1e9, self.proc_ms[m] / 1000.0, d, cfg.ad)
        bs = self.is_bs[m]
        if fam == AppClass.TRAFFIC_INTENSIVE:
            rb = self.red_bar[m] * cfg.beta ** (hops - 1)
            r = np.where(bs, rb * dl, np.where(self.is_edge[m], dl, 0.0))
        else:
            cell = cellular_reward(cfg.pd_th_ms, dl, t_s, cfg.cb_cellular, cfg.pd_bs_ms)
            hrr = np.maximum(self.hrr[c, m], 1e-6)
            p11 = p80211_reward(cfg.pd_th_ms, t_s, cfg.packet_size_bytes / 1000.0, cfg.cb_11p,
                                dl, hrr, self.p_loss[c, m], cfg.pd_11p_ms)
            r = np.where(bs, cell, p11)
        return np.clip(r, 0.0, cfg.reward_max)

    # -- pretraining --

    def _pretrain_mlp(self) -> mlp.Perceptron:
        cfg = self.cfg
        rng = self.rng.stream("mlp")
        net = mlp.Perceptron.init(rng, cfg.hidden_width)
        warm = spawn_world(cfg, self.rng.split("warmup").stream("mobility"))
        feats, labels = [], []
        duration_ms = cfg.sim_duration_s * 1000.0
        for _ in range(4 * cfg.mlp_samples):
            if len(labels) >= cfg.mlp_samples:
                break
            t = float(rng.uniform(0.0, duration_ms))
            warm.time_ms = t
            dist = warm.distances()
            adj = warm.adjacency(dist)
            cs, ms = np.nonzero(adj)
            if cs.size == 0:
                continue
            p_loss = warm.obstacle_matrix(dist)
            for c, m in zip(cs.tolist(), ms.tolist()):
                d = max(float(dist[c, m]), cfg.d_min_m)
                rate = float(_rate(cfg, d))
                air_ms = 1000.0 * self.bits / rate
                hop_ms = math.ceil(air_ms) + self.proc_ms[m]
                e = cfg.tx_power * air_ms / 1000.0 + float(local_power(
                    cfg.bandwidth_hz / 1e6, warm.cpu_freq_hz[c] / 1e9, d)) * self.proc_ms[m] / 1000.0
                ok = rng.random() >= p_loss[c, m]
                attacked = bool(warm.malicious[m]) and rng.random() < cfg.malicious_drop_prob
                dl = float(data_amount(warm.cpu_freq_hz[c] / 1e9, self.proc_ms[m] / 1000.0, d, cfg.ad))
                reward = min(cfg.reward_max, dl if self.is_edge[m] or self.is_bs[m] else 0.0)
                feats.append([reward, rate / self.r_dmin, min(1.0, e / self.energy_max)])
                labels.append(1.0 if ok and hop_ms <= cfg.pd_th_ms and not attacked else 0.0)
        if not labels:
            return net
        data = mlp.TrainingSet(np.array(feats[:cfg.mlp_samples]), np.array(labels[:cfg.mlp_samples]))
        return mlp.train(net, data, cfg.mlp_learning_rate, cfg.mlp_batch_size, cfg.mlp_epochs, rng).net

    def _pretrain_q(self) -> TrainReport:
        cfg = self.cfg
        shadow = copy.deepcopy(self.world)
        hello = self.rng.split("pretrain").stream("hello")
        dist = shadow.distances()
        for _ in range(cfg.hrr_window):
            exchange_hellos(shadow, hello, dist)
        saved = (self.heard, self.hrr, self.p_loss, self.red_bar)
        self._snapshot(shadow, dist)
        graphs = self._graphs(0.0)
        _, report = train(graphs, cfg.episodes_budget, cfg.q_threshold, cfg.alpha, cfg.beta,
                          cfg.epsilon_explore, self.rng.stream("train"), self.tables)
        self.heard, self.hrr, self.p_loss, self.red_bar = saved
        return report

    # -- hello rounds --

    def _snapshot(self, world: WorldState, dist: np.ndarray) -> None:
        self.heard = world.last_received.T.copy()  # [c, m]: c heard m
        self.hrr = world.hrr_matrix()
        self.p_loss = world.obstacle_matrix(dist)
        in_range = world.adjacency(dist)
        vehicles = np.array([k.mobile for k in world.kinds])
        count = (in_range & vehicles[None, :]).sum(axis=1)
        nv = max(1, self.cfg.n_vehicles)
        self.red_bar = np.minimum(1.0, count / nv)

    def _graphs(self, t_s: float) -> list[RoutingGraph]:
        n = self.n
        c_e, m_e = np.nonzero(self.heard)
        graphs = []
        pos = self.world.positions_at(t_s * 1000.0)
        d_e = np.hypot(*(pos[c_e] - pos[m_e]).T) if c_e.size else np.zeros(0)
        for fam in (0, 1):
            reward = np.zeros((n, n))
            if c_e.size:
                reward[c_e, m_e] = self.rewards(c_e, m_e, d_e, fam, t_s)
            ct = np.broadcast_to(self.ct[fam][None, :], (n, n))
            graphs.append(RoutingGraph(self.heard, self.hrr, reward, ct, self.cfg.reward_max))
        return graphs

    def _hello(self, tick: int) -> list[int]:
        cfg = self.cfg
        self.round += 1
        self.world.time_ms = float(tick) * cfg.time_slot_ms
        dist = self.world.distances()
        exchange_hellos(self.world, self.rng.stream("hello"), dist)
        self._snapshot(self.world, dist)
        changed = []
        for c in range(self.n):
            row = np.flatnonzero(self.heard[c]).tolist()
            if row != self.nbr[c]:
                self.nbr[c] = row
                self.nbr_version[c] += 1
                changed.append(c)
        self._vstar = {}
        if self.has_traffic:
            self.graphs = self._graphs(self.world.time_ms / 1000.0)
            if self.tables is not None:
                for g in self.graphs:
                    hello_sweep(self.tables, g, cfg.alpha, cfg.beta, tick)
                self._evict(tick)
        return changed

    def _evict(self, tick: int) -> None:
        horizon = self.cfg.eviction_horizon * self.cfg.hello_period_ticks
        ls = self.tables.last_seen
        stale = (ls >= 0) & (tick - ls > horizon)
        if stale.any():
            o, nb = np.nonzero(stale)
            self.tables.present[o, :, :, nb] = False
            self.tables.values[o, :, :, nb] = 0.0
            ls[o, nb] = -1

    def _vstar_for(self, fam: int) -> np.ndarray:
        if fam not in self._vstar:
            self._vstar[fam] = value_iteration_all(self.graphs[fam], self.cfg.beta)
        return self._vstar[fam]

    # -- decisions --

    def _decide(self, c: int, p: Packet, cands: list[int], tick: int):
        cfg = self.cfg
        fam = int(p.app_class)
        t_s = tick * cfg.time_slot_ms / 1000.0
        idx = np.array(cands)
        d = self._dist(tick, np.full(len(cands), c), idx)
        d_c = np.maximum(d, cfg.d_min_m)
        rewards = self.rewards(np.full(len(cands), c), idx, d, fam, t_s, hops=len(p.hops))
        rewards = np.where(idx == p.destination, cfg.reward_max, rewards)
        rate = _rate(cfg, np.minimum(d_c, cfg.comm_range_m))
        air_ms = 1000.0 * self.bits / rate
        hop_ticks = np.ceil(air_ms / cfg.time_slot_ms).astype(np.int64) + self.proc_ticks[idx]
        e_tx = cfg.tx_power * air_ms / 1000.0
        e_loc = local_power(cfg.bandwidth_hz / 1e6, self.world.cpu_freq_hz[c] / 1e9, d_c) \
            * self.proc_ms[idx] / 1000.0
        policy = self.rng.stream("policy")

        if self.scheduler == "Dsql":
            feats = np.stack([rewards, rate / self.r_dmin,
                              np.minimum(1.0, (e_tx + e_loc) / self.energy_max)], axis=1)
            keep = list(range(len(cands)))
            if len(cands) > cfg.mlp_top_k:
                keep = sorted(mlp.score_candidates(self.net, feats)[:cfg.mlp_top_k])
            options = [(cands[k], CommType(int(self.ct[fam][cands[k]]))) for k in keep]
            m, _ = select_action(self.tables.table(c), p.destination, options,
                                 cfg.epsilon_online, policy)
            k = cands.index(m)
        elif self.scheduler == "Random":
            k = int(policy.integers(len(cands)))
        elif self.scheduler == "GreedyDistance":
            to_dn = self._dist(tick, idx, np.full(len(cands), p.destination))
            k = int(np.argmin(to_dn))
        else:
            if p.destination in cands:
                k = cands.index(p.destination)
            else:
                k = min(range(len(cands)), key=lambda j: (_KIND_PRIORITY[self.world.kinds[cands[j]]], cands[j]))
        m = cands[k]

        # oracle: exact snapshot values with the realised one-hop reward
        vstar = self._vstar_for(fam)
        ok = hop_ticks * cfg.time_slot_ms <= cfg.pd_th_ms
        values = ok * self.hrr[c, idx] * (rewards + cfg.beta * vstar[idx, p.destination])
        oracle_best = best_among(values, cands)

        # privacy: only released copies are perturbed
        attempt = bool(self.world.malicious[self.nbr[c]].any()) if self.nbr[c] else False
        self.entropy.record(c, attempt)
        if self.scheduler == "Dsql":
            prng = self.rng.stream("privacy")
            released_reward = perturb_reward(float(rewards[k]), cfg.eta_privacy, prng)
            released = k
            if len(cands) >= 2:
                released = perturb_action(k, len(cands), cfg.eta_privacy, self.entropy.entropy(c),
                                          cfg.lambda_j, prng)
        else:
            released_reward, released = float(rewards[k]), k
        if attempt:
            self.trace.attempts.append((released, k, self.entropy.entropy(c)))

        if self.tables is not None:
            te = CommType(int(self.ct[fam][m]))
            if m == p.destination:
                nxt = cfg.reward_max / (1.0 - cfg.beta)
            else:
                nb = self.nbr[m]
                nxt = 0.0
                if nb:
                    nxt = float(self.tables.values[m, p.destination, self.ct[fam][nb], nb].max())
            q_update(self.tables.table(c), QKey(p.destination, te, m), float(self.hrr[c, m]),
                     float(rewards[k]), nxt, cfg.alpha, cfg.beta)

        self.trace.decisions.append(DecisionRecord(tick, c, tuple(cands), m, oracle_best,
                                                   released_reward))
        self.trace.max_reward = max(self.trace.max_reward, float(rewards[k]))
        self.trace.max_rate_bps = max(self.trace.max_rate_bps, float(rate[k]))
        return m, float(d[k]), int(hop_ticks[k]), float(e_tx[k] + e_loc[k])

    # -- main loop --

    def run(self) -> RunResult:
        cfg = self.cfg
        if self.scheduler == "Dsql" and self.has_traffic:
            self.net = self._pretrain_mlp()
            self.pretrain = self._pretrain_q()
        end = cfg.duration_ticks
        heap = []
        seq = 0
        for k in range(0, end, cfg.hello_period_ticks):
            heap.append((k, _HELLO, seq, None))
            seq += 1
        for p in self.packets:
            tick = int(math.ceil(p.created_at_ms / cfg.time_slot_ms))
            if tick < end:
                heap.append((tick, _CREATE, seq, p.id))
                seq += 1
        heapq.heapify(heap)

        queues = [[] for _ in range(self.n)]
        busy_until = np.zeros(self.n, dtype=np.int64)
        stuck = {}
        retry = set()
        visited = {p.id: {p.source} for p in self.packets}
        channel = self.rng.stream("channel")
        attack = self.rng.stream("attack")
        edf = self.scheduler == "StaticPriority"
        trace = self.trace

        while heap and heap[0][0] < end:
            tick = heap[0][0]
            dirty = set()
            while heap and heap[0][0] == tick:
                _, kind, _, data = heapq.heappop(heap)
                if kind == _HELLO:
                    dirty.update(self._hello(tick))
                    dirty.update(retry)
                    retry.clear()
                elif kind == _CREATE:
                    p = self.packets[data]
                    queues[p.source].append(p.id)
                    dirty.add(p.source)
                else:
                    pid, c, m, success = data
                    p = self.packets[pid]
                    dirty.add(c)
                    if not success:
                        queues[c].append(pid)
                        stuck[pid] = ("round", self.round)
                        retry.add(c)
                        continue
                    for a in (c, m):
                        if self.world.mobile[a]:
                            trace.active_vehicles.add(a)
                    if self.world.mobile[c] and self.world.mobile[m]:
                        com = self._com(c, m, tick)
                        if com is not None:
                            trace.com_values.append(com)
                    if self.world.malicious[m] and m != p.destination:
                        trace.malicious_handles += 1
                        if attack.random() < cfg.malicious_drop_prob:
                            trace.malicious_drops += 1
                            p.dropped = True
                            continue
                    p.hops.append(m)
                    visited[pid].add(m)
                    if m == p.destination:
                        p.delivered_at_ms = float(tick) * cfg.time_slot_ms
                        r0_blocks = (self.bits / (p.expected_delivery_ms - p.created_at_ms) * 1000.0) / (512 * 8)
                        trace.tt_s[pid] = (len(p.hops) - 1) * cfg.block_units / r0_blocks
                    else:
                        queues[m].append(pid)
                        dirty.add(m)
            for c in sorted(dirty):
                if busy_until[c] > tick or not queues[c] or not self.nbr[c]:
                    continue
                order = queues[c]
                if edf:
                    order = sorted(order, key=lambda q: (self.packets[q].expected_delivery_ms, q))
                for pid in order:
                    mark = stuck.get(pid)
                    if mark == (c, int(self.nbr_version[c])) or mark == ("round", self.round):
                        continue
                    cands = [m for m in self.nbr[c] if m not in visited[pid]]
                    if not cands:
                        stuck[pid] = (c, int(self.nbr_version[c]))
                        continue
                    stuck.pop(pid, None)
                    p = self.packets[pid]
                    m, d, hop_ticks, energy = self._decide(c, p, cands, tick)
                    p.add_energy(energy)
                    trace.node_energy[c] += energy
                    success = d <= cfg.comm_range_m and channel.random() >= self.p_loss[c, m]
                    queues[c].remove(pid)
                    busy_until[c] = tick + hop_ticks
                    heapq.heappush(heap, (tick + hop_ticks, _HOP, seq, (pid, c, m, success)))
                    seq += 1
                    break

        w = self.world
        talked = (w.hello_received.sum(axis=0) + w.hello_received.sum(axis=1)) > 0
        trace.active_vehicles.update(int(i) for i in np.flatnonzero(talked & w.mobile))
        converged = bool(self.pretrain.converged) if self.pretrain else False
        episodes = int(self.pretrain.episodes_used) if self.pretrain else 0
        report = build_report(trace, converged, episodes)
        return RunResult(report, trace, self.tables, self.net, self.pretrain)

    def _com(self, s: int, r: int, tick: int) -> float | None:
        """Connectivity diagnostic B * V_r * r_r / (V_s * r_s), rates to the nearest base station.

        Undefined (None) for a parked sender.
        """
        cfg = self.cfg
        speed = np.hypot(*self.world.vel.T)
        if speed[s] == 0:
            return None
        bs = np.flatnonzero(self.is_bs)
        if bs.size == 0:
            rs = rr = 1.0
        else:
            pos = self.pos(tick)
            rs = float(_rate(cfg, np.hypot(*(pos[bs] - pos[s]).T).min()))
            rr = float(_rate(cfg, np.hypot(*(pos[bs] - pos[r]).T).min()))
        return float(self.world.bandwidth_hz[s] / 1e6 * speed[r] * rr / (speed[s] * rs))


def run(cfg: ScenarioConfig, scheduler: str = "Dsql") -> RunResult:
    return Simulation(cfg, scheduler).run()

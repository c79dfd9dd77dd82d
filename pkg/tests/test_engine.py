import math
import time

import numpy as np
import pytest

from dsqlsim.config import ScenarioConfig
from dsqlsim.core import AppClass, Node, NodeKind, Packet
from dsqlsim.engine import EngineError, Simulation, generate_traffic, run
from dsqlsim.metrics import decisions_csv, energy_ledger_gap, packets_csv, summary_csv
from dsqlsim.mobility import WorldState

V, RSU, BS, EDGE = NodeKind.VEHICLE, NodeKind.RSU, NodeKind.BASE_STATION, NodeKind.EDGE_VEHICLE

SMALL = dict(area_width_m=6000.0, area_length_m=6000.0, n_vehicles=12, n_base_stations=1,
             n_rsus=2, sim_duration_s=8.0, mlp_samples=200, episodes_budget=60)


def hand_world(cfg, xy, kinds, vel=None, malicious=None):
    n = len(xy)
    malicious = malicious or [False] * n
    nodes = [Node(i, k, m) for i, (k, m) in enumerate(zip(kinds, malicious))]
    vel = np.zeros((n, 2)) if vel is None else np.asarray(vel, float)
    return WorldState(nodes, np.asarray(xy, float), vel, (cfg.area_width_m, cfg.area_length_m),
                      cfg.comm_range_m, cfg.interference_range_m, cfg.p_obstacle, cfg.hrr_window)


def shannon_bps(d):
    return 10e6 * math.log2(1 + 0.2 / (1e-13 * d ** 3))


def packets(src, dst, times, size=2048, d0=1000.0, app=AppClass.TRAFFIC_INTENSIVE):
    out = []
    for i, t in enumerate(times):
        exp = t + 1000.0 * size * 8 / shannon_bps(d0)
        out.append(Packet(i, src, dst, size, t, exp, app))
    return out


def test_single_hop_delay_is_airtime_plus_processing():
    cfg = ScenarioConfig(n_vehicles=2, n_base_stations=0, n_rsus=0, p_obstacle=0.0,
                         sim_duration_s=3.0, p_malicious=0.0)
    world = hand_world(cfg, [[1000, 1000], [1500, 1000]], [V, V], vel=[[12, 0], [12, 0]])
    pk = packets(0, 1, [50.0 + 200.0 * k for k in range(10)], d0=500.0)
    res = Simulation.from_world(cfg, world, pk, "Random").run()
    air = 2048 * 8 / shannon_bps(500.0) * 1000.0
    hop = math.ceil(air) + math.ceil(cfg.pd_11p_ms)
    assert hop == 11
    for p in res.trace.packets:
        assert p.delivered_at_ms == math.ceil(p.created_at_ms) + hop
        assert p.hops == [0, 1]
    assert res.report.transmission_delay_ms == pytest.approx(hop - air, abs=1e-9)
    assert res.report.accuracy == 1.0
    assert res.report.connectivity_degree == 2


def test_empty_workload_is_fast_and_empty():
    cfg = ScenarioConfig(packet_rate_hz=0.0)
    t0 = time.perf_counter()
    res = run(cfg, "Dsql")
    assert time.perf_counter() - t0 < 1.0
    rep = res.report
    assert rep.accuracy is None and rep.transmission_delay_ms is None
    assert rep.travel_expenses_j == 0.0
    assert rep.p_privacy_leakage is None and rep.p_malicious_attack is None
    assert rep.objective is None and not rep.converged and rep.episodes_used == 0
    assert res.trace.decisions == [] and res.trace.packets == []


@pytest.mark.parametrize("scheduler", ["Dsql", "Random", "GreedyDistance", "StaticPriority"])
def test_same_seed_gives_identical_traces(scheduler):
    cfg = ScenarioConfig(**SMALL)

    def dump():
        r = run(cfg, scheduler)
        return decisions_csv(r.trace) + packets_csv(r.trace) + summary_csv(r.report)

    a, b = dump(), dump()
    assert a == b
    assert len(a.splitlines()) > 10


def test_different_seeds_differ():
    a = run(ScenarioConfig(**SMALL, seed=1), "Random")
    b = run(ScenarioConfig(**SMALL, seed=2), "Random")
    assert packets_csv(a.trace) != packets_csv(b.trace)


@pytest.mark.parametrize("scheduler", ["Dsql", "Random"])
def test_energy_ledger_closes(scheduler):
    res = run(ScenarioConfig(**SMALL), scheduler)
    total = math.fsum(res.trace.node_energy)
    assert total > 0
    assert energy_ledger_gap(res.trace) <= 1e-12 * total


def test_delays_never_negative():
    res = run(ScenarioConfig(**SMALL), "Random")
    delays = [p.delivered_at_ms - p.expected_delivery_ms for p in res.trace.packets if p.delivered]
    assert delays and min(delays) >= 0


def test_random_accuracy_on_four_candidates():
    cfg = ScenarioConfig(n_vehicles=1, n_base_stations=0, n_rsus=5, p_obstacle=0.0, p_malicious=0.0,
                         sim_duration_s=62.0)
    c = 10000.0
    xy = [[c, c], [c + 1500, c], [c, c + 1500], [c - 1500, c], [c, c - 1500], [30000, 40000]]
    world = hand_world(cfg, xy, [V, RSU, RSU, RSU, RSU, RSU])
    pk = packets(0, 5, [20.0 * k + 1.0 for k in range(3000)])
    res = Simulation.from_world(cfg, world, pk, "Random").run()
    decisions = res.trace.decisions
    assert len(decisions) > 2500
    assert all(len(d.candidates) == 4 for d in decisions)
    assert res.report.accuracy == pytest.approx(0.25, abs=0.02)


def test_dsql_exploitation_matches_oracle():
    cfg = ScenarioConfig(n_vehicles=3, n_base_stations=0, n_rsus=2, p_obstacle=0.0, p_malicious=0.0,
                         epsilon_online=0.0, sim_duration_s=20.0, mlp_samples=100)
    o = 5000.0
    xy = [[o, o], [o + 1200, o], [o + 600, o + 900], [o + 1800, o + 900], [o + 2600, o + 200]]
    world = hand_world(cfg, xy, [V, RSU, EDGE, V, RSU])
    rng = np.random.default_rng(0)
    pk = []
    for i in range(400):
        s, d = rng.choice(5, 2, replace=False)
        t = 50.0 * i + 7.0
        pk.append(Packet(i, int(s), int(d), 2048, t, t + 1.0, AppClass.TRAFFIC_INTENSIVE))
    res = Simulation.from_world(cfg, world, pk, "Dsql").run()
    multi = [d for d in res.trace.decisions if len(d.candidates) > 1]
    assert len(multi) > 50
    assert res.report.accuracy == 1.0


def _cluster_world(cfg):
    xy = [[1000, 1000], [1100, 1000], [1000, 1100],          # cluster A
          [4000, 1000], [4100, 1000], [4000, 1100],          # cluster B
          [2500, 1050],                                       # bridge, 1.5 km from both
          [15000, 15000]]                                     # isolated
    return hand_world(cfg, xy, [V] * 8)


def test_connectivity_clusters_and_bridge():
    cfg = ScenarioConfig(n_vehicles=8, n_base_stations=0, n_rsus=0, p_obstacle=0.0, sim_duration_s=1.0)
    res = Simulation.from_world(cfg, _cluster_world(cfg), [], "Random").run()
    assert res.report.connectivity_degree == 7


def test_connectivity_all_in_range_and_none_in_range():
    cfg = ScenarioConfig(n_vehicles=4, n_base_stations=0, n_rsus=0, p_obstacle=0.0, sim_duration_s=1.0)
    near = hand_world(cfg, [[0, 0], [100, 0], [0, 100], [100, 100]], [V] * 4)
    assert Simulation.from_world(cfg, near, [], "Random").run().report.connectivity_degree == 4
    far = hand_world(cfg, [[0, 0], [5000, 0], [0, 5000], [5000, 5000]], [V] * 4)
    assert Simulation.from_world(cfg, far, [], "Random").run().report.connectivity_degree == 0


DENSE = dict(area_width_m=4000.0, area_length_m=4000.0, n_vehicles=30, n_base_stations=2, n_rsus=4,
             packet_rate_hz=3.0, sim_duration_s=30.0, p_obstacle=0.05)


def test_no_malicious_nodes_means_no_attack_metric():
    rep = run(ScenarioConfig(**{**SMALL, "p_malicious": 0.0}), "Random").report
    assert rep.p_malicious_attack is None and rep.p_privacy_leakage is None and rep.objective is None


def test_all_malicious_always_drop():
    rep = run(ScenarioConfig(**{**SMALL, "p_malicious": 1.0, "malicious_drop_prob": 1.0}), "Random").report
    assert rep.p_malicious_attack == 1.0


def test_attack_rate_matches_drop_probability():
    res = run(ScenarioConfig(**DENSE, p_malicious=0.2, malicious_drop_prob=0.5), "Random")
    handles = res.trace.malicious_handles
    assert handles > 2000
    assert res.report.p_malicious_attack == pytest.approx(0.5, abs=0.02)


def test_greedy_distance_picks_closest_to_destination():
    cfg = ScenarioConfig(n_vehicles=4, n_base_stations=0, n_rsus=0, p_obstacle=0.0, p_malicious=0.0,
                         sim_duration_s=1.0)
    world = hand_world(cfg, [[5000, 5000], [6500, 5000], [5000, 6500], [7000, 7500]], [V] * 4)
    res = Simulation.from_world(cfg, world, packets(0, 3, [10.0]), "GreedyDistance").run()
    assert res.trace.decisions[0].chosen == 2


def test_static_priority_prefers_infrastructure():
    cfg = ScenarioConfig(n_vehicles=3, n_base_stations=1, n_rsus=1, p_obstacle=0.0, p_malicious=0.0,
                         sim_duration_s=1.0)
    xy = [[5000, 5000], [6000, 5000], [20000, 20000], [5000, 6000], [4000, 5000]]
    world = hand_world(cfg, xy, [V, V, V, BS, RSU])
    res = Simulation.from_world(cfg, world, packets(0, 2, [10.0]), "StaticPriority").run()
    assert res.trace.decisions[0].candidates == (1, 3, 4)
    assert res.trace.decisions[0].chosen == 3


def test_packet_must_expect_delivery_after_creation():
    cfg = ScenarioConfig(n_vehicles=2, n_base_stations=0, n_rsus=0)
    world = hand_world(cfg, [[0, 0], [100, 0]], [V, V])
    bad = [Packet(0, 0, 1, 2048, 5.0, 5.0, AppClass.TRAFFIC_INTENSIVE)]
    with pytest.raises(EngineError):
        Simulation.from_world(cfg, world, bad, "Random")


def test_unknown_scheduler():
    with pytest.raises(EngineError):
        Simulation(ScenarioConfig(**SMALL), "Oracle")
    with pytest.raises(EngineError):
        Simulation.from_world(ScenarioConfig(**SMALL), None, [], "Oracle")


def test_traffic_generation():
    cfg = ScenarioConfig(**SMALL)
    sim = Simulation(cfg, "Random")
    pk = sim.packets
    assert len(pk) == pytest.approx(cfg.n_vehicles * cfg.packet_rate_hz * cfg.sim_duration_s, rel=0.35)
    assert all(p.source != p.destination for p in pk)
    assert all(p.source < cfg.n_vehicles for p in pk)
    assert [p.created_at_ms for p in pk] == sorted(p.created_at_ms for p in pk)
    assert all(p.expected_delivery_ms > p.created_at_ms for p in pk)
    again = generate_traffic(cfg, sim.world, np.random.default_rng(0))
    assert all(p.expected_delivery_ms > p.created_at_ms for p in again)


def test_dsql_pretraining_report():
    res = run(ScenarioConfig(**SMALL), "Dsql")
    assert res.pretrain is not None and res.net is not None
    assert res.report.episodes_used == SMALL["episodes_budget"]
    assert not res.report.converged  # threshold 8 exceeds the Q bound of 2
    assert res.tables.max_q() <= 2.0
    assert res.trace.max_reward <= 1.0

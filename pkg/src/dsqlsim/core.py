"""Shared domain types, seeded randomness and the scheduling objective."""

from __future__ import annotations

import enum
import math
import zlib
from dataclasses import dataclass, field

import numpy as np

NodeId = int


class NodeKind(enum.Enum):
    VEHICLE = "Vehicle"
    BASE_STATION = "BaseStation"
    RSU = "Rsu"
    EDGE_VEHICLE = "EdgeVehicle"

    @property
    def mobile(self) -> bool:
        return self in (NodeKind.VEHICLE, NodeKind.EDGE_VEHICLE)

    @property
    def is_edge(self) -> bool:
        # RSUs are the roadside edge servers
        return self in (NodeKind.EDGE_VEHICLE, NodeKind.RSU)


@dataclass(frozen=True)
class Node:
    id: NodeId
    kind: NodeKind
    malicious: bool = False


class AppClass(enum.IntEnum):
    TRAFFIC_INTENSIVE = 0
    DELAY_SENSITIVE = 1


@dataclass
class Packet:
    id: int
    source: NodeId
    destination: NodeId
    size_bytes: int
    created_at_ms: float
    expected_delivery_ms: float
    app_class: AppClass = AppClass.TRAFFIC_INTENSIVE
    delivered_at_ms: float | None = None
    dropped: bool = False
    hops: list[NodeId] = field(default_factory=list)
    energy_spent_j: float = 0.0

    def __post_init__(self):
        if not self.hops:
            self.hops = [self.source]
        if self.hops[0] != self.source:
            raise ValueError("hops must begin with the source")

    @property
    def holder(self) -> NodeId:
        return self.hops[-1]

    @property
    def delivered(self) -> bool:
        return self.delivered_at_ms is not None

    def add_energy(self, joules: float) -> None:
        if joules < 0:
            raise ValueError("energy increments must be non-negative")
        self.energy_spent_j += joules


class Rng:
    """Seeded root from which named, independent numpy generators are derived.

    The same seed and stream name always give the same stream, independent of
    the order in which streams are requested.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: dict[str, np.random.Generator] = {}

    def stream(self, name: str) -> np.random.Generator:
        if name not in self._streams:
            key = zlib.crc32(name.encode("utf-8"))
            ss = np.random.SeedSequence(self.seed, spawn_key=(key,))
            self._streams[name] = np.random.Generator(np.random.PCG64(ss))
        return self._streams[name]

    def split(self, name: str) -> "Rng":
        child_seed = int(self.stream("split:" + name).integers(0, 2**63 - 1))
        return Rng(child_seed)


def transfer_time(path_segments: float, block_units: float, rate: float) -> float:
    """Total transfer time PS * UN / r.

    ``rate`` must be expressed in block units per second for the result to be
    in seconds.
    """
    if rate <= 0:
        raise ValueError(f"rate must be positive, got {rate}")
    return path_segments * block_units / rate


@dataclass(frozen=True)
class ConstraintReport:
    tt_within_tau: bool
    rate_within_r0: bool
    reward_within_max: bool
    leakage_within_threshold: bool
    attack_within_threshold: bool

    @property
    def all_hold(self) -> bool:
        return all(vars(self).values())

    def violated(self) -> list[str]:
        return [name for name, ok in vars(self).items() if not ok]


@dataclass(frozen=True)
class RunSummary:
    """What the objective constraints are checked against."""
    max_tt_s: float = 0.0
    tau_s: float = math.inf
    max_rate: float = 0.0
    r0: float = math.inf
    max_reward: float = 0.0
    reward_max: float = 1.0
    th_l: float = 1.0
    th_a: float = 1.0


def objective_value(p_leak: float, p_attack: float, total_tt: float) -> float:
    """Scheduling objective (P_L * P_A) * sum of transfer times."""
    for name, p in (("p_leak", p_leak), ("p_attack", p_attack)):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {p}")
    if total_tt < 0:
        raise ValueError(f"total_tt must be non-negative, got {total_tt}")
    return p_leak * p_attack * total_tt


def check_constraints(p_leak: float | None, p_attack: float | None,
                      summary: RunSummary) -> ConstraintReport:
    # an absent probability (no attempts) makes its constraint vacuous
    return ConstraintReport(
        tt_within_tau=summary.max_tt_s <= summary.tau_s,
        rate_within_r0=summary.max_rate <= summary.r0,
        reward_within_max=summary.max_reward <= summary.reward_max,
        leakage_within_threshold=p_leak is None or p_leak <= summary.th_l,
        attack_within_threshold=p_attack is None or p_attack <= summary.th_a,
    )

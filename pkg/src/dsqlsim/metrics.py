"""Run traces, the six evaluation metrics, the objective and CSV output."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .core import Packet, RunSummary, check_constraints, objective_value
from .privacy import adversary_inference


@dataclass(frozen=True)
class DecisionRecord:
    tick: int
    node: int
    candidates: tuple[int, ...]
    chosen: int
    oracle_best: int | None
    released_reward: float


@dataclass
class Trace:
    n_vehicles: int = 0
    decisions: list[DecisionRecord] = field(default_factory=list)
    packets: list[Packet] = field(default_factory=list)
    node_energy: np.ndarray = field(default_factory=lambda: np.zeros(0))
    # (released action index, true action index, pseudonym entropy) per attack attempt
    attempts: list[tuple[int, int, float]] = field(default_factory=list)
    malicious_handles: int = 0
    malicious_drops: int = 0
    active_vehicles: set = field(default_factory=set)
    com_values: list[float] = field(default_factory=list)
    tt_s: dict = field(default_factory=dict)
    max_rate_bps: float = 0.0
    max_reward: float = 0.0
    entropy_threshold: float = 0.5


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float | None
    travel_expenses_j: float
    connectivity_degree: int
    transmission_delay_ms: float | None
    p_privacy_leakage: float | None
    p_malicious_attack: float | None
    objective: float | None
    converged: bool
    episodes_used: int
    mean_com: float | None = None

    def __post_init__(self):
        for name in ("accuracy", "p_privacy_leakage", "p_malicious_attack"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.transmission_delay_ms is not None and self.transmission_delay_ms < 0:
            raise ValueError("negative transmission delay")

    def row(self) -> list[str]:
        return [_fmt(getattr(self, f.name)) for f in fields(self)]


REPORT_FIELDS = tuple(f.name for f in fields(MetricsReport))
DECISION_FIELDS = ("tick", "node", "candidates", "chosen", "oracle_best", "released_reward")
PACKET_FIELDS = ("id", "created", "delivered", "hops", "energy")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def accuracy_metric(trace: Trace) -> float | None:
    if not trace.decisions:
        return None
    hits = sum(d.chosen == d.oracle_best for d in trace.decisions)
    return hits / len(trace.decisions)


def travel_expenses(trace: Trace) -> float:
    return float(sum(p.energy_spent_j for p in trace.packets if p.delivered))


def connectivity_degree(trace: Trace) -> int:
    return len(trace.active_vehicles)


def transmission_delay(trace: Trace) -> float | None:
    delays = [p.delivered_at_ms - p.expected_delivery_ms for p in trace.packets if p.delivered]
    return float(np.mean(delays)) if delays else None


def attack_metrics(trace: Trace) -> tuple[float | None, float | None]:
    if trace.attempts:
        rel, tru, h = zip(*trace.attempts)
        p_l = adversary_inference(rel, tru, h, trace.entropy_threshold)
    else:
        p_l = None
    p_a = trace.malicious_drops / trace.malicious_handles if trace.malicious_handles else None
    return p_l, p_a


def total_transfer_time(trace: Trace) -> float:
    return float(sum(trace.tt_s[p.id] for p in trace.packets if p.delivered and p.id in trace.tt_s))


def build_report(trace: Trace, converged: bool = False, episodes_used: int = 0) -> MetricsReport:
    p_l, p_a = attack_metrics(trace)
    objective = None
    if p_l is not None and p_a is not None:
        objective = objective_value(p_l, p_a, total_transfer_time(trace))
    return MetricsReport(
        accuracy=accuracy_metric(trace),
        travel_expenses_j=travel_expenses(trace),
        connectivity_degree=connectivity_degree(trace),
        transmission_delay_ms=transmission_delay(trace),
        p_privacy_leakage=p_l,
        p_malicious_attack=p_a,
        objective=objective,
        converged=converged,
        episodes_used=episodes_used,
        mean_com=float(np.mean(trace.com_values)) if trace.com_values else None,
    )


def constraint_report(trace: Trace, report: MetricsReport, tau_s: float, r0_bps: float,
                      reward_max: float, th_l: float, th_a: float):
    delivered_tt = [trace.tt_s[p.id] for p in trace.packets if p.delivered and p.id in trace.tt_s]
    summary = RunSummary(max_tt_s=max(delivered_tt, default=0.0), tau_s=tau_s,
                         max_rate=trace.max_rate_bps, r0=r0_bps,
                         max_reward=trace.max_reward, reward_max=reward_max,
                         th_l=th_l, th_a=th_a)
    return check_constraints(report.p_privacy_leakage, report.p_malicious_attack, summary)


def energy_ledger_gap(trace: Trace) -> float:
    """|sum of per-packet energy - sum of per-node energy|; 0 up to rounding."""
    return abs(math.fsum(p.energy_spent_j for p in trace.packets) - math.fsum(trace.node_energy))


# -- CSV --

def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def decisions_csv(trace: Trace) -> str:
    rows = ([d.tick, d.node, ";".join(map(str, d.candidates)), d.chosen, _fmt(d.oracle_best),
             _fmt(float(d.released_reward))] for d in trace.decisions)
    return _csv_text(DECISION_FIELDS, rows)


def packets_csv(trace: Trace) -> str:
    rows = ([p.id, _fmt(float(p.created_at_ms)),
             _fmt(None if p.delivered_at_ms is None else float(p.delivered_at_ms)),
             ";".join(map(str, p.hops)), _fmt(float(p.energy_spent_j))] for p in trace.packets)
    return _csv_text(PACKET_FIELDS, rows)


def summary_csv(report: MetricsReport) -> str:
    return _csv_text(REPORT_FIELDS, [report.row()])


def write_outputs(out_dir: Path, stem: str, trace: Trace, report: MetricsReport,
                  emit_trace: bool = True) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    parts = [("summary", summary_csv(report))]
    if emit_trace:
        parts = [("decisions", decisions_csv(trace)), ("packets", packets_csv(trace))] + parts
    for kind, text in parts:
        path = out_dir / f"{stem}_{kind}.csv"
        path.write_text(text, encoding="utf-8")
        written.append(path)
    return written

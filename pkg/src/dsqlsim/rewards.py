"""Reward, energy, data-amount and link-rate formulas.

Every formula accepts scalars or numpy arrays. Units in the cellular and
802.11p rewards are dimensionless numbers prepared by the caller: delays in
milliseconds, bandwidths in Mbit/s, packet size in kilobytes and
T_persistent in seconds. The local power/energy/data formulas take bandwidth
in MHz and CPU frequency in GHz (see ``EnergyModel.from_si``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import AppClass, NodeKind

# effective switched capacitance of the cubic CPU energy model
DEFAULT_K1 = 1e-27


@dataclass(frozen=True)
class RewardInputs:
    next_hop_kind: NodeKind
    app_class: AppClass = AppClass.TRAFFIC_INTENSIVE
    red_bar: float = 0.0
    d_local: float = 0.0
    pd_th_ms: float = 100.0
    t_persistent_s: float = 0.0
    cb: float = 100.0
    pd_bs_ms: float = 20.0
    ps_bytes: float = 2.048
    cb_11p: float = 27.0
    hrr: float = 1.0
    p_obstacle: float = 0.0
    pd_11p_ms: float = 10.0


@dataclass(frozen=True)
class EnergyModel:
    bandwidth: float
    cpu_freq_hz: float
    dt_s: float
    distance_m: float
    ad: float = 1e-6
    tx_power_w: float = 0.2
    k1: float = DEFAULT_K1

    @classmethod
    def from_si(cls, bandwidth_hz, cpu_freq_hz, dt_s, distance_m, ad, tx_power_w,
                d_min_m=1.0):
        """Scale SI inputs to MHz / GHz and clamp the distance."""
        return cls(bandwidth_hz / 1e6, cpu_freq_hz / 1e9, dt_s,
                   max(distance_m, d_min_m), ad, tx_power_w)


def clamp_distance(d, d_min=1.0):
    return np.maximum(d, d_min)


# -- rewards --

def v2i_reward(red_bar, d_local):
    return red_bar * d_local


def cellular_reward(pd_th, d_local, t_persistent, cb, pd_bs):
    denom = cb + pd_bs
    if np.any(np.asarray(denom) <= 0):
        raise ValueError("cellular reward denominator must be positive")
    return np.minimum(1.0, (pd_th + d_local * t_persistent) / denom)


def p80211_reward(pd_th, t_persistent, ps, cb_11p, d_local, hrr, p_obstacle, pd_11p):
    num = pd_th * t_persistent
    with np.errstate(divide="ignore", invalid="ignore"):
        capacity = np.asarray(cb_11p * d_local * hrr, dtype=float)
        queue = np.where(np.asarray(p_obstacle) > 0, np.asarray(ps, dtype=float) / capacity * p_obstacle, 0.0)
    denom = queue + pd_11p
    if np.any(~np.isfinite(denom)) or np.any(np.asarray(denom) <= 0):
        raise ValueError("802.11p reward denominator is zero or undefined")
    return np.minimum(1.0, num / denom)


def reward_v2i(inputs: RewardInputs) -> float:
    if inputs.next_hop_kind is not NodeKind.BASE_STATION:
        return 0.0
    return float(v2i_reward(inputs.red_bar, inputs.d_local))


def reward_v2v(inputs: RewardInputs) -> float:
    if not inputs.next_hop_kind.is_edge:
        return 0.0
    return float(inputs.d_local)


def reward_cellular(inputs: RewardInputs) -> float:
    return float(cellular_reward(inputs.pd_th_ms, inputs.d_local, inputs.t_persistent_s,
                                 inputs.cb, inputs.pd_bs_ms))


def reward_80211p(inputs: RewardInputs) -> float:
    return float(p80211_reward(inputs.pd_th_ms, inputs.t_persistent_s, inputs.ps_bytes,
                               inputs.cb_11p, inputs.d_local, inputs.hrr,
                               inputs.p_obstacle, inputs.pd_11p_ms))


def select_reward(inputs: RewardInputs) -> float:
    """Red for traffic-intensive traffic, R-hat for delay-sensitive unicast."""
    to_bs = inputs.next_hop_kind is NodeKind.BASE_STATION
    if inputs.app_class is AppClass.TRAFFIC_INTENSIVE:
        return reward_v2i(inputs) if to_bs else reward_v2v(inputs)
    return reward_cellular(inputs) if to_bs else reward_80211p(inputs)


def red_bar(connected_vehicles, n_vehicles, hops=1, beta=0.5):
    """Base-station reward: density share, attenuated by beta per extra hop."""
    if n_vehicles <= 0:
        return 0.0
    return min(1.0, connected_vehicles / n_vehicles) * beta ** (hops - 1)


# -- energy and rate --

def local_power(bandwidth, cpu_freq, distance):
    return bandwidth * cpu_freq ** 2 / distance


def local_power_energy(model: EnergyModel) -> tuple[float, float]:
    p = local_power(model.bandwidth, model.cpu_freq_hz, model.distance_m)
    return p, p * model.dt_s


def local_data_amount(model: EnergyModel) -> float:
    return data_amount(model.cpu_freq_hz, model.dt_s, model.distance_m, model.ad)


def data_amount(cpu_freq, dt_s, distance, ad):
    return cpu_freq * dt_s / (distance * ad)


def cubic_energy(model: EnergyModel) -> float:
    """Distance-free CPU energy k1 * f^3 * dt used as the comparison baseline."""
    return model.k1 * model.cpu_freq_hz ** 3 * model.dt_s


def v2i_rate(bandwidth, tx_power, fading, noise, distance, exponent):
    """Shannon rate B log2(1 + p|h|^2 / (w0 d^theta)) in bits/s."""
    snr = tx_power * fading / (noise * np.power(distance, exponent))
    return bandwidth * np.log2(1.0 + snr)


def tx_energy(tx_power: float, dt_s: float) -> float:
    if tx_power < 0 or dt_s < 0:
        raise ValueError("power and duration must be non-negative")
    return tx_power * dt_s


def appendix_cellular_reward(pd_th, s_pkt, n_ue, cb_ul, cb_dl, pd_bs):
    """Uplink/downlink form of the cellular reward."""
    if cb_ul <= 0 or cb_dl <= 0:
        raise ValueError("bandwidths must be positive")
    denom = s_pkt * n_ue / cb_ul + s_pkt * n_ue / cb_dl + pd_bs
    if denom <= 0:
        raise ValueError("denominator must be positive")
    return min(1.0, pd_th / denom)


def appendix_80211p_reward(pd_th, s_pkt, cb_11p, hrr, pd_11p):
    return min(1.0, pd_th / (s_pkt / (cb_11p * hrr) + pd_11p))

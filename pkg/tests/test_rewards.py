import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from dsqlsim.core import AppClass, NodeKind
from dsqlsim.rewards import (DEFAULT_K1, EnergyModel, RewardInputs, appendix_80211p_reward,
                             appendix_cellular_reward, cubic_energy, data_amount,
                             local_data_amount, local_power_energy, red_bar, reward_80211p,
                             reward_cellular, reward_v2i, reward_v2v, select_reward, tx_energy,
                             v2i_rate)

BS, RSU, EDGE, VEH = NodeKind.BASE_STATION, NodeKind.RSU, NodeKind.EDGE_VEHICLE, NodeKind.VEHICLE
DS = AppClass.DELAY_SENSITIVE


def test_v2i_examples():
    assert reward_v2i(RewardInputs(BS, red_bar=0.5, d_local=2.0)) == 1.0
    assert reward_v2i(RewardInputs(VEH, red_bar=0.5, d_local=2.0)) == 0.0
    assert reward_v2i(RewardInputs(BS, red_bar=0.0, d_local=2.0)) == 0.0


def test_v2v_examples():
    assert reward_v2v(RewardInputs(EDGE, d_local=3.5)) == 3.5
    assert reward_v2v(RewardInputs(RSU, d_local=3.5)) == 3.5
    assert reward_v2v(RewardInputs(BS, d_local=3.5)) == 0.0
    assert reward_v2v(RewardInputs(VEH, d_local=3.5)) == 0.0


@pytest.mark.parametrize("pd_th, d, cb, pd_bs, expected", [
    (10, 0, 5, 5, 1.0), (1, 0, 99, 1, 0.01), (50, 10, 10, 10, 1.0)])
def test_cellular_examples(pd_th, d, cb, pd_bs, expected):
    r = reward_cellular(RewardInputs(BS, DS, d_local=d, pd_th_ms=pd_th, cb=cb, pd_bs_ms=pd_bs,
                                     t_persistent_s=1.0))
    assert r == expected


def test_cellular_denominator_error():
    with pytest.raises(ValueError):
        reward_cellular(RewardInputs(BS, DS, cb=-5.0, pd_bs_ms=5.0))


def test_80211p_examples():
    assert reward_80211p(RewardInputs(VEH, DS, pd_th_ms=10, t_persistent_s=1.0, p_obstacle=0.0,
                                      pd_11p_ms=10)) == 1.0
    r = reward_80211p(RewardInputs(VEH, DS, pd_th_ms=1, t_persistent_s=1, ps_bytes=8, cb_11p=2,
                                   d_local=2, hrr=1, p_obstacle=0.5, pd_11p_ms=1))
    # 8 / (2 * 2 * 1) * 0.5 + 1 = 2
    assert r == 0.5


def test_80211p_zero_capacity_error():
    with pytest.raises(ValueError):
        reward_80211p(RewardInputs(VEH, DS, d_local=0.0, p_obstacle=0.5))


pos = st.floats(1e-3, 1e3)


@given(pos, pos, pos, pos, pos, st.floats(0.01, 1), st.floats(0, 1), pos, st.floats(1.01, 10))
def test_80211p_monotone(pd_th, t, ps, cb, d, hrr, p_obs, pd11, k):
    base = dict(pd_th_ms=pd_th, t_persistent_s=t, ps_bytes=ps, cb_11p=cb, hrr=hrr, pd_11p_ms=pd11)
    lo = reward_80211p(RewardInputs(VEH, DS, d_local=d, p_obstacle=p_obs, **base))
    hi = reward_80211p(RewardInputs(VEH, DS, d_local=k * d, p_obstacle=p_obs, **base))
    assert 0.0 <= lo <= hi <= 1.0
    worse = reward_80211p(RewardInputs(VEH, DS, d_local=d, p_obstacle=min(1.0, k * p_obs), **base))
    assert worse <= lo


@given(pos, st.floats(0, 1e3), pos, pos, pos)
def test_cellular_in_unit_interval(pd_th, d, t, cb, pd_bs):
    r = reward_cellular(RewardInputs(BS, DS, d_local=d, pd_th_ms=pd_th, t_persistent_s=t, cb=cb,
                                     pd_bs_ms=pd_bs))
    assert 0.0 <= r <= 1.0


def test_select_reward_dispatch():
    ti_bs = RewardInputs(BS, red_bar=0.5, d_local=0.4)
    assert select_reward(ti_bs) == reward_v2i(ti_bs) == 0.2
    ti_edge = RewardInputs(EDGE, d_local=0.4)
    assert select_reward(ti_edge) == reward_v2v(ti_edge)
    ds_bs = RewardInputs(BS, DS, d_local=0.4, t_persistent_s=2.0)
    assert select_reward(ds_bs) == reward_cellular(ds_bs)
    ds_veh = RewardInputs(VEH, DS, d_local=0.4, t_persistent_s=2.0, p_obstacle=0.1, hrr=0.9)
    assert select_reward(ds_veh) == reward_80211p(ds_veh)


def test_red_bar():
    assert red_bar(25, 50) == 0.5
    assert red_bar(25, 50, hops=3, beta=0.5) == 0.125
    assert red_bar(80, 50) == 1.0
    assert red_bar(3, 0) == 0.0


def test_local_power_energy_examples():
    p, e = local_power_energy(EnergyModel(1.0, 2.0, 1.0, 4.0))
    assert (p, e) == (1.0, 1.0)
    assert local_power_energy(EnergyModel(1.0, 2.0, 0.0, 4.0))[1] == 0.0


def test_energy_ratio_hand_value():
    # B=1, f=2, d=4, k1=1: E = B f^2 dt / d = 1, E' = k1 f^3 dt = 8
    m = EnergyModel(1.0, 2.0, 1.0, 4.0, k1=1.0)
    assert local_power_energy(m)[1] / cubic_energy(m) == 0.125


@given(pos, pos, pos, pos, pos)
def test_energy_ratio_closed_form(b, f, dt, d, k1):
    m = EnergyModel(b, f, dt, d, k1=k1)
    ratio = local_power_energy(m)[1] / cubic_energy(m)
    assert ratio == pytest.approx(b / (d * k1 * f), rel=1e-12)


@given(pos, pos, pos, pos)
def test_energy_is_power_times_dt(b, f, dt, d):
    p, e = local_power_energy(EnergyModel(b, f, dt, d))
    assert e == p * dt


def test_data_amount_examples():
    assert local_data_amount(EnergyModel(1.0, 10.0, 2.0, 4.0, ad=5.0)) == 1.0
    assert local_data_amount(EnergyModel(1.0, 10.0, 0.0, 4.0, ad=5.0)) == 0.0
    assert data_amount(10.0, 2.0, 8.0, 5.0) == 0.5


@given(pos, pos, pos, pos)
def test_data_amount_halves_when_distance_doubles(f, dt, d, ad):
    assert data_amount(f, dt, 2 * d, ad) == pytest.approx(data_amount(f, dt, d, ad) / 2, rel=1e-15)


def test_from_si_scales_and_clamps():
    m = EnergyModel.from_si(10e6, 1.5e9, 0.01, 0.2, 1e-6, 0.2)
    assert (m.bandwidth, m.cpu_freq_hz, m.distance_m) == (10.0, 1.5, 1.0)
    assert m.k1 == DEFAULT_K1


def test_rate_examples():
    assert v2i_rate(1e6, 1.0, 1.0, 1.0, 1.0, 2.0) == 1e6
    # 1e6 * log2(101), evaluated independently
    assert v2i_rate(1e6, 1e-3, 1.0, 1e-9, 100.0, 2.0) == pytest.approx(6658211.482751795, rel=1e-12)


@given(st.floats(1e3, 1e8), st.floats(1e-3, 1.0), st.floats(1e-14, 1e-9), st.floats(1, 2000),
       st.floats(1.001, 2), st.floats(2, 4))
def test_rate_monotone(b, p, w, d, k, theta):
    r = v2i_rate(b, p, 1.0, w, d, theta)
    assume(r > 0 and v2i_rate(b, p, 1.0, w, k * d, theta) > 0)
    assert v2i_rate(b, p, 1.0, w, k * d, theta) < r
    assert v2i_rate(b, k * p, 1.0, w, d, theta) > r


@pytest.mark.parametrize("args, expected", [((2, 3), 6), ((0, 5), 0), ((5, 0), 0)])
def test_tx_energy(args, expected):
    assert tx_energy(*args) == expected


def test_tx_energy_negative():
    with pytest.raises(ValueError):
        tx_energy(-1.0, 1.0)


def test_appendix_cellular_examples():
    assert appendix_cellular_reward(10, 1, 1, 1, 1, 8) == 1.0
    assert appendix_cellular_reward(3, 1, 0, 1, 1, 6) == 0.5
    assert appendix_cellular_reward(1, 1e300, 1, 1, 1, 1) < 1e-299


@given(st.floats(0.1, 10), st.floats(1, 100), st.floats(1, 10), st.floats(1, 100),
       st.floats(1, 100), st.floats(50, 200), st.floats(0, 1), st.floats(0, 1), st.floats(50, 200))
def test_appendix_cellular_ratio(pd_th, s_pkt, n_ue, cb_ul, cb_dl, pd_bs, d, t, cb):
    r_hat = appendix_cellular_reward(pd_th, s_pkt, n_ue, cb_ul, cb_dl, pd_bs)
    r_red = reward_cellular(RewardInputs(BS, DS, d_local=d, pd_th_ms=pd_th, t_persistent_s=t,
                                         cb=cb, pd_bs_ms=pd_bs))
    assume(r_hat < 1 and r_red < 1)
    denom = s_pkt * n_ue / cb_ul + s_pkt * n_ue / cb_dl + pd_bs
    expected = (cb + pd_bs) / (denom * (1 + d * t / pd_th))
    assert r_hat / r_red == pytest.approx(expected, rel=1e-12)


def test_appendix_80211p_matches_main_form_without_obstacles():
    # with no obstacle loss and T = 1 the main form reduces to PD_th / PD_11p
    main = reward_80211p(RewardInputs(VEH, DS, pd_th_ms=2, t_persistent_s=1, pd_11p_ms=10))
    assert main == 0.2
    assert appendix_80211p_reward(2, 0.0, 27, 1.0, 10) == main
    assert appendix_80211p_reward(2, 27, 27, 0.5, 8) == 0.2

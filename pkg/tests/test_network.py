"""Power model, offload/reclaim bookkeeping, and capacity headroom."""

import math

import numpy as np
import pytest

from vhetnet.network import (
    BaseStation,
    Network,
    NetworkState,
    OffloadPolicy,
    PowerParams,
    Tier,
    bs_power,
    capacity_headroom,
    load_network,
    offload_to_macro,
    raw_traffic,
    reclaim_from_macro,
    save_network,
    total_power,
)

SBS_P = PowerParams(p_operational=100.0, pa_efficiency=4.0, p_transmit=20.0, p_sleep=30.0)


def small_network(num_sbs=1, c_sbs=100.0, c_mbs=500.0, c_haps=1000.0):
    stations = [
        BaseStation(id=100, tier=Tier.MBS, capacity=c_mbs,
                    power=PowerParams(130.0, 4.7, 20.0, 75.0), position=(0, 0)),
        BaseStation(id=101, tier=Tier.HAPS, capacity=c_haps,
                    power=PowerParams(200.0, 4.0, 500.0, 100.0), position=(0, 0)),
    ]
    for j in range(num_sbs):
        stations.append(
            BaseStation(id=j, tier=Tier.SBS, capacity=c_sbs, power=SBS_P, position=(0, j))
        )
    return Network(stations)


def state_of(network, loads, on=None, macro=0.0, haps=0.0):
    s = network.num_sbs
    on = (True,) * s if on is None else tuple(on)
    loads = tuple(l if o else 0.0 for l, o in zip(loads, on))
    return NetworkState(slot=0, switch_vector=on, sbs_loads=loads,
                        macro_load=macro, haps_load=haps)


class TestBsPower:
    def test_sleep_branch(self):
        assert bs_power(SBS_P, 0.0, is_on=False) == 30.0

    def test_full_load(self):
        # hand evaluation: 100 + 4 * 1 * 20
        assert bs_power(SBS_P, 1.0, is_on=True) == pytest.approx(180.0, rel=1e-12)

    def test_half_load(self):
        assert bs_power(SBS_P, 0.5, is_on=True) == pytest.approx(140.0, rel=1e-12)

    def test_load_ignored_when_off(self):
        assert bs_power(SBS_P, 0.7, is_on=False) == 30.0

    def test_load_out_of_range(self):
        with pytest.raises(ValueError):
            bs_power(SBS_P, 1.2, is_on=True)
        with pytest.raises(ValueError):
            bs_power(SBS_P, -0.1, is_on=True)

    def test_sleep_must_undercut_operational(self):
        with pytest.raises(ValueError):
            PowerParams(p_operational=50.0, pa_efficiency=1.0, p_transmit=10.0, p_sleep=50.0)


class TestOffloadReclaim:
    def test_zero_load_offload_is_noop_on_macros(self):
        net = small_network()
        st = state_of(net, [0.0], haps=0.2, macro=0.1)
        for policy in OffloadPolicy:
            out = offload_to_macro(st, 0, policy, net)
            assert out.haps_load == 0.2 and out.macro_load == 0.1
            assert out.sbs_loads[0] == 0.0 and not out.switch_vector[0]

    def test_all_to_haps_hand_value(self):
        # 0.3 + (100/1000) * 0.5 = 0.35
        net = small_network()
        st = state_of(net, [0.5], haps=0.3)
        out = offload_to_macro(st, 0, OffloadPolicy.ALL_TO_HAPS, net)
        assert out.haps_load == pytest.approx(0.35, rel=1e-12)
        assert out.macro_load == 0.0

    def test_proportional_conserves_raw_traffic(self):
        net = small_network()
        st = state_of(net, [0.4], haps=0.2, macro=0.5)
        before = raw_traffic(net, st)
        out = offload_to_macro(st, 0, OffloadPolicy.PROPORTIONAL_TO_HEADROOM, net)
        assert raw_traffic(net, out) == pytest.approx(before, rel=1e-12)
        # 40 raw units moved somewhere
        assert out.macro_load > 0.5 and out.haps_load > 0.2

    def test_unknown_sbs(self):
        net = small_network()
        st = state_of(net, [0.4])
        with pytest.raises(KeyError):
            offload_to_macro(st, 99, OffloadPolicy.ALL_TO_HAPS, net)

    def test_reclaim_zero_is_noop_on_macros(self):
        net = small_network()
        st = state_of(net, [0.0], on=[False], haps=0.4)
        out = reclaim_from_macro(st, 0, 0.0, OffloadPolicy.ALL_TO_HAPS, net)
        assert out.haps_load == 0.4
        assert out.switch_vector[0]

    def test_offload_reclaim_round_trip(self):
        net = small_network()
        st = state_of(net, [0.5], haps=0.3)
        off = offload_to_macro(st, 0, OffloadPolicy.ALL_TO_HAPS, net)
        back = reclaim_from_macro(off, 0, 0.5, OffloadPolicy.ALL_TO_HAPS, net)
        assert back.haps_load == pytest.approx(0.3, abs=1e-15)
        assert back.sbs_loads[0] == 0.5

    def test_reclaim_clamps_at_zero_with_warning(self):
        net = small_network()
        st = state_of(net, [0.0], on=[False], haps=0.02)  # carries only 20 raw units
        out = reclaim_from_macro(st, 0, 0.5, OffloadPolicy.ALL_TO_HAPS, net)
        assert out.haps_load == 0.0
        assert out.clamped

    def test_conservation_over_random_sequences(self):
        # property: sequences without clamping conserve lambda * C in total
        rng = np.random.default_rng(7)
        for trial in range(200):
            policy = list(OffloadPolicy)[trial % 3]
            net = small_network(num_sbs=4)
            st = state_of(net, rng.uniform(0.1, 0.9, size=4), macro=0.2, haps=0.2)
            before = raw_traffic(net, st)
            for _ in range(12):
                j = int(rng.integers(0, 4))
                if st.switch_vector[j]:
                    st = offload_to_macro(st, j, policy, net)
                else:
                    st = reclaim_from_macro(st, j, float(rng.uniform(0, 0.9)), policy, net)
                    if st.clamped:
                        break
            if st.clamped:
                continue
            assert raw_traffic(net, st) == pytest.approx(before, rel=1e-9)


class TestTotalPower:
    def test_all_off(self):
        net = small_network(num_sbs=3)
        st = state_of(net, [0, 0, 0], on=[False] * 3)
        # P_o terms of the always-on tiers plus three sleep powers
        assert total_power(net, st) == pytest.approx(200.0 + 130.0 + 90.0, rel=1e-12)

    def test_compositional_with_bs_power(self):
        net = small_network()
        st = state_of(net, [0.5], macro=0.25, haps=0.1)
        expected = (
            (200.0 + 4.0 * 0.1 * 500.0)
            + (130.0 + 4.7 * 0.25 * 20.0)
            + bs_power(SBS_P, 0.5, True)
        )
        assert total_power(net, st) == pytest.approx(expected, rel=1e-12)

    def test_equals_sum_of_parts_on_random_states(self):
        rng = np.random.default_rng(3)
        net = small_network(num_sbs=5)
        for _ in range(1000):
            on = rng.random(5) < 0.5
            loads = np.where(on, rng.random(5), 0.0)
            st = state_of(net, loads, on=on, macro=float(rng.random()),
                          haps=float(rng.random()))
            parts = (
                200.0 + 4.0 * st.haps_load * 500.0,
                130.0 + 4.7 * st.macro_load * 20.0,
                *(bs_power(b.power, l, o) for b, l, o
                  in zip(net.sbs, st.sbs_loads, st.switch_vector)),
            )
            assert total_power(net, st) == pytest.approx(sum(parts), rel=1e-12)

    def test_monotone_in_loads(self):
        net = small_network(num_sbs=2)
        lo = state_of(net, [0.2, 0.3], macro=0.1, haps=0.1)
        hi = state_of(net, [0.4, 0.5], macro=0.2, haps=0.3)
        assert total_power(net, hi) > total_power(net, lo)

    def test_sleep_dominance(self):
        net = small_network()
        on_idle = state_of(net, [0.0])
        off = state_of(net, [0.0], on=[False])
        assert total_power(net, on_idle) - total_power(net, off) == pytest.approx(
            SBS_P.p_operational - SBS_P.p_sleep, rel=1e-12
        )


class TestCapacityHeadroom:
    def test_baseline_point(self):
        # 20e6 * log2(1 + 10^2) at the 20 MHz / 20 dB reference setting
        value = capacity_headroom(1.0, 20e6, 20.0)
        assert value == pytest.approx(20e6 * math.log2(101.0), rel=1e-12)
        assert value == pytest.approx(133.2e6, rel=1e-3)

    def test_linear_in_m(self):
        assert capacity_headroom(2.0, 20e6, 20.0) == pytest.approx(
            2.0 * capacity_headroom(1.0, 20e6, 20.0), rel=1e-12
        )

    def test_vanishes_at_zero_sinr(self):
        assert capacity_headroom(1.0, 20e6, -400.0) == pytest.approx(0.0, abs=1e-3)

    def test_strictly_increasing(self):
        base = capacity_headroom(1.5, 10e6, 10.0)
        assert capacity_headroom(1.6, 10e6, 10.0) > base
        assert capacity_headroom(1.5, 11e6, 10.0) > base
        assert capacity_headroom(1.5, 10e6, 10.5) > base


class TestNetworkStateInvariants:
    def test_off_requires_zero_load(self):
        with pytest.raises(ValueError):
            NetworkState(slot=0, switch_vector=(False,), sbs_loads=(0.3,),
                         macro_load=0.0, haps_load=0.0)

    def test_feasibility_flag(self):
        net = small_network()
        assert state_of(net, [0.5], macro=1.0, haps=1.0).feasible
        assert not state_of(net, [0.5], macro=1.2).feasible

    def test_network_requires_one_mbs_one_haps(self):
        with pytest.raises(ValueError):
            Network([BaseStation(id=0, tier=Tier.SBS, capacity=10.0,
                                 power=SBS_P, position=(0, 0))])


def test_network_csv_round_trip(tmp_path):
    net = small_network(num_sbs=3)
    path = tmp_path / "net.csv"
    save_network(net, path)
    loaded = load_network(path)
    assert loaded.num_sbs == 3
    assert loaded.mbs.capacity == net.mbs.capacity
    for a, b in zip(loaded.sbs, net.sbs):
        assert (a.id, a.capacity, a.power, a.position) == (b.id, b.capacity, b.power, b.position)


def test_network_csv_rejects_bad_header(tmp_path):
    path = tmp_path / "net.csv"
    path.write_text("id,tier\n1,SBS\n")
    with pytest.raises(ValueError, match="header"):
        load_network(path)

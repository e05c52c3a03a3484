"""Partitioning, candidate pricing, exhaustive search (against an independent
enumerator), and the end-to-end per-slot loop."""

import itertools
import math

import numpy as np
import pytest

from vhetnet.estimators.runtime import DistanceLoadEstimator, OracleLoadEstimator
from vhetnet.network import (
    BaseStation,
    Network,
    NetworkState,
    OffloadPolicy,
    PowerParams,
    Tier,
    total_power,
)
from vhetnet.solar import AvailabilityProfile, BatteryState, SolarConfig
from vhetnet.switching import (
    CandidatePartition,
    ScenarioLabel,
    ScenarioPolicy,
    SearchSpaceError,
    es_optimize,
    evaluate_config,
    run_timeline,
    threshold_partition,
)
from vhetnet.traffic import synth_traffic

SBS_P = PowerParams(100.0, 4.0, 20.0, 30.0)
MBS_P = PowerParams(130.0, 4.7, 20.0, 75.0)
HAPS_P = PowerParams(200.0, 4.0, 500.0, 100.0)
CLEAR_SKY = SolarConfig(availability=AvailabilityProfile.constant(1.0))


def build_network(num_sbs, solar_ids=(), haps_power=HAPS_P, c_sbs=100.0):
    stations = [
        BaseStation(id=1000, tier=Tier.MBS, capacity=500.0, power=MBS_P, position=(0, 0)),
        BaseStation(id=1001, tier=Tier.HAPS, capacity=1000.0, power=haps_power, position=(0, 0)),
    ]
    for j in range(num_sbs):
        stations.append(
            BaseStation(
                id=j, tier=Tier.SBS, capacity=c_sbs, power=SBS_P, position=(0, j),
                solar=CLEAR_SKY if j in solar_ids else None,
            )
        )
    return Network(stations)


def state_of(network, loads, on=None, macro=0.0, haps=0.0, slot=-1):
    s = network.num_sbs
    on = (True,) * s if on is None else tuple(on)
    loads = tuple(l if o else 0.0 for l, o in zip(loads, on))
    return NetworkState(slot=slot, switch_vector=on, sbs_loads=loads,
                        macro_load=macro, haps_load=haps)


class TestScenarioPolicy:
    def test_endpoint_labels(self):
        assert ScenarioPolicy.scenario_1().label is ScenarioLabel.SCENARIO_1
        assert ScenarioPolicy.scenario_2().label is ScenarioLabel.SCENARIO_2
        assert ScenarioPolicy.from_gamma(0.5).label is ScenarioLabel.SCENARIO_3

    def test_inconsistent_label_rejected(self):
        with pytest.raises(ValueError):
            ScenarioPolicy(gamma=1.0, label=ScenarioLabel.SCENARIO_3)
        with pytest.raises(ValueError):
            ScenarioPolicy(gamma=0.5, label=ScenarioLabel.SCENARIO_1)

    def test_gamma_bounds(self):
        with pytest.raises(ValueError):
            ScenarioPolicy.from_gamma(1.2)


class TestThresholdPartition:
    def test_gamma_one_includes_everything(self):
        net = build_network(4, solar_ids={1, 3})
        batteries = {1: BatteryState(2.0, 2.0), 3: BatteryState(0.0, 2.0)}
        part = threshold_partition(net, batteries, ScenarioPolicy.scenario_1())
        assert sorted(part.searchable) == [0, 1, 2, 3]
        assert part.forced_on == ()

    def test_gamma_zero_forces_all_solar_on(self):
        net = build_network(4, solar_ids={1, 3})
        batteries = {1: BatteryState(0.0, 2.0), 3: BatteryState(0.0, 2.0)}
        part = threshold_partition(net, batteries, ScenarioPolicy.scenario_2())
        assert sorted(part.searchable) == [0, 2]
        assert sorted(part.forced_on) == [1, 3]

    def test_threshold_rule(self):
        net = build_network(2, solar_ids={0, 1})
        batteries = {0: BatteryState(0.6, 2.0), 1: BatteryState(1.4, 2.0)}  # rho 0.3, 0.7
        part = threshold_partition(net, batteries, ScenarioPolicy.from_gamma(0.5))
        assert part.searchable == (0,)
        assert part.forced_on == (1,)

    def test_zero_capacity_battery_rejected(self):
        net = build_network(1, solar_ids={0})
        with pytest.raises(ValueError):
            threshold_partition(net, {0: BatteryState(0.0, 0.0)},
                                ScenarioPolicy.scenario_1())

    def test_overlapping_partition_rejected(self):
        with pytest.raises(ValueError):
            CandidatePartition(searchable=(1, 2), forced_on=(2,))


class TestEvaluateConfig:
    def test_no_solar_grid_equals_total_power(self):
        net = build_network(3)
        prev = state_of(net, [0.2, 0.5, 0.7], macro=0.1, haps=0.2)
        ev = evaluate_config(net, [True] * 3, prev, [0.3, 0.4, 0.6], {}, 5, 10.0)
        assert ev.grid_power_w == ev.total_power_w
        assert ev.grid_power_w == pytest.approx(total_power(net, ev.state), rel=1e-12)
        assert ev.state.sbs_loads == (0.3, 0.4, 0.6)

    def test_infeasible_flagged_not_raised(self):
        net = build_network(2)
        prev = state_of(net, [0.9, 0.9], haps=0.95)
        ev = evaluate_config(net, [False, False], prev, [0.9, 0.9], {}, 0, 10.0)
        assert not ev.feasible
        assert ev.state.haps_load > 1.0

    def test_full_battery_zeroes_grid_share(self):
        net = build_network(1, solar_ids={0})
        prev = state_of(net, [0.5])
        batteries = {0: BatteryState(2.0, 2.0)}
        ev = evaluate_config(net, [True], prev, [0.5], batteries, 0, 10.0)
        # demand 140 W * (1/6) h = 0.02333 kWh fully covered by storage
        assert ev.breakdowns[0].grid == 0.0
        macro_only = (200.0 + 4.0 * 0.0 * 500.0) + (130.0 + 4.7 * 0.0 * 20.0)
        assert ev.grid_power_w == pytest.approx(macro_only, rel=1e-12)
        assert ev.batteries[0].stored < 2.0

    def test_renewable_disabled_all_grid(self):
        net = build_network(1, solar_ids={0})
        prev = state_of(net, [0.5])
        batteries = {0: BatteryState(2.0, 2.0)}
        ev = evaluate_config(net, [True], prev, [0.5], batteries, 60, 10.0,
                             renewable_enabled=False)
        assert ev.grid_power_w == ev.total_power_w
        assert ev.batteries == {}

    def test_sleep_demand_draws_renewable_first(self):
        net = build_network(1, solar_ids={0})
        prev = state_of(net, [0.0], on=[False])
        batteries = {0: BatteryState(1.0, 2.0)}
        ev = evaluate_config(net, [False], prev, [0.0], batteries, 0, 10.0)
        assert ev.breakdowns[0].grid == 0.0
        assert ev.batteries[0].stored == pytest.approx(1.0 - 30.0 / 6000.0, rel=1e-9)


def reference_enumerator(network, partition, prev_state, loads, batteries,
                         slot, slot_minutes, slots_per_day=144):
    """Independent brute-force reference: own transition and pricing
    arithmetic per the documented contract (ALL_TO_HAPS offloading,
    reclaims before offloads in ascending index, grid summed HAPS,
    MBS, then SBSs; clear-sky solar)."""
    sbs = network.sbs
    s = len(sbs)
    c_h = network.haps.capacity
    search = sorted(network.sbs_index(i) for i in partition.searchable)
    best = None
    count = 0
    for bits in itertools.product([False, True], repeat=len(search)):
        count += 1
        delta = [True] * s
        for b, idx in zip(bits, search):
            delta[idx] = b
        haps = prev_state.haps_load
        macro = prev_state.macro_load
        for idx in range(s):
            if delta[idx] and not prev_state.switch_vector[idx]:
                haps = haps - (loads[idx] * sbs[idx].capacity) / c_h
                if haps < 0.0:
                    haps = 0.0
        for idx in range(s):
            if not delta[idx] and prev_state.switch_vector[idx]:
                haps = haps + (prev_state.sbs_loads[idx] * sbs[idx].capacity) / c_h
        feasible = macro <= 1.0 and haps <= 1.0
        hp = network.haps.power
        mp = network.mbs.power
        grid = 0.0
        grid += hp.p_operational + hp.pa_efficiency * haps * hp.p_transmit
        grid += mp.p_operational + mp.pa_efficiency * macro * mp.p_transmit
        for idx in range(s):
            pp = sbs[idx].power
            if delta[idx]:
                p = pp.p_operational + pp.pa_efficiency * loads[idx] * pp.p_transmit
            else:
                p = pp.p_sleep
            if sbs[idx].solar is not None:
                cfg = sbs[idx].solar
                day_slot = slot % slots_per_day
                if cfg.peak_start <= day_slot <= cfg.peak_end:
                    eh = cfg.efficiency * cfg.capacity_kwh_per_hour * (slot_minutes / 60.0) * 1.0
                else:
                    eh = 0.0
                e = p * slot_minutes / 60000.0
                batt = batteries[sbs[idx].id]
                er = min(e, batt.stored + eh)
                grid += (e - er) * 60000.0 / slot_minutes
            else:
                grid += p
        if feasible:
            key = (grid, sum(delta), tuple(delta))
            if best is None or key < best[0]:
                best = (key, tuple(delta), grid)
    return best, count


class TestEsOptimize:
    def test_zero_searchable(self):
        net = build_network(2, solar_ids={0, 1})
        prev = state_of(net, [0.4, 0.4])
        batteries = {0: BatteryState(1.0, 2.0), 1: BatteryState(1.0, 2.0)}
        part = CandidatePartition(searchable=(), forced_on=(0, 1))
        res = es_optimize(net, part, prev, [0.4, 0.4], batteries, 0, 10.0)
        assert res.configs_evaluated == 1
        assert res.delta == (True, True)

    def test_single_sbs_hand_enumeration(self):
        # OFF saves P_o + eta*lam*P_t - P_s - eta_H*phi*lam*P_t_H
        # = 70 + 80*0.3 - 200*0.3 = 34 W at lam = 0.3: OFF must win
        net = build_network(1)
        prev = state_of(net, [0.3])
        part = CandidatePartition(searchable=(0,), forced_on=())
        res = es_optimize(net, part, prev, [0.3], {}, 0, 10.0)
        assert res.delta == (False,)
        assert res.feasible
        # at lam = 0.7 the offload marginal cost exceeds activation: ON wins
        prev = state_of(net, [0.7])
        res = es_optimize(net, part, prev, [0.7], {}, 0, 10.0)
        assert res.delta == (True,)

    def test_matches_independent_enumerator(self):
        rng = np.random.default_rng(42)
        for trial in range(25):
            solar_ids = set(int(i) for i in rng.choice(8, size=4, replace=False))
            net = build_network(8, solar_ids=solar_ids)
            on = rng.random(8) < 0.6
            loads_prev = np.where(on, rng.uniform(0.1, 0.9, 8), 0.0)
            prev = state_of(net, loads_prev, on=on,
                            macro=float(rng.uniform(0, 0.5)),
                            haps=float(rng.uniform(0, 0.6)))
            loads = rng.uniform(0.0, 0.9, 8)
            batteries = {
                j: BatteryState(float(rng.uniform(0, 2.0)), 2.0) for j in solar_ids
            }
            gamma = float(rng.choice([0.3, 0.7, 1.0]))
            part = threshold_partition(net, batteries, ScenarioPolicy.from_gamma(gamma))
            slot = int(rng.integers(0, 144))
            res = es_optimize(net, part, prev, loads, batteries, slot, 10.0)
            best, count = reference_enumerator(net, part, prev, loads, batteries, slot, 10.0)
            assert res.configs_evaluated == count
            assert best is not None
            assert res.delta == best[1]
            assert res.evaluation.grid_power_w == best[2]

    def test_tie_broken_by_more_off_then_lexicographic(self):
        # two identical zero-load SBSs: every config with the same ON count
        # prices identically; all-OFF must win
        net = build_network(2)
        prev = state_of(net, [0.0, 0.0])
        part = CandidatePartition(searchable=(0, 1), forced_on=())
        res = es_optimize(net, part, prev, [0.0, 0.0], {}, 0, 10.0)
        assert res.delta == (False, False)

    def test_no_feasible_returns_all_on(self):
        net = build_network(2)
        # previous state already infeasible; reclaiming cannot fix it
        prev = state_of(net, [0.0, 0.0], on=[False, False], haps=1.5)
        part = CandidatePartition(searchable=(0, 1), forced_on=())
        res = es_optimize(net, part, prev, [0.0, 0.0], {}, 0, 10.0)
        assert not res.feasible
        assert res.delta == (True, True)
        assert res.configs_evaluated == 4

    def test_search_cap(self):
        net = build_network(6)
        prev = state_of(net, [0.1] * 6)
        part = CandidatePartition(searchable=tuple(range(6)), forced_on=())
        with pytest.raises(SearchSpaceError, match="cap"):
            es_optimize(net, part, prev, [0.1] * 6, {}, 0, 10.0, search_cap=5)

    def test_peak_protection(self):
        # cheap HAPS link: switching off is always economical, so the macro
        # capacity constraint alone limits how many SBSs can sleep; scaling
        # all loads up must never increase the OFF count
        cheap_haps = PowerParams(200.0, 4.0, 20.0, 100.0)
        net = build_network(6, haps_power=cheap_haps)
        part = CandidatePartition(searchable=tuple(range(6)), forced_on=())
        prev_off = None
        for lam in (0.5, 0.6, 0.7, 0.8, 0.9, 1.0):
            prev = state_of(net, [lam] * 6, haps=0.6)
            res = es_optimize(net, part, prev, [lam] * 6, {}, 0, 10.0)
            n_off = sum(1 for d in res.delta if not d)
            assert res.feasible
            if prev_off is not None:
                assert n_off <= prev_off
            prev_off = n_off
        assert prev_off < 6


GAMMA_1 = ScenarioPolicy.scenario_1()


def make_trace_and_network(num_cells=16, days=1, seed=3, num_sbs=6, solar_fraction=0.5,
                           noise_sd=2.5):
    trace = synth_traffic(num_cells, days=days, seed=seed, noise_sd=noise_sd)
    pos = {cid: (r, c) for cid, r, c in trace.cells}
    rng = np.random.default_rng(seed + 1)
    sbs_cells = rng.choice(num_cells, size=num_sbs, replace=False)
    solar_count = int(round(solar_fraction * num_sbs))
    stations = [
        BaseStation(id=1000, tier=Tier.MBS, capacity=750.0, power=MBS_P, position=(0, 0)),
        BaseStation(id=1001, tier=Tier.HAPS, capacity=1500.0, power=HAPS_P, position=(0, 0)),
    ]
    for j, cell in enumerate(sbs_cells):
        stations.append(
            BaseStation(id=j, tier=Tier.SBS, capacity=150.0, power=SBS_P,
                        position=pos[cell],
                        solar=CLEAR_SKY if j < solar_count else None)
        )
    return trace, Network(stations)


def timelines_equal(a, b):
    if len(a.slots) != len(b.slots):
        return False
    for ra, rb in zip(a.slots, b.slots):
        if ra.switch_vector != rb.switch_vector:
            return False
        if ra.grid_power_w != rb.grid_power_w:
            return False
        if ra.feasible != rb.feasible:
            return False
    return True


class TestRunTimeline:
    def test_zero_traffic_all_off(self):
        trace = synth_traffic(9, days=1, seed=0, noise_sd=0.0, mean_level=0.0)
        pos = [(r, c) for _, r, c in trace.cells]
        stations = [
            BaseStation(id=100, tier=Tier.MBS, capacity=500.0, power=MBS_P, position=(0, 0)),
            BaseStation(id=101, tier=Tier.HAPS, capacity=1000.0, power=HAPS_P, position=(0, 0)),
            BaseStation(id=0, tier=Tier.SBS, capacity=100.0, power=SBS_P, position=pos[0]),
            BaseStation(id=1, tier=Tier.SBS, capacity=100.0, power=SBS_P, position=pos[1]),
        ]
        res = run_timeline(trace, Network(stations), OracleLoadEstimator(), GAMMA_1)
        assert not res.switch_matrix.any()
        assert all(r.feasible for r in res.slots)

    def test_oracle_self_consistency(self):
        trace, net = make_trace_and_network()
        a = run_timeline(trace, net, OracleLoadEstimator(), GAMMA_1, seed=0)
        b = run_timeline(trace, net, OracleLoadEstimator(), GAMMA_1, seed=0)
        assert timelines_equal(a, b)
        assert np.array_equal(a.switch_matrix, b.switch_matrix)

    def test_gamma_degeneracy_without_solar(self):
        trace, net = make_trace_and_network(solar_fraction=0.0)
        runs = [
            run_timeline(trace, net, OracleLoadEstimator(),
                         ScenarioPolicy.from_gamma(g), seed=0)
            for g in (0.0, 0.3, 1.0)
        ]
        assert timelines_equal(runs[0], runs[1])
        assert timelines_equal(runs[0], runs[2])

    def test_gamma_one_equals_all_searchable_override(self):
        trace, net = make_trace_and_network(solar_fraction=0.5)
        by_policy = run_timeline(trace, net, OracleLoadEstimator(), GAMMA_1, seed=0)
        override = CandidatePartition(
            searchable=tuple(b.id for b in net.sbs), forced_on=()
        )
        pinned = run_timeline(trace, net, OracleLoadEstimator(), GAMMA_1, seed=0,
                              partition_override=override)
        assert timelines_equal(by_policy, pinned)

    def test_gamma_zero_equals_solar_forced_on_override(self):
        trace, net = make_trace_and_network(solar_fraction=0.5)
        by_policy = run_timeline(trace, net, OracleLoadEstimator(),
                                 ScenarioPolicy.scenario_2(), seed=0)
        solar = set(net.solar_sbs_ids)
        override = CandidatePartition(
            searchable=tuple(b.id for b in net.sbs if b.id not in solar),
            forced_on=tuple(sorted(solar)),
        )
        pinned = run_timeline(trace, net, OracleLoadEstimator(),
                              ScenarioPolicy.scenario_2(), seed=0,
                              partition_override=override)
        assert timelines_equal(by_policy, pinned)

    def test_estimates_recorded_for_sleeping_only(self):
        trace, net = make_trace_and_network()
        res = run_timeline(trace, net, DistanceLoadEstimator(), GAMMA_1, seed=0)
        for prev, cur in zip(res.slots, res.slots[1:]):
            sleeping = {net.sbs[i].id for i, on in enumerate(prev.switch_vector) if not on}
            assert set(cur.estimates) == sleeping
        assert res.slots[0].estimates == {}  # everything starts ON

    def test_search_space_accounting(self):
        trace, net = make_trace_and_network(num_sbs=5, solar_fraction=0.0)
        res = run_timeline(trace, net, OracleLoadEstimator(), GAMMA_1, seed=0)
        assert all(r.configs_evaluated == 2**5 for r in res.slots)

    def test_missing_cell_rejected(self):
        trace, _ = make_trace_and_network()
        stations = [
            BaseStation(id=100, tier=Tier.MBS, capacity=500.0, power=MBS_P, position=(0, 0)),
            BaseStation(id=101, tier=Tier.HAPS, capacity=1000.0, power=HAPS_P, position=(0, 0)),
            BaseStation(id=0, tier=Tier.SBS, capacity=100.0, power=SBS_P, position=(50, 50)),
        ]
        with pytest.raises(KeyError, match="position"):
            run_timeline(trace, Network(stations), OracleLoadEstimator(), GAMMA_1)


class TestMisestimationFlipsDecision:
    """Constructed instance where a load underestimate flips the optimal
    vector and strictly increases realized grid power."""

    def test_flip_and_regret(self):
        net = build_network(1)
        prev = state_of(net, [0.0], on=[False], haps=0.3)
        part = CandidatePartition(searchable=(0,), forced_on=())
        lam_true, lam_est = 0.7, 0.4

        with_truth = es_optimize(net, part, prev, [lam_true], {}, 0, 10.0)
        with_est = es_optimize(net, part, prev, [lam_est], {}, 0, 10.0)
        assert with_truth.delta == (True,)   # wake it: 70 - 120*0.7 < 0
        assert with_est.delta == (False,)    # the underestimate keeps it asleep

        realized_opt = evaluate_config(net, with_truth.delta, prev, [lam_true], {}, 0, 10.0)
        realized_est = evaluate_config(net, with_est.delta, prev, [lam_true], {}, 0, 10.0)
        regret = realized_est.grid_power_w - realized_opt.grid_power_w
        assert regret == pytest.approx(120.0 * lam_true - 70.0, rel=1e-9)
        assert regret > 0.0

"""Renewable-aware ON/OFF switching: exhaustive search over SBS states under
macro-tier capacity constraints, and the end-to-end per-slot simulation loop.

Per slot the loop (i) estimates the loads of currently sleeping SBSs, (ii)
partitions solar SBSs in or out of the search space by state of charge,
(iii) exhaustively searches the remaining ON/OFF combinations for minimum
grid power, then commits the chosen configuration with measured loads
(estimates drive the decision; realized accounting uses the truth).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Mapping, Protocol, Sequence

import numpy as np

from .network import (
    Network,
    NetworkState,
    OffloadPolicy,
    active_power,
    offload_to_macro,
    reclaim_from_macro,
)
from .solar import BatteryState, EnergyBreakdown, demand_energy, harvest, step_storage, to_avg_power
from .traffic import TrafficTrace

logger = logging.getLogger(__name__)


class SearchSpaceError(ValueError):
    """Search space larger than the configured cap."""


class ScenarioLabel(str, Enum):
    SCENARIO_1 = "scenario_1"   # gamma = 1: all SBSs searchable
    SCENARIO_2 = "scenario_2"   # gamma = 0: all solar SBSs forced ON
    SCENARIO_3 = "scenario_3"   # threshold-based inclusion


@dataclass(frozen=True)
class ScenarioPolicy:
    """State-of-charge threshold governing which solar SBSs enter the search."""

    gamma: float
    label: ScenarioLabel

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")
        expected = (
            ScenarioLabel.SCENARIO_1 if self.gamma == 1.0
            else ScenarioLabel.SCENARIO_2 if self.gamma == 0.0
            else ScenarioLabel.SCENARIO_3
        )
        if self.label is not expected:
            raise ValueError(f"label {self.label} inconsistent with gamma={self.gamma}")

    @classmethod
    def from_gamma(cls, gamma: float) -> "ScenarioPolicy":
        label = (
            ScenarioLabel.SCENARIO_1 if gamma == 1.0
            else ScenarioLabel.SCENARIO_2 if gamma == 0.0
            else ScenarioLabel.SCENARIO_3
        )
        return cls(gamma=gamma, label=label)

    @classmethod
    def scenario_1(cls) -> "ScenarioPolicy":
        return cls.from_gamma(1.0)

    @classmethod
    def scenario_2(cls) -> "ScenarioPolicy":
        return cls.from_gamma(0.0)


@dataclass(frozen=True)
class CandidatePartition:
    """SBS ids inside the exhaustive search vs pinned ON."""

    searchable: tuple[int, ...]
    forced_on: tuple[int, ...]

    def __post_init__(self) -> None:
        if set(self.searchable) & set(self.forced_on):
            raise ValueError("searchable and forced_on must be disjoint")


def threshold_partition(
    network: Network,
    batteries: Mapping[int, BatteryState],
    policy: ScenarioPolicy,
) -> CandidatePartition:
    """Split SBSs by the state-of-charge rule: non-solar SBSs are always
    searchable; a solar SBS enters the search iff its charge ratio is at most
    gamma. gamma = 0 excludes every solar SBS regardless of charge, preserving
    the scenario-2 equivalence."""
    searchable: list[int] = []
    forced: list[int] = []
    for bs in network.sbs:
        if bs.solar is None:
            searchable.append(bs.id)
            continue
        batt = batteries[bs.id]
        if batt.capacity <= 0:
            raise ValueError(f"solar SBS {bs.id} has a zero-capacity battery")
        if policy.gamma == 0.0 or batt.charge_ratio > policy.gamma:
            forced.append(bs.id)
        else:
            searchable.append(bs.id)
    return CandidatePartition(searchable=tuple(searchable), forced_on=tuple(forced))


@dataclass(frozen=True)
class ConfigEval:
    """Outcome of pricing one candidate configuration.

    ``grid_power_w`` sums, in deterministic order (HAPS, MBS, SBSs by index),
    the grid-supplied average power of every BS; for solar SBSs only the grid
    share of their demand counts. ``state`` and ``batteries`` are the
    post-transition snapshots (batteries stepped on scratch copies).
    """

    grid_power_w: float
    total_power_w: float
    feasible: bool
    state: NetworkState
    breakdowns: dict[int, EnergyBreakdown]
    batteries: dict[int, BatteryState]


def evaluate_config(
    network: Network,
    delta: Sequence[bool],
    prev_state: NetworkState,
    loads: Sequence[float],
    batteries: Mapping[int, BatteryState],
    slot: int,
    slot_minutes: float,
    offload_policy: OffloadPolicy = OffloadPolicy.ALL_TO_HAPS,
    renewable_enabled: bool = True,
) -> ConfigEval:
    """Price one ON/OFF candidate from the previous committed state.

    Wake-ups are reclaimed first, then shut-downs offloaded (each pass in
    ascending SBS index); SBSs staying ON refresh to their current load.
    ``loads[idx]`` is the load factor to use for SBS idx this slot (measured
    for active SBSs, estimated for sleeping ones). With ``renewable_enabled``
    False all demand is grid-supplied and batteries are left untouched.
    """
    s = network.num_sbs
    if len(delta) != s or len(loads) != s:
        raise ValueError("delta and loads must have one entry per SBS")
    state = prev_state
    for idx in range(s):
        if delta[idx] and not prev_state.switch_vector[idx]:
            state = reclaim_from_macro(
                state, network.sbs[idx].id, loads[idx], offload_policy, network
            )
    for idx in range(s):
        if not delta[idx] and prev_state.switch_vector[idx]:
            state = offload_to_macro(state, network.sbs[idx].id, offload_policy, network)
    new_loads = tuple(loads[idx] if delta[idx] else 0.0 for idx in range(s))
    state = replace(
        state, slot=slot, switch_vector=tuple(bool(d) for d in delta), sbs_loads=new_loads
    )

    breakdowns: dict[int, EnergyBreakdown] = {}
    new_batteries: dict[int, BatteryState] = {}
    grid = 0.0
    total = 0.0
    for bs, load in ((network.haps, state.haps_load), (network.mbs, state.macro_load)):
        p = active_power(bs.power, load)
        e = demand_energy(p, slot_minutes)
        breakdowns[bs.id] = EnergyBreakdown(demand=e, harvested=0.0, renewable=0.0, grid=e)
        grid += p
        total += p
    for idx, bs in enumerate(network.sbs):
        p = active_power(bs.power, state.sbs_loads[idx]) if state.switch_vector[idx] else bs.power.p_sleep
        total += p
        e = demand_energy(p, slot_minutes)
        if renewable_enabled and bs.solar is not None:
            harvested = harvest(slot, bs.solar, slot_minutes)
            breakdown, new_batt = step_storage(batteries[bs.id], e, harvested)
            new_batteries[bs.id] = new_batt
            breakdowns[bs.id] = breakdown
            grid += to_avg_power(breakdown.grid, slot_minutes)
        else:
            breakdowns[bs.id] = EnergyBreakdown(demand=e, harvested=0.0, renewable=0.0, grid=e)
            grid += p
    return ConfigEval(
        grid_power_w=grid,
        total_power_w=total,
        feasible=state.feasible,
        state=state,
        breakdowns=breakdowns,
        batteries=new_batteries,
    )


@dataclass(frozen=True)
class EsResult:
    delta: tuple[bool, ...]
    evaluation: ConfigEval
    configs_evaluated: int
    feasible: bool


def es_optimize(
    network: Network,
    partition: CandidatePartition,
    prev_state: NetworkState,
    loads: Sequence[float],
    batteries: Mapping[int, BatteryState],
    slot: int,
    slot_minutes: float,
    offload_policy: OffloadPolicy = OffloadPolicy.ALL_TO_HAPS,
    renewable_enabled: bool = True,
    search_cap: int = 20,
) -> EsResult:
    """Exhaustively search all ON/OFF combinations of the searchable SBSs.

    Every forced-on SBS is pinned ON. Among feasible candidates the minimum
    grid power wins, with ties broken by more SBSs OFF and then by the
    lexicographically smallest switch vector. If nothing is feasible the
    all-ON configuration is returned with ``feasible`` False.
    """
    s = network.num_sbs
    search_idx = sorted(network.sbs_index(i) for i in partition.searchable)
    forced_idx = sorted(network.sbs_index(i) for i in partition.forced_on)
    if sorted(search_idx + forced_idx) != list(range(s)):
        raise ValueError("partition must cover every SBS exactly once")
    k = len(search_idx)
    if k > search_cap:
        raise SearchSpaceError(
            f"{k} searchable SBSs would require {2**k} configurations "
            f"(cap {search_cap}); use a smaller instance or raise the cap"
        )
    best_key: tuple | None = None
    best: tuple[tuple[bool, ...], ConfigEval] | None = None
    all_on: tuple[tuple[bool, ...], ConfigEval] | None = None
    n_configs = 2**k
    for mask in range(n_configs):
        delta = [True] * s
        for b in range(k):
            delta[search_idx[b]] = bool((mask >> b) & 1)
        delta_t = tuple(delta)
        ev = evaluate_config(
            network, delta_t, prev_state, loads, batteries, slot, slot_minutes,
            offload_policy, renewable_enabled,
        )
        if mask == n_configs - 1:
            all_on = (delta_t, ev)
        if ev.feasible:
            key = (ev.grid_power_w, sum(delta_t), delta_t)
            if best_key is None or key < best_key:
                best_key = key
                best = (delta_t, ev)
    if best is not None:
        return EsResult(
            delta=best[0], evaluation=best[1],
            configs_evaluated=n_configs, feasible=True,
        )
    assert all_on is not None
    return EsResult(
        delta=all_on[0], evaluation=all_on[1],
        configs_evaluated=n_configs, feasible=False,
    )


# --- per-slot loop ----------------------------------------------------------------


@dataclass(frozen=True)
class SlotResult:
    """One committed slot: estimates, chosen configuration, and realized
    power/energy accounting (measured loads, not the estimates)."""

    slot: int
    estimates: dict[int, float]
    switch_vector: tuple[bool, ...]
    grid_power_w: float
    total_power_w: float
    breakdowns: dict[int, EnergyBreakdown]
    feasible: bool
    configs_evaluated: int
    battery_kwh: dict[int, float]
    downgraded: bool = False


@dataclass
class TimelineResult:
    slots: list[SlotResult]
    network: Network
    downgrades: int = 0
    clamp_events: int = 0

    @property
    def switch_matrix(self) -> np.ndarray:
        return np.asarray([r.switch_vector for r in self.slots], dtype=bool)

    @property
    def grid_power(self) -> np.ndarray:
        return np.asarray([r.grid_power_w for r in self.slots])

    @property
    def total_power(self) -> np.ndarray:
        return np.asarray([r.total_power_w for r in self.slots])


class LoadEstimator(Protocol):
    """Phase-I estimator plugged into the timeline.

    ``estimate`` may return a subset of the requested cells; the runner fills
    the gaps with the distance fallback (logged as a downgrade).
    """

    def estimate(self, ctx: "EstimationContext") -> dict[int, float]: ...


@dataclass
class EstimationContext:
    """What an estimator may see at decision time.

    Cells are indexed by trace-cell position in ``positions``/``current``/
    ``history``; ``sleeping`` and ``active`` are cell indices. ``current``
    holds this slot's measured loads (estimators must only read active
    entries; the oracle diagnostic reads sleeping ones too). ``history`` holds
    loads up to the previous slot: measured where observable, otherwise the
    estimates previously committed.
    """

    slot: int
    slots_per_day: int
    positions: np.ndarray
    current: np.ndarray
    history: np.ndarray
    sleeping: tuple[int, ...]
    active: tuple[int, ...]
    seed: int


def run_timeline(
    trace: TrafficTrace,
    network: Network,
    estimator: LoadEstimator,
    policy: ScenarioPolicy,
    offload_policy: OffloadPolicy = OffloadPolicy.ALL_TO_HAPS,
    seed: int = 0,
    start_slot: int = 0,
    num_slots: int | None = None,
    renewable_enabled: bool = True,
    battery_capacity_kwh: float = 2.0,
    initial_charge_kwh: float = 0.0,
    initial_macro_load: float = 0.0,
    initial_haps_load: float = 0.0,
    cell_capacity: float | None = None,
    search_cap: int = 20,
    partition_override: CandidatePartition | None = None,
) -> TimelineResult:
    """Run the two-phase loop over a slice of the trace.

    Each SBS is mapped to the trace cell at its grid position; all remaining
    trace cells act as always-active neighbor cells for the spatial
    estimators. ``cell_capacity`` normalizes neighbor-cell traffic (defaults
    to the mean SBS capacity so both live in one load-factor space).
    Deterministic for a fixed seed. ``partition_override`` pins a static
    partition instead of the per-slot threshold rule (diagnostics only).
    """
    from .estimators.runtime import DistanceFallback

    s = network.num_sbs
    slot_minutes = trace.slot_minutes
    total_slots = trace.total_slots
    if num_slots is None:
        num_slots = total_slots - start_slot
    if start_slot < 0 or start_slot + num_slots > total_slots:
        raise ValueError("requested slots fall outside the trace")

    pos_index = trace.index_by_position()
    sbs_cell: list[int] = []
    for bs in network.sbs:
        key = (int(round(bs.position[0])), int(round(bs.position[1])))
        if key not in pos_index:
            raise KeyError(f"trace has no cell at SBS position {key}")
        sbs_cell.append(pos_index[key])
    if cell_capacity is None:
        cell_capacity = float(np.mean([bs.capacity for bs in network.sbs]))

    # measured loads: per-SBS in its own capacity, per-cell in context capacity
    sbs_loads = np.empty((s, total_slots))
    for i, bs in enumerate(network.sbs):
        sbs_loads[i] = np.minimum(trace.series[sbs_cell[i]] / bs.capacity, 1.0)
    ctx_loads = np.minimum(trace.series / cell_capacity, 1.0)
    positions = np.asarray([(r, c) for _, r, c in trace.cells], dtype=float)
    cell_of = {bs.id: sbs_cell[i] for i, bs in enumerate(network.sbs)}
    sbs_of_cell = {sbs_cell[i]: i for i in range(s)}

    history = ctx_loads.copy()  # entries at >= current slot are overwritten as the run commits
    fallback = DistanceFallback()

    batteries: dict[int, BatteryState] = {
        bs.id: BatteryState(stored=initial_charge_kwh, capacity=battery_capacity_kwh)
        for bs in network.sbs
        if bs.solar is not None
    }
    prev_state = NetworkState(
        slot=start_slot - 1,
        switch_vector=(True,) * s,
        sbs_loads=tuple(sbs_loads[:, start_slot]),
        macro_load=initial_macro_load,
        haps_load=initial_haps_load,
    )

    results: list[SlotResult] = []
    downgrades = 0
    clamp_events = 0
    for t in range(start_slot, start_slot + num_slots):
        sleeping_idx = [i for i in range(s) if not prev_state.switch_vector[i]]
        sleeping_cells = tuple(sbs_cell[i] for i in sleeping_idx)
        active_cells = tuple(
            c for c in range(trace.num_cells) if c not in set(sleeping_cells)
        )
        estimates_ctx: dict[int, float] = {}
        downgraded = False
        if sleeping_cells:
            ctx = EstimationContext(
                slot=t,
                slots_per_day=trace.slots_per_day,
                positions=positions,
                current=ctx_loads[:, t],
                history=history[:, :t],
                sleeping=sleeping_cells,
                active=active_cells,
                seed=seed,
            )
            try:
                estimates_ctx = dict(estimator.estimate(ctx))
            except Exception as exc:  # estimator could not run at all
                logger.warning("slot %d: estimator failed (%s); falling back", t, exc)
                estimates_ctx = {}
            missing = [c for c in sleeping_cells if c not in estimates_ctx]
            if missing:
                downgraded = True
                downgrades += 1
                logger.info(
                    "slot %d: distance fallback for %d sleeping cells", t, len(missing)
                )
                filled = fallback.estimate(replace_ctx_sleeping(ctx, tuple(missing)))
                for c in missing:
                    if c in filled:
                        estimates_ctx[c] = filled[c]
                    else:  # no active cells anywhere: hold the last known value
                        estimates_ctx[c] = float(history[c, t - 1]) if t > 0 else 0.0

        decision_loads = list(sbs_loads[:, t])
        estimates_sbs: dict[int, float] = {}
        for i in sleeping_idx:
            bs = network.sbs[i]
            est = estimates_ctx[sbs_cell[i]] * cell_capacity / bs.capacity
            est = float(min(1.0, max(0.0, est)))
            estimates_sbs[bs.id] = est
            decision_loads[i] = est

        if partition_override is not None:
            partition = partition_override
        elif renewable_enabled:
            partition = threshold_partition(network, batteries, policy)
        else:
            partition = CandidatePartition(
                searchable=tuple(bs.id for bs in network.sbs), forced_on=()
            )
        es = es_optimize(
            network, partition, prev_state, decision_loads, batteries, t,
            slot_minutes, offload_policy, renewable_enabled, search_cap,
        )
        realized = evaluate_config(
            network, es.delta, prev_state, sbs_loads[:, t], batteries, t,
            slot_minutes, offload_policy, renewable_enabled,
        )
        batteries = {**batteries, **realized.batteries}
        if realized.state.clamped and not prev_state.clamped:
            clamp_events += 1

        for i in range(s):
            cell = sbs_cell[i]
            if es.delta[i]:
                history[cell, t] = ctx_loads[cell, t]
            elif cell in estimates_ctx:
                history[cell, t] = estimates_ctx[cell]
            elif t > 0:
                history[cell, t] = history[cell, t - 1]
            else:
                history[cell, t] = 0.0

        results.append(
            SlotResult(
                slot=t,
                estimates=estimates_sbs,
                switch_vector=es.delta,
                grid_power_w=realized.grid_power_w,
                total_power_w=realized.total_power_w,
                breakdowns=realized.breakdowns,
                feasible=realized.feasible,
                configs_evaluated=es.configs_evaluated,
                battery_kwh={bid: b.stored for bid, b in batteries.items()},
                downgraded=downgraded,
            )
        )
        prev_state = realized.state
    return TimelineResult(
        slots=results, network=network, downgrades=downgrades, clamp_events=clamp_events
    )


def replace_ctx_sleeping(ctx: EstimationContext, sleeping: tuple[int, ...]) -> EstimationContext:
    return EstimationContext(
        slot=ctx.slot,
        slots_per_day=ctx.slots_per_day,
        positions=ctx.positions,
        current=ctx.current,
        history=ctx.history,
        sleeping=sleeping,
        active=ctx.active,
        seed=ctx.seed,
    )

"""Network topology, affine BS power model, and macro-tier load offloading.

The power model is the standard affine active-power form P_o + eta * lambda * P_t
with a distinct sleep power P_s. The macro and HAPS tiers are always active;
only SBSs carry an ON/OFF state. All types are immutable; the operations are
pure functions returning new states.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .solar import SolarConfig


class Tier(str, Enum):
    SBS = "SBS"
    MBS = "MBS"
    HAPS = "HAPS"


class OffloadPolicy(str, Enum):
    """How the raw traffic of a switched-off SBS is split across the macro tier."""

    ALL_TO_HAPS = "all_to_haps"
    ALL_TO_MBS = "all_to_mbs"
    PROPORTIONAL_TO_HEADROOM = "proportional_to_headroom"


@dataclass(frozen=True)
class PowerParams:
    """Affine power-model parameters of one BS (all watts except the slope)."""

    p_operational: float
    pa_efficiency: float
    p_transmit: float
    p_sleep: float

    def __post_init__(self) -> None:
        for name in ("p_operational", "pa_efficiency", "p_transmit", "p_sleep"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        # sleeping must cost less than idle-active, else switching is never beneficial
        if self.p_sleep >= self.p_operational:
            raise ValueError(
                f"p_sleep ({self.p_sleep}) must be < p_operational ({self.p_operational})"
            )


# EARTH-typical defaults; HAPS is modelled as an always-on macro-class BS with a
# large transmit power reflecting its wide-area links. All overridable per run.
DEFAULT_SBS_POWER = PowerParams(p_operational=100.0, pa_efficiency=4.0, p_transmit=20.0, p_sleep=30.0)
DEFAULT_MBS_POWER = PowerParams(p_operational=130.0, pa_efficiency=4.7, p_transmit=20.0, p_sleep=75.0)
DEFAULT_HAPS_POWER = PowerParams(p_operational=200.0, pa_efficiency=4.0, p_transmit=500.0, p_sleep=100.0)

DEFAULT_SBS_CAPACITY = 100.0
DEFAULT_MBS_CAPACITY = 500.0
DEFAULT_HAPS_CAPACITY = 1000.0


@dataclass(frozen=True)
class BaseStation:
    """One base station; ``position`` is (row, col) in grid-cell coordinates."""

    id: int
    tier: Tier
    capacity: float
    power: PowerParams
    position: tuple[float, float]
    solar: SolarConfig | None = None

    def __post_init__(self) -> None:
        if self.capacity <= 0:
            raise ValueError(f"capacity must be > 0, got {self.capacity}")
        if self.tier is not Tier.SBS and self.solar is not None:
            raise ValueError("only SBSs can be solar-capable")


class Network:
    """A macro cell: exactly one MBS, one HAPS, and any number of SBSs."""

    def __init__(self, stations: Iterable[BaseStation]):
        stations = list(stations)
        mbs = [b for b in stations if b.tier is Tier.MBS]
        haps = [b for b in stations if b.tier is Tier.HAPS]
        if len(mbs) != 1 or len(haps) != 1:
            raise ValueError(
                f"network needs exactly one MBS and one HAPS, got {len(mbs)} / {len(haps)}"
            )
        self.mbs: BaseStation = mbs[0]
        self.haps: BaseStation = haps[0]
        self.sbs: tuple[BaseStation, ...] = tuple(
            sorted((b for b in stations if b.tier is Tier.SBS), key=lambda b: b.id)
        )
        ids = [b.id for b in stations]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate BS ids")
        self._sbs_index = {b.id: i for i, b in enumerate(self.sbs)}

    @property
    def num_sbs(self) -> int:
        return len(self.sbs)

    @property
    def solar_sbs_ids(self) -> tuple[int, ...]:
        return tuple(b.id for b in self.sbs if b.solar is not None)

    def sbs_index(self, sbs_id: int) -> int:
        try:
            return self._sbs_index[sbs_id]
        except KeyError:
            raise KeyError(f"unknown SBS id {sbs_id}") from None

    def phi(self, sbs_id: int, tier: Tier) -> float:
        """Relative capacity ratio C_sbs / C_macro used by offload bookkeeping."""
        sbs = self.sbs[self.sbs_index(sbs_id)]
        target = self.haps if tier is Tier.HAPS else self.mbs
        return sbs.capacity / target.capacity


@dataclass(frozen=True)
class NetworkState:
    """Loads and ON/OFF states at one time slot.

    Macro-tier loads may exceed 1 pre-feasibility; ``feasible`` is the
    capacity check. ``clamped`` flags that a reclaim had to clamp a macro
    load at 0 (model inconsistency, surfaced rather than raised).
    """

    slot: int
    switch_vector: tuple[bool, ...]
    sbs_loads: tuple[float, ...]
    macro_load: float
    haps_load: float
    clamped: bool = False

    def __post_init__(self) -> None:
        if len(self.switch_vector) != len(self.sbs_loads):
            raise ValueError("switch_vector and sbs_loads must be the same length")
        for on, lam in zip(self.switch_vector, self.sbs_loads):
            if not on and lam != 0.0:
                raise ValueError("a switched-off SBS must carry zero load")
            if not 0.0 <= lam <= 1.0:
                raise ValueError(f"SBS load {lam} outside [0, 1]")
        if self.macro_load < 0 or self.haps_load < 0:
            raise ValueError("macro-tier loads must be >= 0")

    @property
    def feasible(self) -> bool:
        return self.macro_load <= 1.0 and self.haps_load <= 1.0


def active_power(params: PowerParams, load: float) -> float:
    """Active-mode affine power term; intentionally valid for load > 1 so
    infeasible macro states can still be priced."""
    return params.p_operational + params.pa_efficiency * load * params.p_transmit


def bs_power(params: PowerParams, load: float, is_on: bool) -> float:
    """Electrical power (W) of one BS: active affine term when ON, P_s when OFF."""
    if not is_on:
        return params.p_sleep
    if not 0.0 <= load <= 1.0:
        raise ValueError(f"load {load} outside [0, 1]")
    return active_power(params, load)


def total_power(network: Network, state: NetworkState) -> float:
    """Total instantaneous power (W): HAPS + MBS (always active) + all SBS terms."""
    total = active_power(network.haps.power, state.haps_load)
    total += active_power(network.mbs.power, state.macro_load)
    for bs, on, lam in zip(network.sbs, state.switch_vector, state.sbs_loads):
        total += active_power(bs.power, lam) if on else bs.power.p_sleep
    return total


def capacity_headroom(m: float, bandwidth_hz: float, sinr_db: float) -> float:
    """Shannon capacity m * B * log2(1 + linear SINR), in bits/s.

    ``m`` is the bandwidth scaling factor relative to the baseline; larger m
    offsets SINR degradation on long links.
    """
    if m <= 0:
        raise ValueError("m must be > 0")
    if bandwidth_hz <= 0:
        raise ValueError("bandwidth must be > 0")
    return m * bandwidth_hz * math.log2(1.0 + 10.0 ** (sinr_db / 10.0))


def _offload_split(
    policy: OffloadPolicy, raw: float, state: NetworkState, network: Network
) -> tuple[float, float]:
    """Split raw offloaded traffic into (to_mbs, to_haps); the parts sum to raw exactly."""
    if policy is OffloadPolicy.ALL_TO_HAPS:
        return 0.0, raw
    if policy is OffloadPolicy.ALL_TO_MBS:
        return raw, 0.0
    headroom_m = max(0.0, (1.0 - state.macro_load)) * network.mbs.capacity
    headroom_h = max(0.0, (1.0 - state.haps_load)) * network.haps.capacity
    total = headroom_m + headroom_h
    if total <= 0.0:
        # both tiers saturated: split by capacity share; the caller's
        # feasibility check will reject the resulting state anyway
        total = network.mbs.capacity + network.haps.capacity
        to_m = raw * network.mbs.capacity / total
        return to_m, raw - to_m
    to_m = raw * headroom_m / total
    return to_m, raw - to_m


def _reclaim_split(
    policy: OffloadPolicy, raw: float, state: NetworkState, network: Network
) -> tuple[float, float]:
    """Mirror of the offload split: (from_mbs, from_haps) summing to raw exactly.

    The proportional policy takes back in proportion to the raw traffic each
    macro tier currently carries, which conserves traffic without tracking
    per-SBS shares.
    """
    if policy is OffloadPolicy.ALL_TO_HAPS:
        return 0.0, raw
    if policy is OffloadPolicy.ALL_TO_MBS:
        return raw, 0.0
    carried_m = state.macro_load * network.mbs.capacity
    carried_h = state.haps_load * network.haps.capacity
    total = carried_m + carried_h
    if total <= 0.0:
        total = network.mbs.capacity + network.haps.capacity
        from_m = raw * network.mbs.capacity / total
        return from_m, raw - from_m
    from_m = raw * carried_m / total
    return from_m, raw - from_m


def offload_to_macro(
    state: NetworkState, sbs_id: int, policy: OffloadPolicy, network: Network
) -> NetworkState:
    """Switch one SBS off, moving its raw traffic onto the macro tier.

    The SBS load drops to 0 and the macro-tier load factors rise so that the
    raw traffic lambda * C is absorbed in full according to ``policy``.
    """
    idx = network.sbs_index(sbs_id)
    lam = state.sbs_loads[idx]
    raw = lam * network.sbs[idx].capacity
    to_m, to_h = _offload_split(policy, raw, state, network)
    loads = list(state.sbs_loads)
    onoff = list(state.switch_vector)
    loads[idx] = 0.0
    onoff[idx] = False
    return replace(
        state,
        switch_vector=tuple(onoff),
        sbs_loads=tuple(loads),
        macro_load=state.macro_load + to_m / network.mbs.capacity,
        haps_load=state.haps_load + to_h / network.haps.capacity,
    )


def reclaim_from_macro(
    state: NetworkState,
    sbs_id: int,
    next_load: float,
    policy: OffloadPolicy,
    network: Network,
) -> NetworkState:
    """Switch one SBS back on with ``next_load``, taking traffic back from the macro tier.

    Macro loads are clamped at 0 (with ``clamped`` set on the result) if the
    subtraction would go negative; this keeps sweeps running while surfacing
    model inconsistencies.
    """
    if not 0.0 <= next_load <= 1.0:
        raise ValueError(f"next_load {next_load} outside [0, 1]")
    idx = network.sbs_index(sbs_id)
    raw = next_load * network.sbs[idx].capacity
    from_m, from_h = _reclaim_split(policy, raw, state, network)
    new_m = state.macro_load - from_m / network.mbs.capacity
    new_h = state.haps_load - from_h / network.haps.capacity
    clamped = state.clamped
    if new_m < 0.0:
        new_m = 0.0
        clamped = True
    if new_h < 0.0:
        new_h = 0.0
        clamped = True
    loads = list(state.sbs_loads)
    onoff = list(state.switch_vector)
    loads[idx] = next_load
    onoff[idx] = True
    return replace(
        state,
        switch_vector=tuple(onoff),
        sbs_loads=tuple(loads),
        macro_load=new_m,
        haps_load=new_h,
        clamped=clamped,
    )


def raw_traffic(network: Network, state: NetworkState) -> float:
    """Total raw traffic (load * capacity summed over all BSs); conserved by
    offload/reclaim sequences that never clamp."""
    total = state.macro_load * network.mbs.capacity
    total += state.haps_load * network.haps.capacity
    for bs, lam in zip(network.sbs, state.sbs_loads):
        total += lam * bs.capacity
    return total


# --- network description file -------------------------------------------------

NETWORK_CSV_HEADER = [
    "id", "tier", "capacity",
    "p_operational", "pa_efficiency", "p_transmit", "p_sleep",
    "row", "col", "solar",
]


def save_network(network: Network, path: str | Path) -> None:
    """Write the network description CSV (see README for the schema)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(NETWORK_CSV_HEADER)
        for bs in (network.haps, network.mbs, *network.sbs):
            writer.writerow(
                [
                    bs.id,
                    bs.tier.value,
                    f"{bs.capacity:.9g}",
                    f"{bs.power.p_operational:.9g}",
                    f"{bs.power.pa_efficiency:.9g}",
                    f"{bs.power.p_transmit:.9g}",
                    f"{bs.power.p_sleep:.9g}",
                    f"{bs.position[0]:.9g}",
                    f"{bs.position[1]:.9g}",
                    "yes" if bs.solar is not None else "no",
                ]
            )


def load_network(path: str | Path, solar_config: SolarConfig | None = None) -> Network:
    """Load a network description CSV; ``solar_config`` is attached to every
    BS whose solar column is yes (defaults apply when omitted)."""
    solar_config = solar_config or SolarConfig()
    stations: list[BaseStation] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != NETWORK_CSV_HEADER:
            raise ValueError(f"{path}: expected header {','.join(NETWORK_CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                tier = Tier(row["tier"].strip().upper())
                solar = row["solar"].strip().lower()
                if solar not in ("yes", "no"):
                    raise ValueError(f"solar must be yes/no, got {solar!r}")
                stations.append(
                    BaseStation(
                        id=int(row["id"]),
                        tier=tier,
                        capacity=float(row["capacity"]),
                        power=PowerParams(
                            p_operational=float(row["p_operational"]),
                            pa_efficiency=float(row["pa_efficiency"]),
                            p_transmit=float(row["p_transmit"]),
                            p_sleep=float(row["p_sleep"]),
                        ),
                        position=(float(row["row"]), float(row["col"])),
                        solar=solar_config if (tier is Tier.SBS and solar == "yes") else None,
                    )
                )
            except (KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from exc
    return Network(stations)


def synthetic_network(
    sbs_positions: Sequence[tuple[float, float]],
    solar_fraction: float = 0.0,
    seed: int = 0,
    sbs_capacity: float = DEFAULT_SBS_CAPACITY,
    sbs_power: PowerParams = DEFAULT_SBS_POWER,
    mbs_power: PowerParams = DEFAULT_MBS_POWER,
    haps_power: PowerParams = DEFAULT_HAPS_POWER,
    solar_config: SolarConfig | None = None,
) -> Network:
    """Build a default-parameter network with SBSs at the given grid cells.

    Macro capacities scale with the SBS capacity preserving the default
    SBS << MBS < HAPS ordering. ``solar_fraction`` of the SBSs (rounded,
    chosen deterministically from ``seed``) are solar-capable.
    """
    import numpy as np

    n = len(sbs_positions)
    if n == 0:
        raise ValueError("need at least one SBS position")
    rng = np.random.default_rng(seed)
    n_solar = int(round(solar_fraction * n))
    solar_ids = set(rng.choice(n, size=n_solar, replace=False).tolist()) if n_solar else set()
    scale = sbs_capacity / DEFAULT_SBS_CAPACITY
    center = (
        sum(p[0] for p in sbs_positions) / n,
        sum(p[1] for p in sbs_positions) / n,
    )
    solar_config = solar_config or SolarConfig()
    stations = [
        BaseStation(
            id=n, tier=Tier.MBS, capacity=DEFAULT_MBS_CAPACITY * scale,
            power=mbs_power, position=center,
        ),
        BaseStation(
            id=n + 1, tier=Tier.HAPS, capacity=DEFAULT_HAPS_CAPACITY * scale,
            power=haps_power, position=center,
        ),
    ]
    for i, pos in enumerate(sbs_positions):
        stations.append(
            BaseStation(
                id=i, tier=Tier.SBS, capacity=sbs_capacity, power=sbs_power,
                position=(float(pos[0]), float(pos[1])),
                solar=solar_config if i in solar_ids else None,
            )
        )
    return Network(stations)

"""Solar harvesting, battery storage dynamics, and renewable/grid energy split.

All quantities are per-time-slot energies in kWh. Power <-> energy conversions
use the slot length in hours (slot_minutes / 60).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence


class AvailabilityKind(str, Enum):
    CONSTANT = "constant"
    SINUSOIDAL = "sinusoidal"
    TRACE = "trace"


@dataclass(frozen=True)
class AvailabilityProfile:
    """Time-varying solar availability alpha(t) in [0, 1].

    CONSTANT uses a fixed value (1.0 reproduces clear-sky conditions),
    SINUSOIDAL is a half sine over the peak window peaking at its midpoint,
    TRACE looks values up from a per-day-slot series.
    """

    kind: AvailabilityKind = AvailabilityKind.SINUSOIDAL
    value: float = 1.0
    series: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.kind is AvailabilityKind.CONSTANT and not 0.0 <= self.value <= 1.0:
            raise ValueError(f"constant availability must be in [0, 1], got {self.value}")
        if self.kind is AvailabilityKind.TRACE:
            if not self.series:
                raise ValueError("TRACE availability requires a non-empty series")
            if any(not 0.0 <= a <= 1.0 for a in self.series):
                raise ValueError("TRACE availability values must be in [0, 1]")

    @classmethod
    def constant(cls, value: float = 1.0) -> "AvailabilityProfile":
        return cls(kind=AvailabilityKind.CONSTANT, value=value)

    @classmethod
    def sinusoidal(cls) -> "AvailabilityProfile":
        return cls(kind=AvailabilityKind.SINUSOIDAL)

    @classmethod
    def trace(cls, series: Sequence[float]) -> "AvailabilityProfile":
        return cls(kind=AvailabilityKind.TRACE, series=tuple(float(a) for a in series))

    def alpha(self, day_slot: int, peak_start: int, peak_end: int) -> float:
        if self.kind is AvailabilityKind.CONSTANT:
            return self.value
        if self.kind is AvailabilityKind.TRACE:
            return self.series[day_slot % len(self.series)]
        # half sine across the peak window, 1.0 at the midpoint
        span = peak_end - peak_start
        if span <= 0:
            return 0.0
        return math.sin(math.pi * (day_slot - peak_start) / span)


@dataclass(frozen=True)
class SolarConfig:
    """Photovoltaic panel and peak-window parameters of a solar-capable SBS.

    ``capacity_kwh_per_hour`` is the maximum harvestable energy per hour under
    clear-sky peak conditions; ``peak_start``/``peak_end`` are day-slot indices
    (defaults correspond to 08:00 and 18:00 with 10-minute slots).
    """

    efficiency: float = 0.95
    capacity_kwh_per_hour: float = 0.5
    peak_start: int = 48
    peak_end: int = 108
    availability: AvailabilityProfile = field(default_factory=AvailabilityProfile.sinusoidal)

    def __post_init__(self) -> None:
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError(f"efficiency must be in [0, 1], got {self.efficiency}")
        if self.capacity_kwh_per_hour < 0:
            raise ValueError("solar capacity must be >= 0")
        if self.peak_start >= self.peak_end:
            raise ValueError(
                f"peak window is empty: start={self.peak_start} end={self.peak_end}"
            )


@dataclass(frozen=True)
class BatteryState:
    """Stored energy and capacity of one battery, both in kWh."""

    stored: float
    capacity: float

    def __post_init__(self) -> None:
        if self.capacity < 0:
            raise ValueError("battery capacity must be >= 0")
        if not 0.0 <= self.stored <= self.capacity:
            raise ValueError(
                f"stored energy {self.stored} outside [0, {self.capacity}]"
            )

    @property
    def charge_ratio(self) -> float:
        """State-of-charge ratio in [0, 1]; 0 for a zero-capacity battery."""
        if self.capacity == 0:
            return 0.0
        return self.stored / self.capacity


@dataclass(frozen=True)
class EnergyBreakdown:
    """One slot's energy accounting for a single BS (kWh).

    ``renewable + grid`` reproduces ``demand`` to floating-point rounding
    (grid is computed as the exact remainder demand - renewable).
    """

    demand: float
    harvested: float
    renewable: float
    grid: float


def harvest(slot: int, cfg: SolarConfig, slot_minutes: float, slots_per_day: int | None = None) -> float:
    """Harvested solar energy (kWh) for one slot.

    Inside the peak window [peak_start, peak_end] (inclusive, in day-slot
    indices) the panel yields efficiency * capacity * slot_hours * alpha(t);
    outside it yields 0. ``slot`` may span multiple days and is folded onto
    the day via ``slots_per_day`` (derived from the slot length by default).
    """
    if slot_minutes <= 0:
        raise ValueError("slot_minutes must be positive")
    if slots_per_day is None:
        slots_per_day = max(1, round(24 * 60 / slot_minutes))
    day_slot = slot % slots_per_day
    if not cfg.peak_start <= day_slot <= cfg.peak_end:
        return 0.0
    alpha = cfg.availability.alpha(day_slot, cfg.peak_start, cfg.peak_end)
    return cfg.efficiency * cfg.capacity_kwh_per_hour * (slot_minutes / 60.0) * alpha


def step_storage(
    batt: BatteryState, demand: float, harvested: float
) -> tuple[EnergyBreakdown, BatteryState]:
    """Advance one battery by one slot.

    Renewable use is capped by what is stored plus what was harvested this
    slot; the remainder of the demand is drawn from the grid. The new stored
    level saturates at the battery capacity and is floored at 0 against
    rounding noise.
    """
    if demand < 0 or harvested < 0:
        raise ValueError("demand and harvested energy must be >= 0")
    renewable = min(demand, batt.stored + harvested)
    grid = demand - renewable
    new_stored = min(batt.capacity, batt.stored + harvested - renewable)
    if new_stored < 0.0:
        new_stored = 0.0
    breakdown = EnergyBreakdown(
        demand=demand, harvested=harvested, renewable=renewable, grid=grid
    )
    return breakdown, BatteryState(stored=new_stored, capacity=batt.capacity)


def demand_energy(power_watts: float, slot_minutes: float) -> float:
    """Electrical energy (kWh) consumed at ``power_watts`` over one slot."""
    if slot_minutes <= 0:
        raise ValueError("slot_minutes must be positive")
    return power_watts * slot_minutes / 60000.0


def to_avg_power(energy_kwh: float, slot_minutes: float) -> float:
    """Average power (W) corresponding to ``energy_kwh`` over one slot."""
    if slot_minutes <= 0:
        raise ValueError("slot_minutes must be positive")
    return energy_kwh * 60000.0 / slot_minutes

"""Solar harvesting, storage dynamics, and energy/power conversions."""

import numpy as np
import pytest

from vhetnet.solar import (
    AvailabilityProfile,
    BatteryState,
    SolarConfig,
    demand_energy,
    harvest,
    step_storage,
    to_avg_power,
)

CLEAR_SKY = SolarConfig(availability=AvailabilityProfile.constant(1.0))


class TestHarvest:
    def test_outside_peak_window(self):
        assert harvest(0, CLEAR_SKY, 10.0) == 0.0
        assert harvest(143, CLEAR_SKY, 10.0) == 0.0

    def test_reference_value(self):
        # 0.95 * 0.5 * (10/60) * 1 at the default panel settings
        value = harvest(78, CLEAR_SKY, 10.0)
        assert value == 0.95 * 0.5 * (10.0 / 60.0)
        assert value == pytest.approx(0.0791666667, rel=1e-9)

    def test_zero_availability(self):
        cfg = SolarConfig(availability=AvailabilityProfile.constant(0.0))
        assert harvest(78, cfg, 10.0) == 0.0

    def test_multi_day_slots_fold_onto_the_day(self):
        assert harvest(78 + 144, CLEAR_SKY, 10.0) == harvest(78, CLEAR_SKY, 10.0)

    def test_sinusoidal_peaks_at_midpoint(self):
        cfg = SolarConfig()  # default sinusoidal availability
        mid = (cfg.peak_start + cfg.peak_end) // 2
        values = [harvest(t, cfg, 10.0) for t in range(cfg.peak_start, cfg.peak_end + 1)]
        assert max(values) == pytest.approx(harvest(mid, cfg, 10.0), rel=1e-6)
        assert harvest(cfg.peak_start, cfg, 10.0) == pytest.approx(0.0, abs=1e-12)

    def test_window_bounds_inclusive(self):
        assert harvest(CLEAR_SKY.peak_start, CLEAR_SKY, 10.0) > 0.0
        assert harvest(CLEAR_SKY.peak_end, CLEAR_SKY, 10.0) > 0.0
        assert harvest(CLEAR_SKY.peak_start - 1, CLEAR_SKY, 10.0) == 0.0
        assert harvest(CLEAR_SKY.peak_end + 1, CLEAR_SKY, 10.0) == 0.0


class TestStepStorage:
    def test_no_renewable_available(self):
        bd, batt = step_storage(BatteryState(0.0, 2.0), demand=0.1, harvested=0.0)
        assert bd.renewable == 0.0 and bd.grid == 0.1
        assert batt.stored == 0.0

    def test_battery_covers_demand(self):
        bd, batt = step_storage(BatteryState(1.0, 2.0), demand=0.1, harvested=0.0)
        assert bd.renewable == pytest.approx(0.1, rel=1e-12)
        assert bd.grid == 0.0
        assert batt.stored == pytest.approx(0.9, rel=1e-12)

    def test_saturation_at_capacity(self):
        bd, batt = step_storage(BatteryState(1.9, 2.0), demand=0.0, harvested=0.3)
        assert batt.stored == 2.0
        assert bd.renewable == 0.0 and bd.grid == 0.0

    def test_energy_balance_on_random_inputs(self):
        rng = np.random.default_rng(11)
        batt = BatteryState(0.0, 2.0)
        for _ in range(5000):
            demand = float(rng.uniform(0, 0.5))
            harvested = float(rng.uniform(0, 0.2))
            bd, batt = step_storage(batt, demand, harvested)
            assert bd.renewable + bd.grid == pytest.approx(demand, rel=1e-12)
            assert bd.renewable <= batt.capacity + harvested + 1e-12
            assert 0.0 <= batt.stored <= batt.capacity

    def test_depletion_falls_back_to_grid(self):
        batt = BatteryState(0.0, 2.0)
        total_grid = 0.0
        total_demand = 0.0
        for _ in range(100):
            bd, batt = step_storage(batt, demand=0.05, harvested=0.0)
            total_grid += bd.grid
            total_demand += bd.demand
        assert total_grid == pytest.approx(total_demand, rel=1e-12)

    def test_non_solar_semantics(self):
        # zero-capacity battery and zero harvest: everything from the grid
        bd, batt = step_storage(BatteryState(0.0, 0.0), demand=0.2, harvested=0.0)
        assert bd.renewable == 0.0 and bd.grid == 0.2
        assert batt.stored == 0.0


class TestConversions:
    def test_reference_value(self):
        assert demand_energy(600.0, 10.0) == pytest.approx(0.1, rel=1e-12)

    def test_zero(self):
        assert demand_energy(0.0, 10.0) == 0.0

    def test_round_trip(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            watts = float(rng.uniform(0, 5000))
            minutes = float(rng.uniform(1, 60))
            back = to_avg_power(demand_energy(watts, minutes), minutes)
            assert back == pytest.approx(watts, rel=1e-12)


class TestValidation:
    def test_battery_bounds(self):
        with pytest.raises(ValueError):
            BatteryState(stored=3.0, capacity=2.0)
        with pytest.raises(ValueError):
            BatteryState(stored=-0.1, capacity=2.0)

    def test_solar_config_bounds(self):
        with pytest.raises(ValueError):
            SolarConfig(efficiency=1.5)
        with pytest.raises(ValueError):
            SolarConfig(peak_start=100, peak_end=50)

    def test_availability_bounds(self):
        with pytest.raises(ValueError):
            AvailabilityProfile.constant(1.2)
        with pytest.raises(ValueError):
            AvailabilityProfile.trace([0.5, 1.3])

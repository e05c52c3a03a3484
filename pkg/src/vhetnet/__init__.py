"""Two-phase cell-switching toolkit for vertical heterogeneous networks:
sleeping-cell traffic load estimation (Phase I) and renewable-energy-aware
exhaustive-search ON/OFF optimization (Phase II)."""

from .network import (
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
    synthetic_network,
    total_power,
)
from .solar import (
    AvailabilityProfile,
    BatteryState,
    EnergyBreakdown,
    SolarConfig,
    demand_energy,
    harvest,
    step_storage,
    to_avg_power,
)
from .switching import (
    CandidatePartition,
    EsResult,
    ScenarioLabel,
    ScenarioPolicy,
    SearchSpaceError,
    SlotResult,
    TimelineResult,
    es_optimize,
    evaluate_config,
    run_timeline,
    threshold_partition,
)
from .traffic import (
    PreprocessConfig,
    TrafficTrace,
    WindowSet,
    load_cdr_csv,
    make_windows,
    normalize_loads,
    read_trace_csv,
    split_windows,
    synth_traffic,
    write_trace_csv,
    zscore_filter,
)
from .metrics import (
    ErrorDirection,
    decision_change_rate,
    empirical_p_err,
    expected_error_power,
    expected_power,
    mape,
    nes,
)

__version__ = "0.1.0"

"""Experiment pipelines behind the CLI subcommands: trace/network assembly,
the Monte Carlo estimation study, scenario switching runs, and report
aggregation. All outputs are deterministic for a fixed config + seed."""

from __future__ import annotations

import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, worker_count
from .estimators import (
    DistanceConfig,
    LstmConfig,
    MlcConfig,
    build_estimator,
    elbow_select_g,
    estimate_distance,
    lstm_predict_next,
    lstm_train,
    mlc_estimate,
    train_lstm_models,
)
from .metrics import mape, nes
from .network import Network, OffloadPolicy, load_network, synthetic_network
from .report import (
    read_metrics_csv,
    read_timeline_csv,
    save_line_chart,
    write_battery_csv,
    write_mape_csv,
    write_metrics_csv,
    write_scenario_csv,
    write_timeline_csv,
)
from .solar import AvailabilityProfile, SolarConfig
from .switching import ScenarioPolicy, run_timeline
from .traffic import (
    TrafficTrace,
    hourly_profile,
    load_cdr_csv,
    make_windows,
    normalize_loads,
    read_trace_csv,
    split_windows,
    synth_traffic,
    write_trace_csv,
    zscore_filter,
)

logger = logging.getLogger(__name__)

DISTANCE_SWEEP_N = tuple(range(4, 44, 4))
DISTANCE_SWEEP_EXP = (3.0, 5.0)
MLC_SWEEP_LEVELS = (1, 2, 3, 4)
LSTM_SWEEP_WINDOWS = (4, 8, 12)
LSTM_SWEEP_UNITS = (5, 10, 20)


def solar_config_from(cfg: ExperimentConfig) -> SolarConfig:
    if cfg.availability.startswith("constant:"):
        value = float(cfg.availability.split(":", 1)[1])
        profile = AvailabilityProfile.constant(value)
    else:
        profile = AvailabilityProfile.sinusoidal()
    return SolarConfig(
        efficiency=cfg.solar_efficiency,
        capacity_kwh_per_hour=cfg.solar_capacity_kwh,
        peak_start=cfg.peak_start_slot,
        peak_end=cfg.peak_end_slot,
        availability=profile,
    )


def build_trace(cfg: ExperimentConfig) -> TrafficTrace:
    if cfg.traffic == "cdr":
        return load_cdr_csv(cfg.cdr_path)
    if cfg.traffic == "trace":
        return read_trace_csv(cfg.trace_path)
    return synth_traffic(
        cfg.cells, cfg.days, cfg.seed,
        spatial_corr_length=cfg.corr_length,
        noise_sd=cfg.noise_sd,
        mean_level=cfg.mean_level,
        diurnal_depth=cfg.diurnal_depth,
    )


def build_network(cfg: ExperimentConfig, trace: TrafficTrace,
                  solar_fraction: float | None = None) -> Network:
    solar = solar_config_from(cfg)
    if cfg.network:
        return load_network(cfg.network, solar_config=solar)
    if cfg.sbs_count > trace.num_cells:
        raise ConfigError("sbs_count", f"only {trace.num_cells} trace cells available")
    rng = np.random.default_rng(cfg.seed + 1)
    chosen = rng.choice(trace.num_cells, size=cfg.sbs_count, replace=False)
    positions = [(trace.cells[i][1], trace.cells[i][2]) for i in chosen]
    fraction = cfg.solar_fraction if solar_fraction is None else solar_fraction
    return synthetic_network(
        positions,
        solar_fraction=fraction,
        seed=cfg.seed + 2,
        sbs_capacity=cfg.capacity,
        solar_config=solar,
    )


def preprocessed_loads(cfg: ExperimentConfig, trace: TrafficTrace) -> tuple[np.ndarray, int, int]:
    """Per-cell z-score filtering then capacity normalization.

    Returns (loads, outliers_replaced, samples_clipped).
    """
    filtered = np.empty_like(trace.series)
    removed = 0
    for i in range(trace.num_cells):
        filtered[i], n = zscore_filter(trace.series[i], cfg.zscore_threshold)
        removed += n
    clean = TrafficTrace(
        slots_per_day=trace.slots_per_day, num_days=trace.num_days,
        cells=trace.cells, series=filtered, missing_slots=trace.missing_slots,
    )
    loads, clipped = normalize_loads(clean, cfg.capacity)
    return loads, removed, clipped


# --- estimate -----------------------------------------------------------------


def _estimate_sweep_settings(cfg: ExperimentConfig) -> list[tuple[str, float, float]]:
    if cfg.sweep == "distance":
        return [("dist", float(n), e) for e in DISTANCE_SWEEP_EXP for n in DISTANCE_SWEEP_N]
    if cfg.sweep == "mlc":
        return [("mlc", float(l), 0.0) for l in MLC_SWEEP_LEVELS]
    if cfg.sweep == "lstm":
        return [("lstm", float(w), float(u)) for w in LSTM_SWEEP_WINDOWS for u in LSTM_SWEEP_UNITS]
    if cfg.estimator == "dist":
        return [("dist", float(cfg.neighbor_count), cfg.exponent)]
    if cfg.estimator == "mlc":
        return [("mlc", float(cfg.levels), float(cfg.clusters))]
    if cfg.estimator == "lstm":
        return [("lstm", float(cfg.window), float(cfg.units))]
    raise ConfigError("estimator", "oracle has no estimation error to sweep")


def cmd_estimate(cfg: ExperimentConfig) -> list[Path]:
    """Monte Carlo sleeping-cell estimation study.

    Each trial treats one randomly chosen cell as unobserved at one test
    slot; spatial settings are evaluated on the same trial slots (paired
    comparison), LSTM settings on the trial cell's own test windows (each
    window size keeps its own shuffled train/test split to avoid leakage).
    Writes ``mape_sweep.csv`` and ``mape_sweep.svg``.
    """
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    trace = build_trace(cfg)
    loads, removed, clipped = preprocessed_loads(cfg, trace)
    settings = _estimate_sweep_settings(cfg)
    needs_lstm = any(name == "lstm" for name, _, _ in settings)
    has_mlc = any(name == "mlc" for name, _, _ in settings)

    max_window = max(
        [int(a) for name, a, _ in settings if name == "lstm"] + [cfg.window]
    )
    if trace.total_slots <= max_window + 1:
        raise ConfigError("days", "trace too short for the requested window")

    rng = np.random.default_rng(cfg.seed)
    if needs_lstm:
        trial_cells = sorted(
            int(i) for i in rng.choice(
                trace.num_cells, size=min(cfg.lstm_cells_cap, trace.num_cells),
                replace=False,
            )
        )
    else:
        trial_cells = list(range(trace.num_cells))

    # spatial trial slots come from one shared per-cell split (shuffled
    # within each cell)
    shared_splits: dict[int, tuple] = {}
    for c in trial_cells:
        ws = make_windows(loads[c], max_window, cell_id=c)
        shared_splits[c] = split_windows(ws, cfg.train_fraction, cfg.seed + c)
    trials: list[tuple[int, int]] = []
    for _ in range(cfg.trials):
        c = int(rng.choice(trial_cells))
        trials.append((c, int(rng.integers(0, len(shared_splits[c][1])))))

    positions = np.asarray([(r, col) for _, r, col in trace.cells], dtype=float)
    spd = trace.slots_per_day

    # per-(cell, window, units) forecasters trained on their own splits
    lstm_models: dict[tuple[int, int, int], object] = {}
    lstm_tests: dict[tuple[int, int], object] = {}
    for name, a, b in settings:
        if name != "lstm":
            continue
        window, units = int(a), int(b)
        for c in trial_cells:
            ws = make_windows(loads[c], window, cell_id=c)
            train, test = split_windows(ws, cfg.train_fraction, cfg.seed + c)
            lstm_tests[(c, window)] = test
            lcfg = LstmConfig(
                units=units, window=window, learning_rate=cfg.learning_rate,
                epochs=cfg.epochs, batch_size=cfg.batch_size, seed=cfg.seed + c,
            )
            lstm_models[(c, window, units)], _ = lstm_train(train, lcfg)

    # static per-cell summary profiles over the training prefix; the cluster
    # count is fixed once per run (elbow) unless configured explicitly
    mlc_g = cfg.clusters
    profiles = None
    if has_mlc:
        prefix = min(trace.total_slots, max(spd, int(trace.total_slots * cfg.train_fraction)))
        profiles = np.stack(
            [hourly_profile(loads[i, :prefix], spd) for i in range(trace.num_cells)]
        )
        if mlc_g == 0:
            mlc_g = elbow_select_g(profiles, g_max=min(8, trace.num_cells),
                                   restarts=cfg.restarts, seed=cfg.seed).g

    def run_trial(trial_index: int) -> dict[tuple, tuple[float, float]]:
        cell, widx = trials[trial_index]
        _, shared_test = shared_splits[cell]
        target_slot = shared_test.provenance[widx][1]
        actual = float(loads[cell, target_slot])
        results: dict[tuple, tuple[float, float]] = {}
        active = None
        for name, a, b in settings:
            if name == "dist":
                if active is None:
                    active = [
                        (tuple(positions[i]), float(loads[i, target_slot]))
                        for i in range(trace.num_cells)
                        if i != cell
                    ]
                pred = estimate_distance(
                    tuple(positions[cell]), active,
                    DistanceConfig(neighbor_count=int(a), exponent=b),
                )
                results[(name, a, b)] = (actual, pred)
            elif name == "mlc":
                current = {
                    i: float(loads[i, target_slot])
                    for i in range(trace.num_cells) if i != cell
                }
                res = mlc_estimate(
                    ids=list(range(trace.num_cells)), features=profiles,
                    loads=current, sleeping=[cell],
                    cfg=MlcConfig(levels=int(a), clusters=mlc_g, restarts=cfg.restarts),
                    seed=cfg.seed + trial_index,
                )
                results[(name, a, b)] = (actual, res.estimates[cell])
            else:
                test = lstm_tests[(cell, int(a))]
                j = widx % len(test)
                model = lstm_models[(cell, int(a), int(b))]
                pred = lstm_predict_next(model, test.inputs[j])
                results[(name, a, b)] = (float(test.targets[j]), pred)
        return results

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        per_trial = list(pool.map(run_trial, range(cfg.trials)))

    rows = []
    for key in settings:
        actuals = [r[key][0] for r in per_trial]
        preds = [r[key][1] for r in per_trial]
        value, guarded = mape(actuals, preds)
        rows.append((key[0], key[1], key[2], value, guarded, cfg.trials))

    csv_path = out / "mape_sweep.csv"
    write_mape_csv(rows, csv_path)
    svg_path = out / "mape_sweep.svg"
    _mape_figure(rows, svg_path)
    logger.info(
        "estimate: %d trials, %d settings, %d outliers replaced, %d loads clipped",
        cfg.trials, len(settings), removed, clipped,
    )
    return [csv_path, svg_path]


def _mape_figure(rows, path) -> None:
    by_b: dict[tuple[str, float], list[tuple[float, float]]] = {}
    for name, a, b, value, _, _ in rows:
        by_b.setdefault((name, b), []).append((a, value))
    series = []
    for (name, b), points in sorted(by_b.items()):
        points.sort()
        label = name if len(by_b) == 1 else f"{name} ({b:g})"
        series.append((label, [p[0] for p in points], [p[1] for p in points]))
    save_line_chart(path, series, xlabel="setting (param_a)", ylabel="MAPE [%]",
                    title="Sleeping-cell load estimation error")


# --- switch -------------------------------------------------------------------


def _run_pair(cfg: ExperimentConfig, trace, network, start_slot, num_slots, gamma):
    """One scenario run plus the renewable-disabled baseline on one network."""
    estimator = _make_estimator(cfg, trace, network, start_slot)
    common = dict(
        trace=trace, network=network, estimator=estimator,
        offload_policy=OffloadPolicy(cfg.offload), seed=cfg.seed,
        start_slot=start_slot, num_slots=num_slots,
        battery_capacity_kwh=cfg.battery_kwh,
        initial_charge_kwh=cfg.initial_charge_kwh,
        cell_capacity=cfg.capacity, search_cap=cfg.es_cap,
    )
    scenario = run_timeline(policy=ScenarioPolicy.from_gamma(gamma), **common)
    baseline = run_timeline(
        policy=ScenarioPolicy.from_gamma(gamma), renewable_enabled=False, **common
    )
    return scenario, baseline


def _make_estimator(cfg: ExperimentConfig, trace, network, start_slot):
    if cfg.estimator == "lstm":
        pos_index = trace.index_by_position()
        cells = []
        for bs in network.sbs:
            key = (int(round(bs.position[0])), int(round(bs.position[1])))
            cells.append(pos_index[key])
        models = {}
        if start_slot > cfg.window + 1:
            ctx_loads = np.minimum(trace.series / cfg.capacity, 1.0)
            lcfg = LstmConfig(
                units=cfg.units, window=cfg.window, learning_rate=cfg.learning_rate,
                epochs=cfg.epochs, batch_size=cfg.batch_size, seed=cfg.seed,
            )
            models = train_lstm_models(ctx_loads[:, :start_slot], cells, lcfg)
        return build_estimator("lstm", lstm_models=models)
    return build_estimator(
        cfg.estimator,
        distance_cfg=DistanceConfig(neighbor_count=cfg.neighbor_count, exponent=cfg.exponent),
        mlc_cfg=MlcConfig(
            levels=cfg.levels, clusters=cfg.clusters or None, restarts=cfg.restarts,
        ),
    )


def cmd_switch(cfg: ExperimentConfig) -> list[Path]:
    """Scenario switching run(s) with the renewable-disabled NES baseline.

    Single mode writes timeline/battery/metrics CSVs and a power-vs-time
    figure for the configured gamma; ``sweep = gamma`` crosses the scenario
    thresholds {0, 0.3, 0.7, 1} with solar fractions {0, 0.2, 0.4, 0.6} and
    writes ``scenario_sweep.csv`` plus its figure.
    """
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    trace = build_trace(cfg)
    start_slot = trace.total_slots - cfg.run_days * trace.slots_per_day
    num_slots = cfg.run_days * trace.slots_per_day

    if cfg.sweep == "gamma":
        gammas = (0.0, 0.3, 0.7, 1.0)
        fractions = (0.0, 0.2, 0.4, 0.6)
        jobs = [(g, f) for f in fractions for g in gammas]
        networks = {f: build_network(cfg, trace, solar_fraction=f) for f in fractions}

        def run_job(job):
            g, f = job
            scenario, baseline = _run_pair(cfg, trace, networks[f], start_slot, num_slots, g)
            saving = nes(baseline.grid_power, scenario.grid_power)
            return (g, f, float(scenario.grid_power.mean()), saving)

        with ThreadPoolExecutor(max_workers=worker_count()) as pool:
            rows = list(pool.map(run_job, jobs))
        csv_path = out / "scenario_sweep.csv"
        write_scenario_csv(rows, csv_path)
        svg_path = out / "scenario_sweep.svg"
        series = []
        for g in gammas:
            pts = sorted((f, grid) for gg, f, grid, _ in rows if gg == g)
            series.append((f"gamma={g:g}", [p[0] for p in pts], [p[1] for p in pts]))
        save_line_chart(svg_path, series, xlabel="solar fraction",
                        ylabel="mean grid power [W]",
                        title="Grid power vs solar penetration")
        return [csv_path, svg_path]

    network = build_network(cfg, trace)
    scenario, baseline = _run_pair(cfg, trace, network, start_slot, num_slots, cfg.gamma)
    paths = []
    timeline_path = out / "timeline.csv"
    write_timeline_csv(scenario, timeline_path)
    baseline_path = out / "timeline_baseline.csv"
    write_timeline_csv(baseline, baseline_path)
    battery_path = out / "battery.csv"
    write_battery_csv(scenario, battery_path)
    metrics_path = out / "metrics.csv"
    saving = nes(baseline.grid_power, scenario.grid_power)
    write_metrics_csv(
        [
            ("nes_pct", "grid", saving),
            ("mean_grid_power_w", "scenario", float(scenario.grid_power.mean())),
            ("mean_grid_power_w", "baseline", float(baseline.grid_power.mean())),
            ("mean_total_power_w", "scenario", float(scenario.total_power.mean())),
            ("feasible_slots", "scenario", float(sum(r.feasible for r in scenario.slots))),
            ("estimator_downgrades", "scenario", float(scenario.downgrades)),
        ],
        metrics_path,
    )
    svg_path = out / "power_vs_time.svg"
    slots = [r.slot for r in scenario.slots]
    save_line_chart(
        svg_path,
        [
            ("grid (scenario)", slots, scenario.grid_power),
            ("grid (no-renewable baseline)", slots, baseline.grid_power),
            ("total demand", slots, scenario.total_power),
        ],
        xlabel="slot", ylabel="power [W]", title="Network power over the day",
    )
    paths += [timeline_path, baseline_path, battery_path, metrics_path, svg_path]
    return paths


# --- synth / report -----------------------------------------------------------


def cmd_synth(cfg: ExperimentConfig) -> list[Path]:
    """Generate a synthetic trace and write it as a trace CSV."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    trace = build_trace(cfg)
    path = out / "trace.csv"
    write_trace_csv(trace, path)
    return [path]


def cmd_report(run_dirs: list[str | Path], out_dir: str | Path) -> list[Path]:
    """Aggregate run directories into one summary CSV plus overlay figures.

    Runs missing their required CSVs are skipped and listed on stderr. NES is
    recomputed from the timelines as a cross-check row whenever both the
    scenario and baseline timelines are present. Idempotent: rerunning over
    the same inputs reproduces the summary byte for byte.
    """
    import csv as _csv

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary_rows: list[tuple[str, str, str, float]] = []
    overlay = []
    skipped = []
    for run_dir in sorted(Path(d) for d in run_dirs):
        label = run_dir.name
        metrics_path = run_dir / "metrics.csv"
        timeline_path = run_dir / "timeline.csv"
        mape_path = run_dir / "mape_sweep.csv"
        scenario_path = run_dir / "scenario_sweep.csv"
        recognized = False
        if metrics_path.exists() and timeline_path.exists():
            recognized = True
            for metric, scope, value in read_metrics_csv(metrics_path):
                summary_rows.append((label, metric, scope, value))
            timeline = read_timeline_csv(timeline_path)
            overlay.append((label, [r["slot"] for r in timeline],
                            [r["grid_power_w"] for r in timeline]))
            baseline_path = run_dir / "timeline_baseline.csv"
            if baseline_path.exists():
                baseline = read_timeline_csv(baseline_path)
                recomputed = nes(
                    [r["grid_power_w"] for r in baseline],
                    [r["grid_power_w"] for r in timeline],
                )
                summary_rows.append((label, "nes_pct_recomputed", "grid", recomputed))
        if mape_path.exists():
            recognized = True
            with open(mape_path, newline="") as fh:
                for row in _csv.DictReader(fh):
                    scope = f"{row['estimator']}:a={row['param_a']},b={row['param_b']}"
                    summary_rows.append((label, "mape_pct", scope, float(row["mape_pct"])))
        if scenario_path.exists():
            recognized = True
            with open(scenario_path, newline="") as fh:
                for row in _csv.DictReader(fh):
                    scope = f"gamma={row['gamma']},solar={row['solar_fraction']}"
                    summary_rows.append((label, "mean_grid_power_w", scope,
                                         float(row["mean_grid_power_w"])))
        if not recognized:
            skipped.append((label, ["metrics.csv", "timeline.csv"]))
    for label, missing in skipped:
        print(f"report: skipping {label}: missing {', '.join(missing)}", file=sys.stderr)

    summary_rows.sort()
    summary_path = out / "summary.csv"
    with open(summary_path, "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["run", "metric", "scope", "value"])
        for label, metric, scope, value in summary_rows:
            writer.writerow([label, metric, scope, "{:.9g}".format(value)])
    paths = [summary_path]
    if overlay:
        fig_path = out / "report_grid_power.svg"
        save_line_chart(fig_path, overlay, xlabel="slot", ylabel="grid power [W]",
                        title="Grid power across runs")
        paths.append(fig_path)
    return paths

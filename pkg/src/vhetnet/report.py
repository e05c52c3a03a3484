"""Delimited run outputs (the contract) and matplotlib figure rendering
(conveniences, written alongside the CSVs)."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .switching import TimelineResult

_FMT = "{:.9g}"

# figures must not embed volatile state; CSVs are byte-reproducible anyway
matplotlib.rcParams["svg.hashsalt"] = "vhetnet"

TIMELINE_CSV_HEADER = [
    "slot", "delta_bits", "grid_power_w", "total_power_w", "feasible", "configs_evaluated",
]
BATTERY_CSV_HEADER = ["sbs_id", "slot", "S_kwh", "E_H", "E_R", "E_G"]
METRICS_CSV_HEADER = ["metric", "scope", "value"]
MAPE_CSV_HEADER = ["estimator", "param_a", "param_b", "mape_pct", "guarded", "trials"]
SCENARIO_CSV_HEADER = ["gamma", "solar_fraction", "mean_grid_power_w", "nes_pct"]


def write_timeline_csv(result: TimelineResult, path: str | Path) -> None:
    """``slot,delta_bits,grid_power_w,total_power_w,feasible,configs_evaluated``
    with the switch vector as a 0/1 string, SBS index ascending."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TIMELINE_CSV_HEADER)
        for r in result.slots:
            bits = "".join("1" if on else "0" for on in r.switch_vector)
            writer.writerow([
                r.slot, bits, _FMT.format(r.grid_power_w), _FMT.format(r.total_power_w),
                int(r.feasible), r.configs_evaluated,
            ])


def read_timeline_csv(path: str | Path) -> list[dict]:
    rows: list[dict] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != TIMELINE_CSV_HEADER:
            raise ValueError(f"{path}: expected header {','.join(TIMELINE_CSV_HEADER)}")
        for row in reader:
            rows.append({
                "slot": int(row["slot"]),
                "delta_bits": row["delta_bits"],
                "grid_power_w": float(row["grid_power_w"]),
                "total_power_w": float(row["total_power_w"]),
                "feasible": bool(int(row["feasible"])),
                "configs_evaluated": int(row["configs_evaluated"]),
            })
    return rows


def write_battery_csv(result: TimelineResult, path: str | Path) -> None:
    """Battery trajectory per solar SBS: ``sbs_id,slot,S_kwh,E_H,E_R,E_G``."""
    solar_ids = sorted(result.network.solar_sbs_ids)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(BATTERY_CSV_HEADER)
        for sbs_id in solar_ids:
            for r in result.slots:
                bd = r.breakdowns[sbs_id]
                writer.writerow([
                    sbs_id, r.slot,
                    _FMT.format(r.battery_kwh.get(sbs_id, 0.0)),
                    _FMT.format(bd.harvested),
                    _FMT.format(bd.renewable),
                    _FMT.format(bd.grid),
                ])


def write_metrics_csv(rows: Iterable[tuple[str, str, float]], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_CSV_HEADER)
        for metric, scope, value in rows:
            writer.writerow([metric, scope, _FMT.format(value)])


def read_metrics_csv(path: str | Path) -> list[tuple[str, str, float]]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != METRICS_CSV_HEADER:
            raise ValueError(f"{path}: expected header {','.join(METRICS_CSV_HEADER)}")
        for row in reader:
            out.append((row["metric"], row["scope"], float(row["value"])))
    return out


def write_mape_csv(rows: Iterable[tuple[str, float, float, float, int, int]], path: str | Path) -> None:
    """One row per sweep setting: ``estimator,param_a,param_b,mape_pct,guarded,trials``.

    param_a/param_b meaning per estimator: distance (neighbors, exponent),
    mlc (levels, clusters), lstm (window, units); zero when not applicable.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MAPE_CSV_HEADER)
        for estimator, a, b, value, guarded, trials in rows:
            writer.writerow([
                estimator, _FMT.format(a), _FMT.format(b),
                _FMT.format(value), guarded, trials,
            ])


def write_scenario_csv(rows: Iterable[tuple[float, float, float, float]], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SCENARIO_CSV_HEADER)
        for gamma, fraction, grid, saving in rows:
            writer.writerow([
                _FMT.format(gamma), _FMT.format(fraction),
                _FMT.format(grid), _FMT.format(saving),
            ])


def save_line_chart(
    path: str | Path,
    series: Sequence[tuple[str, Sequence[float], Sequence[float]]],
    xlabel: str,
    ylabel: str,
    title: str = "",
) -> None:
    """Small multi-line chart: ``series`` is a list of (label, x, y)."""
    fig, ax = plt.subplots(figsize=(7, 4.2))
    for label, x, y in series:
        ax.plot(x, y, marker="o", markersize=3, linewidth=1.2, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    if len(series) > 1:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)

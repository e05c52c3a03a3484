"""Grid traffic ingestion, synthetic trace generation, and Phase-I preprocessing.

A trace holds one raw-traffic series per grid cell on a fixed slot grid
(144 ten-minute slots per day by default). Preprocessing covers z-score
outlier filtering, capacity normalization, sliding windows, and splits.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.ndimage import gaussian_filter, gaussian_filter1d

SLOTS_PER_DAY = 144

_FMT = "{:.9g}"  # all floats in delimited outputs carry 9 significant digits


@dataclass(frozen=True)
class TrafficTrace:
    """Per-cell raw traffic on a slot grid.

    ``cells`` is a tuple of (cell_id, row, col); ``series`` has shape
    (num_cells, slots_per_day * num_days), rows aligned with ``cells``.
    ``missing_slots`` counts slots that had to be zero-filled at load time.
    """

    slots_per_day: int
    num_days: int
    cells: tuple[tuple[int, int, int], ...]
    series: np.ndarray
    missing_slots: int = 0

    def __post_init__(self) -> None:
        expected = self.slots_per_day * self.num_days
        if self.series.ndim != 2 or self.series.shape != (len(self.cells), expected):
            raise ValueError(
                f"series shape {self.series.shape} does not match "
                f"{len(self.cells)} cells x {expected} slots"
            )
        if np.any(self.series < 0):
            raise ValueError("traffic must be >= 0")

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    @property
    def total_slots(self) -> int:
        return self.slots_per_day * self.num_days

    @property
    def slot_minutes(self) -> float:
        return 24.0 * 60.0 / self.slots_per_day

    def cell_index(self, cell_id: int) -> int:
        for i, (cid, _, _) in enumerate(self.cells):
            if cid == cell_id:
                return i
        raise KeyError(f"unknown cell id {cell_id}")

    def index_by_position(self) -> dict[tuple[int, int], int]:
        return {(r, c): i for i, (_, r, c) in enumerate(self.cells)}


@dataclass(frozen=True)
class PreprocessConfig:
    zscore_threshold: float = 2.5
    train_fraction: float = 0.6
    window: int = 8
    shuffle_seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must be in (0, 1)")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.zscore_threshold <= 0:
            raise ValueError("zscore_threshold must be > 0")


@dataclass(frozen=True)
class WindowSet:
    """Sliding-window input/target pairs.

    ``inputs[i]`` are the ``window`` consecutive values immediately preceding
    ``targets[i]``; ``provenance[i]`` is (cell_id, target_slot_index).
    """

    inputs: np.ndarray
    targets: np.ndarray
    provenance: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        if self.inputs.ndim != 2 or len(self.inputs) != len(self.targets):
            raise ValueError("inputs must be (n, window) aligned with targets")
        if len(self.provenance) != len(self.targets):
            raise ValueError("provenance must align with targets")

    def __len__(self) -> int:
        return len(self.targets)


# --- CDR ingestion --------------------------------------------------------------

CDR_CSV_HEADER = ["cell_id", "slot", "calls", "sms", "internet"]
TRACE_CSV_HEADER = ["cell_id", "row", "col", "slot", "traffic"]
LOADS_CSV_HEADER = ["cell_id", "slot", "load_factor"]


def load_cdr_csv(
    path: str | Path,
    weights: tuple[float, float, float] = (1.0, 1.0, 1.0),
    slots_per_day: int = SLOTS_PER_DAY,
    grid_width: int = 100,
) -> TrafficTrace:
    """Load a raw CDR CSV (``cell_id,slot,calls,sms,internet``).

    Activities are consolidated into a single traffic measure as a weighted
    sum (unit weights by default). Rows with the same (cell, slot) accumulate.
    Missing slots are zero-filled and counted in ``missing_slots``. Cell grid
    positions are derived from the id on a ``grid_width``-wide row-major grid.
    """
    per_cell: dict[int, dict[int, float]] = {}
    max_slot = -1
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty file, no trace to load")
        if [h.strip() for h in header] != CDR_CSV_HEADER:
            raise ValueError(f"{path}: expected header {','.join(CDR_CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            try:
                cell = int(row[0])
                slot = int(row[1])
                calls, sms, internet = float(row[2]), float(row[3]), float(row[4])
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}: line {lineno}: malformed row {row!r}") from exc
            if slot < 0:
                raise ValueError(f"{path}: line {lineno}: negative slot {slot}")
            tau = weights[0] * calls + weights[1] * sms + weights[2] * internet
            per_cell.setdefault(cell, {})[slot] = per_cell.get(cell, {}).get(slot, 0.0) + tau
            max_slot = max(max_slot, slot)
    if not per_cell:
        raise ValueError(f"{path}: no data rows, empty trace")
    num_days = max_slot // slots_per_day + 1
    total = slots_per_day * num_days
    cell_ids = sorted(per_cell)
    series = np.zeros((len(cell_ids), total))
    missing = 0
    for i, cid in enumerate(cell_ids):
        slots = per_cell[cid]
        for t in range(total):
            if t in slots:
                series[i, t] = slots[t]
            else:
                missing += 1
    cells = tuple((cid, cid // grid_width, cid % grid_width) for cid in cell_ids)
    return TrafficTrace(
        slots_per_day=slots_per_day,
        num_days=num_days,
        cells=cells,
        series=series,
        missing_slots=missing,
    )


def write_trace_csv(trace: TrafficTrace, path: str | Path) -> None:
    """Write a trace as ``cell_id,row,col,slot,traffic`` rows (9 significant digits)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_CSV_HEADER)
        for i, (cid, row, col) in enumerate(trace.cells):
            for t in range(trace.total_slots):
                writer.writerow([cid, row, col, t, _FMT.format(trace.series[i, t])])


def read_trace_csv(path: str | Path, slots_per_day: int = SLOTS_PER_DAY) -> TrafficTrace:
    """Read a trace written by :func:`write_trace_csv`."""
    per_cell: dict[int, tuple[int, int, dict[int, float]]] = {}
    max_slot = -1
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty file, no trace to load")
        if [h.strip() for h in header] != TRACE_CSV_HEADER:
            raise ValueError(f"{path}: expected header {','.join(TRACE_CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                cid, r, c, t, tau = int(row[0]), int(row[1]), int(row[2]), int(row[3]), float(row[4])
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}: line {lineno}: malformed row {row!r}") from exc
            per_cell.setdefault(cid, (r, c, {}))[2][t] = tau
            max_slot = max(max_slot, t)
    if not per_cell:
        raise ValueError(f"{path}: no data rows, empty trace")
    num_days = max_slot // slots_per_day + 1
    total = slots_per_day * num_days
    cell_ids = sorted(per_cell)
    series = np.zeros((len(cell_ids), total))
    missing = 0
    for i, cid in enumerate(cell_ids):
        _, _, slots = per_cell[cid]
        for t in range(total):
            if t in slots:
                series[i, t] = slots[t]
            else:
                missing += 1
    cells = tuple((cid, per_cell[cid][0], per_cell[cid][1]) for cid in cell_ids)
    return TrafficTrace(
        slots_per_day=slots_per_day, num_days=num_days, cells=cells,
        series=series, missing_slots=missing,
    )


def write_loads_csv(
    cells: Sequence[int], loads: np.ndarray, path: str | Path
) -> None:
    """Write normalized loads as ``cell_id,slot,load_factor`` rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOADS_CSV_HEADER)
        for i, cid in enumerate(cells):
            for t in range(loads.shape[1]):
                writer.writerow([cid, t, _FMT.format(loads[i, t])])


# --- synthetic traffic ------------------------------------------------------------


def _kernel_l2(sigma: float) -> float:
    """L2 norm of the (sum-normalized) 1-D Gaussian smoothing kernel."""
    radius = int(4.0 * sigma + 0.5)
    impulse = np.zeros(2 * radius + 1)
    impulse[radius] = 1.0
    kernel = gaussian_filter1d(impulse, sigma, mode="constant")
    return float(np.sqrt((kernel**2).sum()))


def _smooth_unit_field(rng: np.random.Generator, shape: tuple[int, ...], corr_length: float) -> np.ndarray:
    """Spatially smoothed standard-normal field with unit pointwise variance.

    The variance is restored analytically (kernel L2 norm per smoothed axis),
    not from the empirical field sd, which degenerates on small grids.
    """
    white = rng.standard_normal(shape)
    if corr_length <= 0:
        return white
    smoothed = gaussian_filter(white, sigma=corr_length, mode="reflect", axes=(0, 1))
    return smoothed / _kernel_l2(corr_length) ** 2


def synth_traffic(
    num_cells: int,
    days: int,
    seed: int,
    spatial_corr_length: float = 2.0,
    noise_sd: float = 2.5,
    mean_level: float = 100.0,
    diurnal_depth: float = 0.5,
    field_sd: float = 0.25,
    amp_jitter: float = 0.2,
    slots_per_day: int = SLOTS_PER_DAY,
) -> TrafficTrace:
    """Generate a diurnal, spatially correlated synthetic trace.

    Each cell's series is amplitude * (floor + swing * shape(t)) plus spatially
    smoothed Gaussian noise, clipped at 0, where shape(t) is a sinusoid with
    one period per day peaking mid-day. Cell amplitudes combine a smooth
    spatial field (1 + field_sd * unit field) with independent per-cell
    jitter (1 + amp_jitter * normal), the latter modelling hotspot
    heterogeneity that geometric neighbors cannot see. ``diurnal_depth`` is
    the peak-to-trough swing as a fraction of ``mean_level``; ``noise_sd`` is
    in raw traffic units. Deterministic for a fixed seed.
    """
    if num_cells < 1:
        raise ValueError("num_cells must be >= 1")
    if days < 1:
        raise ValueError("days must be >= 1")
    if not 0.0 <= diurnal_depth <= 1.0:
        raise ValueError("diurnal_depth must be in [0, 1]")
    side = math.ceil(math.sqrt(num_cells))
    rng = np.random.default_rng(seed)
    total = slots_per_day * days

    amp = 1.0 + field_sd * _smooth_unit_field(rng, (side, side), spatial_corr_length)
    amp = amp * (1.0 + amp_jitter * rng.standard_normal((side, side)))
    amp = np.clip(amp, 0.1, None)

    t = np.arange(total)
    shape = 0.5 * (1.0 - np.cos(2.0 * np.pi * (t % slots_per_day) / slots_per_day))
    base = mean_level * ((1.0 - diurnal_depth) + diurnal_depth * shape)

    if noise_sd > 0:
        noise = noise_sd * _smooth_unit_field(rng, (side, side, total), spatial_corr_length)
    else:
        noise = np.zeros((side, side, total))

    grid_series = amp[:, :, None] * base[None, None, :] + noise
    grid_series = np.clip(grid_series, 0.0, None)

    cells = []
    series = np.empty((num_cells, total))
    for i in range(num_cells):
        row, col = divmod(i, side)
        cells.append((i, row, col))
        series[i] = grid_series[row, col]
    return TrafficTrace(
        slots_per_day=slots_per_day, num_days=days, cells=tuple(cells), series=series
    )


# --- preprocessing ------------------------------------------------------------


def zscore_filter(series: np.ndarray, threshold: float = 2.5) -> tuple[np.ndarray, int]:
    """Replace samples with |x - mean| / sd > threshold by the series median.

    Returns the filtered copy and the number of replaced samples. A
    zero-variance series is returned unchanged.
    """
    series = np.asarray(series, dtype=float)
    if series.size < 2:
        raise ValueError("series must have at least 2 samples")
    sd = series.std()
    if sd == 0:
        return series.copy(), 0
    z = np.abs(series - series.mean()) / sd
    mask = z > threshold
    out = series.copy()
    out[mask] = np.median(series)
    return out, int(mask.sum())


def normalize_loads(
    trace: TrafficTrace, capacity_map: Mapping[int, float] | float
) -> tuple[np.ndarray, int]:
    """Normalize raw traffic to load factors lambda = min(tau / C, 1).

    ``capacity_map`` maps cell_id -> capacity, or is a single capacity applied
    to every cell. Returns (loads array, number of clipped samples).
    """
    loads = np.empty_like(trace.series)
    clipped = 0
    for i, (cid, _, _) in enumerate(trace.cells):
        cap = capacity_map if isinstance(capacity_map, (int, float)) else capacity_map[cid]
        if cap <= 0:
            raise ValueError(f"capacity for cell {cid} must be > 0, got {cap}")
        lam = trace.series[i] / cap
        clipped += int(np.count_nonzero(lam > 1.0))
        loads[i] = np.minimum(lam, 1.0)
    return loads, clipped


def make_windows(series: np.ndarray, window: int, cell_id: int = 0) -> WindowSet:
    """Build all consecutive (window, next value) pairs from one series."""
    series = np.asarray(series, dtype=float)
    if window < 1:
        raise ValueError("window must be >= 1")
    if series.size <= window:
        raise ValueError(
            f"series of length {series.size} too short for window {window}"
        )
    n = series.size - window
    inputs = np.empty((n, window))
    targets = np.empty(n)
    provenance = []
    for i in range(n):
        inputs[i] = series[i : i + window]
        targets[i] = series[i + window]
        provenance.append((cell_id, i + window))
    return WindowSet(inputs=inputs, targets=targets, provenance=tuple(provenance))


def split_windows(
    ws: WindowSet, train_fraction: float, seed: int
) -> tuple[WindowSet, WindowSet]:
    """Shuffle pair indices with ``seed`` and partition into train/test."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    n = len(ws)
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(n * train_fraction)
    tr, te = perm[:n_train], perm[n_train:]

    def subset(idx: np.ndarray) -> WindowSet:
        return WindowSet(
            inputs=ws.inputs[idx],
            targets=ws.targets[idx],
            provenance=tuple(ws.provenance[i] for i in idx),
        )

    return subset(tr), subset(te)


def hourly_profile(series: np.ndarray, slots_per_day: int = SLOTS_PER_DAY, hours: int = 24) -> np.ndarray:
    """Mean value per hour of day over the whole series (summary feature)."""
    series = np.asarray(series, dtype=float)
    if series.size < slots_per_day:
        raise ValueError("need at least one full day for an hourly profile")
    slots_per_hour = slots_per_day // hours
    profile = np.zeros(hours)
    hour_of_slot = (np.arange(series.size) % slots_per_day) // slots_per_hour
    for h in range(hours):
        profile[h] = series[hour_of_slot == h].mean()
    return profile

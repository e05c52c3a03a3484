"""Flat key = value experiment configuration with defaults for every knob.

The file format is one ``key = value`` pair per line; ``#`` starts a comment.
Unknown keys are rejected with the offending name. CLI flags override file
values. See the README for the full key reference.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from pathlib import Path


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class ExperimentConfig:
    # traffic source
    traffic: str = "synth"            # synth | cdr | trace
    cdr_path: str = ""
    trace_path: str = ""
    cells: int = 36
    days: int = 1
    corr_length: float = 2.0
    noise_sd: float = 2.5
    mean_level: float = 100.0
    diurnal_depth: float = 0.5
    capacity: float = 150.0           # cell normalization capacity (= default SBS capacity)

    # network
    network: str = ""                 # network CSV path; empty -> synthetic
    sbs_count: int = 10
    solar_fraction: float = 0.0

    # solar / battery
    solar_efficiency: float = 0.95
    solar_capacity_kwh: float = 0.5
    peak_start_slot: int = 48         # 08:00 at 10-minute slots
    peak_end_slot: int = 108          # 18:00
    availability: str = "sinusoidal"  # sinusoidal | constant:<value>
    battery_kwh: float = 2.0
    initial_charge_kwh: float = 0.0

    # estimation
    estimator: str = "dist"           # dist | mlc | lstm | oracle
    neighbor_count: int = 8
    exponent: float = 3.0
    levels: int = 2
    clusters: int = 0                 # 0 = elbow auto-selection
    restarts: int = 10
    units: int = 10
    window: int = 8
    learning_rate: float = 0.001
    epochs: int = 50
    batch_size: int = 32
    train_fraction: float = 0.6
    zscore_threshold: float = 2.5
    lstm_cells_cap: int = 6

    # switching
    gamma: float = 1.0
    offload: str = "all_to_haps"
    es_cap: int = 20
    run_days: int = 1                 # trailing days simulated by `switch`

    # run control
    trials: int = 300
    seed: int = 0
    out: str = "runs/exp"
    sweep: str = "none"               # estimate: none|distance|mlc|lstm; switch: none|gamma

    def validate(self) -> None:
        if self.traffic not in ("synth", "cdr", "trace"):
            raise ConfigError("traffic", f"expected synth|cdr|trace, got {self.traffic!r}")
        if self.traffic == "cdr" and not self.cdr_path:
            raise ConfigError("cdr_path", "required when traffic = cdr")
        if self.traffic == "trace" and not self.trace_path:
            raise ConfigError("trace_path", "required when traffic = trace")
        if self.traffic == "cdr" and not Path(self.cdr_path).exists():
            raise ConfigError("cdr_path", f"no such file: {self.cdr_path}")
        if self.traffic == "trace" and not Path(self.trace_path).exists():
            raise ConfigError("trace_path", f"no such file: {self.trace_path}")
        if self.network and not Path(self.network).exists():
            raise ConfigError("network", f"no such file: {self.network}")
        if self.cells < 1:
            raise ConfigError("cells", "must be >= 1")
        if self.days < 1:
            raise ConfigError("days", "must be >= 1")
        if self.capacity <= 0:
            raise ConfigError("capacity", "must be > 0")
        if self.sbs_count < 1:
            raise ConfigError("sbs_count", "must be >= 1")
        if not 0.0 <= self.solar_fraction <= 1.0:
            raise ConfigError("solar_fraction", "must be in [0, 1]")
        if self.estimator not in ("dist", "mlc", "lstm", "oracle"):
            raise ConfigError("estimator", f"expected dist|mlc|lstm|oracle, got {self.estimator!r}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError("gamma", "must be in [0, 1]")
        if self.offload not in ("all_to_haps", "all_to_mbs", "proportional_to_headroom"):
            raise ConfigError("offload", f"unknown policy {self.offload!r}")
        if self.trials < 1:
            raise ConfigError("trials", "must be >= 1")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction", "must be in (0, 1)")
        if self.run_days < 1 or self.run_days > self.days:
            raise ConfigError("run_days", "must be in [1, days]")
        if self.sweep not in ("none", "distance", "mlc", "lstm", "gamma"):
            raise ConfigError("sweep", f"unknown sweep {self.sweep!r}")
        if not self.availability.startswith("constant:") and self.availability != "sinusoidal":
            raise ConfigError("availability", "expected sinusoidal or constant:<value>")

    @classmethod
    def from_file(cls, path: str | Path | None, overrides: dict | None = None) -> "ExperimentConfig":
        values: dict[str, str] = {}
        if path is not None:
            values.update(parse_flat_config(path))
        cfg = cls()
        by_name = {f.name: f for f in fields(cls)}
        for key, raw in values.items():
            if key not in by_name:
                raise ConfigError(key, "unknown configuration key")
            setattr(cfg, key, _coerce(key, raw, by_name[key].type))
        for key, value in (overrides or {}).items():
            if value is not None:
                setattr(cfg, key, value)
        cfg.validate()
        return cfg


def _coerce(key: str, raw: str, type_name) -> object:
    name = type_name if isinstance(type_name, str) else type_name.__name__
    try:
        if name == "int":
            return int(raw)
        if name == "float":
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(key, f"cannot parse {raw!r} as {name}") from exc


def parse_flat_config(path: str | Path) -> dict[str, str]:
    values: dict[str, str] = {}
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}", f"expected key = value, got {line!r}")
        key, _, value = stripped.partition("=")
        values[key.strip()] = value.strip()
    return values


def worker_count() -> int:
    """Worker cap for concurrent trials/sweeps (VHETNET_THREADS, else CPUs)."""
    env = os.environ.get("VHETNET_THREADS", "").strip()
    cpus = os.cpu_count() or 1
    if env:
        try:
            requested = int(env)
        except ValueError:
            raise ConfigError("VHETNET_THREADS", f"cannot parse {env!r} as an integer")
        return max(1, min(requested, cpus))
    return cpus

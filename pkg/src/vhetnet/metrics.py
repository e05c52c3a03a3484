"""Evaluation metrics (MAPE, decision-change rate, NES) and the misestimation
power-error diagnostics."""

from __future__ import annotations

from enum import Enum
from typing import Sequence

import numpy as np

from .network import PowerParams


def mape(
    actual: Sequence[float] | np.ndarray,
    predicted: Sequence[float] | np.ndarray,
    epsilon: float = 1e-6,
) -> tuple[float, int]:
    """Mean absolute percentage error, in percent.

    Denominators smaller than ``epsilon`` are replaced by it; the number of
    guarded terms is returned alongside the value.
    """
    a = np.asarray(actual, dtype=float)
    p = np.asarray(predicted, dtype=float)
    if a.shape != p.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {p.shape}")
    if a.size == 0:
        raise ValueError("mape of empty series is undefined")
    denom = np.abs(a)
    guarded = int(np.count_nonzero(denom < epsilon))
    denom = np.maximum(denom, epsilon)
    return float(np.mean(np.abs(a - p) / denom) * 100.0), guarded


def decision_change_rate(
    reference: np.ndarray | Sequence[Sequence[bool]],
    candidate: np.ndarray | Sequence[Sequence[bool]],
) -> float:
    """Percentage of ON/OFF entries differing between two switch-vector series."""
    ref = np.asarray(reference, dtype=bool)
    cand = np.asarray(candidate, dtype=bool)
    if ref.shape != cand.shape:
        raise ValueError(f"shape mismatch: {ref.shape} vs {cand.shape}")
    if ref.size == 0:
        raise ValueError("decision_change_rate of empty series is undefined")
    return float(np.count_nonzero(ref != cand) / ref.size * 100.0)


def nes(
    baseline_power: Sequence[float] | np.ndarray,
    achieved_power: Sequence[float] | np.ndarray,
) -> float:
    """Network energy saving: relative mean-power reduction vs a baseline, in
    percent. Negative values (achieved above baseline) are reported as-is."""
    b = np.asarray(baseline_power, dtype=float)
    a = np.asarray(achieved_power, dtype=float)
    if b.shape != a.shape:
        raise ValueError(f"shape mismatch: {b.shape} vs {a.shape}")
    if b.size == 0:
        raise ValueError("nes of empty series is undefined")
    base = b.mean()
    if base <= 0:
        raise ValueError("baseline mean power must be > 0")
    return float((base - a.mean()) / base * 100.0)


def expected_power(p_est: float, p_true: float, p_err: float) -> float:
    """Expected total power under an estimation-error probability p_err."""
    if not 0.0 <= p_err <= 1.0:
        raise ValueError("p_err must be in [0, 1]")
    return p_est * p_err + p_true * (1.0 - p_err)


class ErrorDirection(str, Enum):
    OFF_TO_ON = "off_to_on"   # overestimation wakes a cell that should sleep
    ON_TO_OFF = "on_to_off"   # underestimation keeps a loaded cell asleep


def expected_error_power(
    direction: ErrorDirection,
    haps: PowerParams,
    sbs: PowerParams,
    phi: float,
    lam_true: float,
    lam_est: float,
    p_err: float,
) -> float:
    """Expected power-consumption error of one erroneous transition.

    The bracket compares the cost of keeping the cell asleep (its traffic
    carried by the HAPS link plus sleep power) against its active-mode power
    at the estimated load; OFF_TO_ON and ON_TO_OFF use the two antisymmetric
    orientations. The sign is preserved (the result may be negative).
    """
    if not 0.0 <= p_err <= 1.0:
        raise ValueError("p_err must be in [0, 1]")
    asleep = haps.pa_efficiency * phi * lam_true * haps.p_transmit + sbs.p_sleep
    awake = sbs.p_operational + sbs.pa_efficiency * lam_est * sbs.p_transmit
    if direction is ErrorDirection.OFF_TO_ON:
        return (asleep - awake) * p_err
    return (awake - asleep) * p_err


def empirical_p_err(
    trials: Sequence[tuple[float, float]], lam_threshold: float
) -> tuple[float | None, float | None]:
    """Conditional misestimation frequencies from (true, estimated) pairs.

    Returns (p_off_on, p_on_off): the frequency of estimates above the
    threshold given truths at or below it, and of estimates below the
    threshold given truths at or above it. A side with no conditioning
    samples is reported as None, never 0.
    """
    below = [(lam, est) for lam, est in trials if lam <= lam_threshold]
    above = [(lam, est) for lam, est in trials if lam >= lam_threshold]
    p_off_on = (
        sum(1 for _, est in below if est > lam_threshold) / len(below)
        if below else None
    )
    p_on_off = (
        sum(1 for _, est in above if est < lam_threshold) / len(above)
        if above else None
    )
    return p_off_on, p_on_off

"""Inverse-distance-weighted spatial load estimation for a sleeping cell."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class EstimationError(ValueError):
    """Raised when an estimator cannot produce an estimate."""


@dataclass(frozen=True)
class DistanceConfig:
    """Number of nearest active neighbors and the distance exponent."""

    neighbor_count: int = 8
    exponent: float = 3.0

    def __post_init__(self) -> None:
        if self.neighbor_count < 1:
            raise ValueError("neighbor_count must be >= 1")
        if self.exponent <= 0:
            raise ValueError("exponent must be > 0")


def estimate_distance(
    position: tuple[float, float],
    active: Sequence[tuple[tuple[float, float], float]],
    cfg: DistanceConfig,
) -> float:
    """Estimate a sleeping cell's load from its nearest active neighbors.

    Weights are d_max / d^n where d_max is the largest distance within the
    selected neighbor set; the estimate is the weight-normalized mean of the
    neighbor loads and therefore always lies between their min and max. A
    co-located neighbor (d = 0) receives the largest finite weight times 1e6;
    if every selected neighbor is co-located the plain mean is returned.
    """
    if not active:
        raise EstimationError("no active neighbors available for estimation")
    positions = np.asarray([p for p, _ in active], dtype=float)
    loads = np.asarray([lam for _, lam in active], dtype=float)
    dists = np.hypot(positions[:, 0] - position[0], positions[:, 1] - position[1])
    n = min(cfg.neighbor_count, len(active))
    order = np.argsort(dists, kind="stable")[:n]
    d = dists[order]
    lam = loads[order]
    d_max = float(d.max())
    if d_max == 0.0:
        return float(lam.mean())
    weights = np.zeros(n)
    finite = d > 0
    weights[finite] = d_max / d[finite] ** cfg.exponent
    if not finite.all():
        weights[~finite] = weights[finite].max() * 1e6
    return float(np.dot(lam, weights) / weights.sum())

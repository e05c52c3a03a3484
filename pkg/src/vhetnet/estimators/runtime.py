"""Adapters wiring the three estimators (and the perfect-knowledge oracle)
into the per-slot simulation loop.

Each adapter consumes an :class:`~vhetnet.switching.EstimationContext` and
returns estimates for the sleeping cells it can handle; cells it cannot
handle are simply omitted and the runner downgrades them to the distance
fallback.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Mapping

import numpy as np

from ..traffic import hourly_profile, make_windows
from .clustering import MlcConfig, MlcFeature, mlc_estimate
from .distance import DistanceConfig, EstimationError, estimate_distance
from .lstm import LstmConfig, LstmParams, lstm_predict_next, lstm_train

if TYPE_CHECKING:
    from ..switching import EstimationContext


@dataclass
class OracleLoadEstimator:
    """Perfect knowledge: returns the true current loads (diagnostic only)."""

    def estimate(self, ctx: "EstimationContext") -> dict[int, float]:
        return {c: float(ctx.current[c]) for c in ctx.sleeping}


@dataclass
class DistanceLoadEstimator:
    """Inverse-distance interpolation from the currently active cells."""

    cfg: DistanceConfig = field(default_factory=DistanceConfig)

    def estimate(self, ctx: "EstimationContext") -> dict[int, float]:
        active = [
            (tuple(ctx.positions[a]), float(ctx.current[a])) for a in ctx.active
        ]
        out: dict[int, float] = {}
        for c in ctx.sleeping:
            try:
                out[c] = estimate_distance(tuple(ctx.positions[c]), active, self.cfg)
            except EstimationError:
                pass  # no active neighbors; leave to the runner's fallback chain
        return out


class DistanceFallback(DistanceLoadEstimator):
    """Default-config distance estimator used when the chosen estimator lacks
    the history it needs."""


@dataclass
class MlcLoadEstimator:
    """Multi-level clustering over summary profiles of the known history.

    Requires at least one full day of history for the hourly profile; earlier
    slots are omitted (runner falls back). Profiles are recomputed from the
    trailing ``profile_days`` days each slot.
    """

    cfg: MlcConfig = field(default_factory=MlcConfig)
    profile_days: int = 7

    def estimate(self, ctx: "EstimationContext") -> dict[int, float]:
        spd = ctx.slots_per_day
        if ctx.history.shape[1] < spd:
            return {}
        window = min(ctx.history.shape[1], self.profile_days * spd)
        hist = ctx.history[:, -window:]
        n = len(hist)
        if self.cfg.feature is MlcFeature.MEAN_LOAD:
            features = hist.mean(axis=1, keepdims=True)
        else:
            features = np.stack([hourly_profile(hist[i], spd) for i in range(n)])
        loads = {a: float(ctx.current[a]) for a in ctx.active}
        result = mlc_estimate(
            ids=list(range(n)),
            features=features,
            loads=loads,
            sleeping=list(ctx.sleeping),
            cfg=self.cfg,
            seed=ctx.seed + ctx.slot,
        )
        return result.estimates


@dataclass
class LstmLoadEstimator:
    """Per-cell next-slot forecasters; cells without a trained model or with
    too little history are omitted."""

    models: Mapping[int, LstmParams]

    def estimate(self, ctx: "EstimationContext") -> dict[int, float]:
        out: dict[int, float] = {}
        for c in ctx.sleeping:
            model = self.models.get(c)
            if model is None or ctx.history.shape[1] < model.window:
                continue
            window = ctx.history[c, -model.window:]
            out[c] = lstm_predict_next(model, window)
        return out


def train_lstm_models(
    history: np.ndarray,
    cells: list[int] | tuple[int, ...],
    cfg: LstmConfig,
) -> dict[int, LstmParams]:
    """Train one forecaster per cell on its slice of ``history`` (cells, slots).

    The caller restricts ``history`` to the training period; windows are built
    over the whole slice. Per-cell seeds derive from the config seed so the
    result is independent of training order.
    """
    models: dict[int, LstmParams] = {}
    for c in cells:
        windows = make_windows(history[c], cfg.window, cell_id=c)
        cell_cfg = LstmConfig(
            units=cfg.units,
            window=cfg.window,
            learning_rate=cfg.learning_rate,
            epochs=cfg.epochs,
            batch_size=cfg.batch_size,
            seed=cfg.seed + c,
            adam_beta1=cfg.adam_beta1,
            adam_beta2=cfg.adam_beta2,
            adam_epsilon=cfg.adam_epsilon,
        )
        models[c], _ = lstm_train(windows, cell_cfg)
    return models


def build_estimator(
    name: str,
    distance_cfg: DistanceConfig | None = None,
    mlc_cfg: MlcConfig | None = None,
    lstm_models: Mapping[int, LstmParams] | None = None,
):
    """Estimator factory for the CLI: dist | mlc | lstm | oracle."""
    name = name.lower()
    if name in ("dist", "distance"):
        return DistanceLoadEstimator(distance_cfg or DistanceConfig())
    if name == "mlc":
        return MlcLoadEstimator(mlc_cfg or MlcConfig())
    if name == "lstm":
        if lstm_models is None:
            raise ValueError("lstm estimator requires trained models")
        return LstmLoadEstimator(lstm_models)
    if name == "oracle":
        return OracleLoadEstimator()
    raise ValueError(f"unknown estimator {name!r} (expected dist|mlc|lstm|oracle)")

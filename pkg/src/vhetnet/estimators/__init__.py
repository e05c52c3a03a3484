"""Sleeping-cell load estimators: distance-weighted interpolation, multi-level
clustering over k-means, and an LSTM next-slot forecaster."""

from .clustering import (
    ElbowResult,
    KMeansResult,
    MlcConfig,
    MlcFeature,
    MlcResult,
    elbow_select_g,
    kmeans,
    mlc_estimate,
)
from .distance import DistanceConfig, EstimationError, estimate_distance
from .lstm import (
    LstmConfig,
    LstmParams,
    NumericsError,
    load_lstm,
    lstm_cell_forward,
    lstm_predict_next,
    lstm_train,
    mae_loss_and_grads,
    save_lstm,
)
from .runtime import (
    DistanceLoadEstimator,
    LstmLoadEstimator,
    MlcLoadEstimator,
    OracleLoadEstimator,
    build_estimator,
    train_lstm_models,
)

__all__ = [
    "DistanceConfig",
    "DistanceLoadEstimator",
    "ElbowResult",
    "EstimationError",
    "KMeansResult",
    "LstmConfig",
    "LstmLoadEstimator",
    "LstmParams",
    "MlcConfig",
    "MlcFeature",
    "MlcLoadEstimator",
    "MlcResult",
    "NumericsError",
    "OracleLoadEstimator",
    "build_estimator",
    "elbow_select_g",
    "estimate_distance",
    "kmeans",
    "load_lstm",
    "lstm_cell_forward",
    "lstm_predict_next",
    "lstm_train",
    "mae_loss_and_grads",
    "mlc_estimate",
    "save_lstm",
    "train_lstm_models",
]

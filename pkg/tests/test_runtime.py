"""Estimator adapters and the timeline's fallback chain."""

import numpy as np
import pytest

from vhetnet.estimators import (
    DistanceLoadEstimator,
    LstmConfig,
    LstmLoadEstimator,
    MlcConfig,
    MlcLoadEstimator,
    OracleLoadEstimator,
    build_estimator,
    train_lstm_models,
)
from vhetnet.network import BaseStation, Network, PowerParams, Tier
from vhetnet.switching import EstimationContext, ScenarioPolicy, run_timeline
from vhetnet.traffic import synth_traffic

SBS_P = PowerParams(100.0, 4.0, 20.0, 30.0)
MBS_P = PowerParams(130.0, 4.7, 20.0, 75.0)
HAPS_P = PowerParams(200.0, 4.0, 500.0, 100.0)


def make_ctx(slot=200, n=9, sleeping=(0,), history=None, seed=0):
    rng = np.random.default_rng(seed)
    positions = np.array([(i // 3, i % 3) for i in range(n)], dtype=float)
    current = rng.uniform(0.2, 0.8, size=n)
    if history is None:
        history = rng.uniform(0.2, 0.8, size=(n, slot))
    active = tuple(i for i in range(n) if i not in set(sleeping))
    return EstimationContext(
        slot=slot, slots_per_day=144, positions=positions, current=current,
        history=history, sleeping=tuple(sleeping), active=active, seed=seed,
    )


def test_oracle_reads_truth():
    ctx = make_ctx(sleeping=(2, 5))
    est = OracleLoadEstimator().estimate(ctx)
    assert est == {2: ctx.current[2], 5: ctx.current[5]}


def test_distance_adapter_covers_all_sleeping():
    ctx = make_ctx(sleeping=(0, 4))
    est = DistanceLoadEstimator().estimate(ctx)
    assert set(est) == {0, 4}
    assert all(0.0 <= v <= 1.0 for v in est.values())


def test_mlc_adapter_needs_a_day_of_history():
    ctx = make_ctx(slot=100)  # less than one day
    assert MlcLoadEstimator(MlcConfig(clusters=2, restarts=2)).estimate(ctx) == {}
    ctx = make_ctx(slot=150)
    est = MlcLoadEstimator(MlcConfig(clusters=2, restarts=2)).estimate(ctx)
    assert set(est) == {0}


def test_lstm_adapter_skips_unmodeled_cells():
    rng = np.random.default_rng(3)
    history = rng.uniform(0.2, 0.8, size=(9, 300))
    models = train_lstm_models(
        history[:, :200], [0], LstmConfig(units=4, window=8, epochs=2, seed=1)
    )
    ctx = make_ctx(slot=300, sleeping=(0, 1), history=history)
    est = LstmLoadEstimator(models).estimate(ctx)
    assert set(est) == {0}  # no model for cell 1


def test_build_estimator_names():
    assert isinstance(build_estimator("dist"), DistanceLoadEstimator)
    assert isinstance(build_estimator("mlc"), MlcLoadEstimator)
    assert isinstance(build_estimator("oracle"), OracleLoadEstimator)
    assert isinstance(build_estimator("lstm", lstm_models={}), LstmLoadEstimator)
    with pytest.raises(ValueError):
        build_estimator("nearest")
    with pytest.raises(ValueError):
        build_estimator("lstm")


def test_timeline_downgrades_lstm_without_models():
    trace = synth_traffic(9, days=1, seed=0)
    pos = [(r, c) for _, r, c in trace.cells]
    stations = [
        BaseStation(id=100, tier=Tier.MBS, capacity=750.0, power=MBS_P, position=(0, 0)),
        BaseStation(id=101, tier=Tier.HAPS, capacity=1500.0, power=HAPS_P, position=(0, 0)),
        BaseStation(id=0, tier=Tier.SBS, capacity=150.0, power=SBS_P, position=pos[0]),
        BaseStation(id=1, tier=Tier.SBS, capacity=150.0, power=SBS_P, position=pos[4]),
    ]
    net = Network(stations)
    res = run_timeline(trace, net, LstmLoadEstimator(models={}),
                       ScenarioPolicy.scenario_1(), seed=0)
    # something must have slept at night, and every such slot was downgraded
    assert res.downgrades > 0
    assert any(r.downgraded for r in res.slots)

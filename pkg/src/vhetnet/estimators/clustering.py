"""From-scratch k-means with elbow-based cluster-count selection, and the
multi-level clustering (MLC) estimator that refines sleeping-cell load
estimates from cluster means over several clustering passes."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .distance import EstimationError


class MlcFeature(str, Enum):
    MEAN_LOAD = "mean_load"
    HOURLY_PROFILE_24 = "hourly_profile_24"


@dataclass(frozen=True)
class MlcConfig:
    """Multi-level clustering settings; ``clusters=None`` selects G by elbow."""

    levels: int = 2
    clusters: int | None = None
    g_max: int = 8
    restarts: int = 10
    max_iters: int = 100
    feature: MlcFeature = MlcFeature.HOURLY_PROFILE_24

    def __post_init__(self) -> None:
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.clusters is not None and self.clusters < 1:
            raise ValueError("clusters must be >= 1 or None for auto selection")


@dataclass(frozen=True)
class KMeansResult:
    assignments: np.ndarray
    centroids: np.ndarray
    sse: float
    sse_history: tuple[float, ...]


def _assign(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # squared Euclidean distances; argmin breaks ties toward the lowest index
    d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return d2.argmin(axis=1)


def _sse(points: np.ndarray, centroids: np.ndarray, assignments: np.ndarray) -> float:
    return float(((points - centroids[assignments]) ** 2).sum())


def kmeans(
    features: np.ndarray | Sequence[Sequence[float]],
    g: int,
    restarts: int = 10,
    max_iters: int = 100,
    seed: int = 0,
) -> KMeansResult:
    """Lloyd's algorithm with random restarts; returns the minimum-SSE run.

    An empty cluster is re-seeded at the point farthest from its former
    centroid. Deterministic for a fixed seed.
    """
    points = np.asarray(features, dtype=float)
    if points.ndim != 2:
        raise ValueError("features must be a 2-D array of vectors")
    n = len(points)
    if not 1 <= g <= n:
        raise ValueError(f"need 1 <= G <= {n} points, got G={g}")
    rng = np.random.default_rng(seed)
    best: KMeansResult | None = None
    for _ in range(restarts):
        centroids = points[rng.choice(n, size=g, replace=False)].copy()
        assignments = _assign(points, centroids)
        history = [_sse(points, centroids, assignments)]
        for _ in range(max_iters):
            used = set()
            for k in range(g):
                members = points[assignments == k]
                if len(members):
                    centroids[k] = members.mean(axis=0)
                else:
                    d = ((points - centroids[k]) ** 2).sum(axis=1)
                    for i in used:
                        d[i] = -1.0
                    far = int(d.argmax())
                    used.add(far)
                    centroids[k] = points[far]
            new_assignments = _assign(points, centroids)
            history.append(_sse(points, centroids, new_assignments))
            if np.array_equal(new_assignments, assignments):
                assignments = new_assignments
                break
            assignments = new_assignments
        result = KMeansResult(
            assignments=assignments,
            centroids=centroids.copy(),
            sse=history[-1],
            sse_history=tuple(history),
        )
        if best is None or result.sse < best.sse:
            best = result
    assert best is not None
    return best


@dataclass(frozen=True)
class ElbowResult:
    g: int
    sse_curve: tuple[float, ...]
    degenerate: bool = False


def elbow_select_g(
    features: np.ndarray | Sequence[Sequence[float]],
    g_max: int,
    restarts: int = 10,
    max_iters: int = 100,
    seed: int = 0,
) -> ElbowResult:
    """Pick the cluster count at the knee of the SSE curve.

    The knee is formalized as the G maximizing the discrete second difference
    SSE(G-1) - 2 SSE(G) + SSE(G+1) over the curve computed for G = 1..g_max.
    A flat curve returns G=1 with ``degenerate`` set. With only two curve
    points (g_max=2) the rule degenerates to picking 2 iff SSE drops.
    """
    points = np.asarray(features, dtype=float)
    if g_max < 2:
        raise ValueError("g_max must be >= 2")
    g_hi = min(g_max, len(points))
    curve = [
        kmeans(points, g, restarts=restarts, max_iters=max_iters, seed=seed).sse
        for g in range(1, g_hi + 1)
    ]
    if len(set(curve)) == 1:
        return ElbowResult(g=1, sse_curve=tuple(curve), degenerate=True)
    if len(curve) < 3:
        g = 2 if curve[-1] < curve[0] else 1
        return ElbowResult(g=g, sse_curve=tuple(curve))
    curvature = [curve[i - 1] - 2.0 * curve[i] + curve[i + 1] for i in range(1, len(curve) - 1)]
    g = int(np.argmax(curvature)) + 2
    return ElbowResult(g=g, sse_curve=tuple(curve))


@dataclass(frozen=True)
class MlcResult:
    estimates: dict[int, float]
    clusters_used: int
    fallback_ids: tuple[int, ...]
    empty_active_clusters: int


def mlc_estimate(
    ids: Sequence[int],
    features: np.ndarray,
    loads: Mapping[int, float],
    sleeping: Sequence[int],
    cfg: MlcConfig,
    seed: int = 0,
) -> MlcResult:
    """Estimate sleeping cells' loads by repeated clustering.

    ``features`` holds one summary row per id (rows of NaN mark missing
    history). Sleeping cells start from their summary mean (or the global
    active mean when features are missing, reported in ``fallback_ids``), and
    at each level every cell is clustered on its summary features plus its
    working load; sleeping members then take the mean current load of their
    cluster's active members. Clusters without active members fall back to
    the cluster's working-load mean (counted in ``empty_active_clusters``).
    """
    ids = list(ids)
    features = np.asarray(features, dtype=float)
    if features.ndim != 2 or len(features) != len(ids):
        raise ValueError("features must have one row per id")
    sleeping_set = set(sleeping)
    active_idx = [i for i, cid in enumerate(ids) if cid not in sleeping_set]
    if not active_idx:
        raise EstimationError("no active cells available for clustering")
    for cid in sleeping_set:
        if cid not in ids:
            raise KeyError(f"sleeping id {cid} has no feature row")

    global_active_mean = float(np.mean([loads[ids[i]] for i in active_idx]))
    working = np.empty(len(ids))
    fallback: list[int] = []
    for i, cid in enumerate(ids):
        if cid in sleeping_set:
            row = features[i]
            if np.isnan(row).any():
                working[i] = global_active_mean
                fallback.append(cid)
            else:
                working[i] = float(row.mean())
        else:
            working[i] = loads[cid]

    # missing feature rows participate through the working-load column only
    feat = features.copy()
    feat[np.isnan(feat)] = global_active_mean
    # keep the working-load dimension comparable to the profile block
    feat_scaled = feat / np.sqrt(feat.shape[1])

    active_mask = np.array([cid not in sleeping_set for cid in ids])
    empty_active = 0
    g_used = cfg.clusters or 0
    for level in range(cfg.levels):
        matrix = np.hstack([feat_scaled, working[:, None]])
        if cfg.clusters is None:
            g_used = elbow_select_g(
                matrix, g_max=min(cfg.g_max, len(ids)),
                restarts=cfg.restarts, max_iters=cfg.max_iters, seed=seed + level,
            ).g
        else:
            g_used = min(cfg.clusters, len(ids))
        km = kmeans(
            matrix, g_used, restarts=cfg.restarts, max_iters=cfg.max_iters,
            seed=seed + level,
        )
        for k in range(g_used):
            members = km.assignments == k
            cluster_active = members & active_mask
            if cluster_active.any():
                mu = float(working[cluster_active].mean())
            else:
                mu = float(working[members].mean())
                empty_active += 1
            sleeping_members = members & ~active_mask
            working[sleeping_members] = mu

    estimates = {
        cid: float(working[i]) for i, cid in enumerate(ids) if cid in sleeping_set
    }
    return MlcResult(
        estimates=estimates,
        clusters_used=g_used,
        fallback_ids=tuple(fallback),
        empty_active_clusters=empty_active,
    )

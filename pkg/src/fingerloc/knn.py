"""Euclidean pattern matching with k-nearest-neighbour post-processing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .fingerprints import FingerprintDb


@dataclass(frozen=True)
class KnnConfig:
    k: int = 3
    weighting: str = "uniform"  # or "inverse-distance"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.weighting not in ("uniform", "inverse-distance"):
            raise ValueError(f"unknown weighting {self.weighting!r}")


def euclidean_distance(x, y) -> float:
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"fingerprint shapes differ: {x.shape} vs {y.shape}")
    return float(np.linalg.norm(x - y))


def pairwise_distances(queries, refs) -> np.ndarray:
    return cdist(np.asarray(queries, dtype=float), np.asarray(refs, dtype=float))


def _neighbours(db: FingerprintDb, queries: np.ndarray, k: int):
    if len(db) == 0:
        raise ValueError("empty fingerprint database")
    if queries.shape[1] != db.dim:
        raise ValueError(f"fingerprint width {queries.shape[1]} != database width {db.dim}")
    if k > len(db):
        raise ValueError(f"k={k} exceeds the {len(db)} stored fingerprints")
    dist = pairwise_distances(queries, db.features)
    # stable sort keeps storage order among equal distances
    idx = np.argsort(dist, axis=1, kind="stable")[:, :k]
    return idx, np.take_along_axis(dist, idx, axis=1)


def _weights(dist: np.ndarray, weighting: str) -> np.ndarray:
    if weighting == "uniform":
        return np.full_like(dist, 1.0 / dist.shape[1])
    exact = dist == 0
    w = np.where(exact.any(axis=1, keepdims=True), exact.astype(float), 1.0 / np.where(exact, 1.0, dist))
    return w / w.sum(axis=1, keepdims=True)


def knn_localize_batch(db: FingerprintDb, queries, cfg: KnnConfig = KnnConfig()) -> np.ndarray:
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    idx, dist = _neighbours(db, queries, cfg.k)
    w = _weights(dist, cfg.weighting)
    return np.einsum("qk,qkd->qd", w, db.locations[idx])


def knn_localize(db: FingerprintDb, x, cfg: KnnConfig = KnnConfig()) -> np.ndarray:
    return knn_localize_batch(db, np.asarray(x, dtype=float)[None, :], cfg)[0]


def knn_classify_batch(db: FingerprintDb, queries, cfg: KnnConfig = KnnConfig()) -> np.ndarray:
    if db.labels is None:
        raise ValueError("database has no class labels")
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    idx, _ = _neighbours(db, queries, cfg.k)
    out = np.empty(len(queries), dtype=np.int64)
    for q, row in enumerate(db.labels[idx]):
        labels, counts = np.unique(row, return_counts=True)
        out[q] = labels[np.argmax(counts)]  # unique() sorts, so ties pick the smallest label
    return out


def knn_classify(db: FingerprintDb, x, cfg: KnnConfig = KnnConfig()) -> int:
    return int(knn_classify_batch(db, np.asarray(x, dtype=float)[None, :], cfg)[0])

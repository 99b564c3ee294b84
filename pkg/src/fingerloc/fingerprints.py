"""Raw RSSI rows and fixed-width fingerprint databases."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np


@dataclass
class RawMeasurementRow:
    """All RSSI readings taken at one location, keyed by AP id.

    Lists may have different lengths, and an AP may have no readings at all.
    """

    location: tuple[float, float]
    rssi: dict[str, list[float]]

    def __post_init__(self):
        if not self.rssi:
            raise ValueError("a measurement row needs at least one AP key")
        for ap, values in self.rssi.items():
            if not all(math.isfinite(v) for v in values):
                raise ValueError(f"non-finite RSSI value for AP {ap!r}")


@dataclass(frozen=True)
class Normalization:
    """Affine feature scaling ``(x - shift) / scale`` fitted on a training set."""

    mode: str  # "minmax" or "zscore"
    shift: np.ndarray
    scale: np.ndarray

    def apply(self, x):
        return (np.asarray(x, dtype=float) - self.shift) / self.scale

    def invert(self, z):
        return np.asarray(z, dtype=float) * self.scale + self.shift

    @classmethod
    def fit(cls, features: np.ndarray, mode: str) -> "Normalization":
        features = np.asarray(features, dtype=float)
        if mode == "minmax":
            lo, hi = float(features.min()), float(features.max())
            span = hi - lo
            return cls("minmax", np.array(lo), np.array(span if span > 0 else 1.0))
        if mode == "zscore":
            mean = features.mean(axis=0)
            std = features.std(axis=0)
            # constant columns map to zero
            std = np.where(std > 0, std, 1.0)
            return cls("zscore", mean, std)
        raise ValueError(f"unknown normalization mode {mode!r}")

    def to_dict(self) -> dict:
        return {"mode": self.mode, "shift": np.atleast_1d(self.shift).tolist(),
                "scale": np.atleast_1d(self.scale).tolist(), "scalar": self.mode == "minmax"}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalization":
        shift, scale = np.array(d["shift"], dtype=float), np.array(d["scale"], dtype=float)
        if d.get("scalar"):
            shift, scale = shift.reshape(()), scale.reshape(())
        return cls(d["mode"], shift, scale)


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FingerprintDb:
    """Fixed-width fingerprints with their locations.

    Features are laid out AP-major: the ``width`` slots of ``ap_ids[0]`` come
    first, then those of ``ap_ids[1]``, and so on.  ``labels`` index rows of
    ``grid`` when the database is used for classification.
    """

    ap_ids: tuple[str, ...]
    width: int
    locations: np.ndarray
    features: np.ndarray
    labels: np.ndarray | None = None
    grid: np.ndarray | None = None
    normalization: Normalization | None = None

    def __post_init__(self):
        object.__setattr__(self, "ap_ids", tuple(self.ap_ids))
        locs = _frozen(self.locations).reshape(-1, 2)
        feats = _frozen(self.features).reshape(len(locs), -1)
        if feats.shape[1] != len(self.ap_ids) * self.width:
            raise ValueError(f"fingerprint length {feats.shape[1]} != {len(self.ap_ids)} APs x width {self.width}")
        object.__setattr__(self, "locations", locs)
        object.__setattr__(self, "features", feats)
        if self.labels is not None:
            labels = _frozen(self.labels, dtype=np.int64)
            if labels.shape != (len(locs),):
                raise ValueError("one label per row required")
            if self.grid is not None and len(labels) and (labels.min() < 0 or labels.max() >= len(self.grid)):
                raise ValueError("class label outside the stored grid")
            object.__setattr__(self, "labels", labels)
        if self.grid is not None:
            object.__setattr__(self, "grid", _frozen(self.grid).reshape(-1, 2))

    def __len__(self):
        return len(self.locations)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "FingerprintDb":
        idx = np.asarray(idx)
        return replace(self, locations=self.locations[idx], features=self.features[idx],
                       labels=None if self.labels is None else self.labels[idx])

    def with_features(self, features, normalization=None) -> "FingerprintDb":
        return replace(self, features=features, normalization=normalization)


def ap_universe(rows: Iterable[RawMeasurementRow]) -> list[str]:
    """AP ids in first-seen order."""
    seen: dict[str, None] = {}
    for row in rows:
        for ap in row.rssi:
            seen.setdefault(ap, None)
    return list(seen)


def corpus_floor_dbm(rows: Iterable[RawMeasurementRow], margin: float = 1.0) -> float:
    """Stand-in for the weakest representable RSSI: corpus minimum minus ``margin``."""
    values = [v for row in rows for vals in row.rssi.values() for v in vals]
    if not values:
        raise ValueError("corpus contains no RSSI values")
    return min(values) - margin


def resample_fixed_width(rows: Sequence[RawMeasurementRow], n: int, default_dbm: float,
                         rng: np.random.Generator, ap_ids: Sequence[str] | None = None,
                         copies: int = 1, resample_complete: bool = True) -> FingerprintDb:
    """Bootstrap each AP's readings into exactly ``n`` slots.

    Every slot is drawn with replacement from that AP's readings at the row's
    location; an AP without readings fills all slots with ``default_dbm``.
    ``copies`` independent resamples are produced per input row.  With
    ``resample_complete=False`` an AP that already has exactly ``n`` readings
    keeps them as recorded and only short or long lists are resampled.
    """
    if not rows:
        raise ValueError("no rows to resample")
    if n < 1:
        raise ValueError("width must be at least 1")
    if copies < 1:
        raise ValueError("copies must be at least 1")
    ap_ids = list(ap_ids) if ap_ids is not None else ap_universe(rows)
    feats = np.empty((len(rows) * copies, len(ap_ids) * n))
    locs = np.empty((len(rows) * copies, 2))
    out = 0
    for row in rows:
        for _ in range(copies):
            for a, ap in enumerate(ap_ids):
                values = row.rssi.get(ap, [])
                if not resample_complete and len(values) == n:
                    feats[out, a * n:(a + 1) * n] = values
                elif values:
                    feats[out, a * n:(a + 1) * n] = rng.choice(np.asarray(values, dtype=float), size=n, replace=True)
                else:
                    feats[out, a * n:(a + 1) * n] = default_dbm
            locs[out] = row.location
            out += 1
    return FingerprintDb(tuple(ap_ids), n, locs, feats)


def average_fingerprint(rows: Sequence[RawMeasurementRow], default_dbm: float | None = None,
                        ap_ids: Sequence[str] | None = None) -> FingerprintDb:
    """Width-1 database holding the per-AP mean RSSI of every row."""
    if not rows:
        raise ValueError("no rows to average")
    ap_ids = list(ap_ids) if ap_ids is not None else ap_universe(rows)
    if default_dbm is None and any(not row.rssi.get(ap) for row in rows for ap in ap_ids):
        default_dbm = corpus_floor_dbm(rows)
    feats = np.array([[float(np.mean(row.rssi[ap])) if row.rssi.get(ap) else default_dbm for ap in ap_ids]
                      for row in rows])
    locs = np.array([row.location for row in rows], dtype=float)
    return FingerprintDb(tuple(ap_ids), 1, locs, feats)


def average_slots(db: FingerprintDb) -> FingerprintDb:
    """Collapse each AP's ``width`` slots of a fixed-width database to their mean."""
    feats = db.features.reshape(len(db), len(db.ap_ids), db.width).mean(axis=2)
    return replace(db, width=1, features=feats)


def normalize(db: FingerprintDb, mode: str) -> FingerprintDb:
    """Fit ``mode`` scaling on ``db`` and store the parameters alongside it."""
    if db.normalization is not None:
        raise ValueError("database is already normalized")
    norm = Normalization.fit(db.features, mode)
    return db.with_features(norm.apply(db.features), norm)


def apply_normalization(db: FingerprintDb, norm: Normalization | None) -> FingerprintDb:
    """Scale a raw (e.g. test) database with parameters fitted elsewhere."""
    if norm is None:
        return db
    if db.normalization is not None:
        raise ValueError("database is already normalized")
    return db.with_features(norm.apply(db.features), norm)


def denormalize(db: FingerprintDb) -> FingerprintDb:
    if db.normalization is None:
        return db
    return db.with_features(db.normalization.invert(db.features), None)


def augment_permute(db: FingerprintDb, times: int, rng: np.random.Generator) -> FingerprintDb:
    """Append ``times`` synthetic copies of every row.

    Each copy shuffles the ``width`` slots of every AP independently, keeping
    location and label.  Originals come first, then the copies in blocks.
    """
    if times < 0:
        raise ValueError("times must be nonnegative")
    if times == 0:
        return db
    if db.normalization is not None and db.normalization.mode == "zscore" and db.width > 1:
        raise ValueError("permute before per-feature standardization; slots no longer share a scale")
    n, a, w = len(db), len(db.ap_ids), db.width
    cube = db.features.reshape(n, a, w)
    blocks = [db.features]
    for _ in range(times):
        order = np.argsort(rng.random((n, a, w)), axis=2)
        blocks.append(np.take_along_axis(cube, order, axis=2).reshape(n, a * w))
    reps = times + 1
    return replace(db, features=np.vstack(blocks), locations=np.tile(db.locations, (reps, 1)),
                   labels=None if db.labels is None else np.tile(db.labels, reps))


def voronoi_class_of(grid_points, point) -> int:
    """Index of the grid point nearest to ``point``; ties go to the lowest index."""
    grid_points = np.asarray(grid_points, dtype=float)
    if len(grid_points) == 0:
        raise ValueError("grid is empty")
    d2 = ((grid_points - np.asarray(point, dtype=float)) ** 2).sum(axis=1)
    return int(np.argmin(d2))


def voronoi_labels(grid_points, points) -> np.ndarray:
    grid_points = np.asarray(grid_points, dtype=float)
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    d2 = ((points[:, None, :] - grid_points[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1)


def with_voronoi_labels(db: FingerprintDb, grid_points) -> FingerprintDb:
    return replace(db, labels=voronoi_labels(grid_points, db.locations), grid=np.asarray(grid_points, dtype=float))


def split_train_validation(db: FingerprintDb, fraction: float,
                           rng: np.random.Generator) -> tuple[FingerprintDb, FingerprintDb]:
    """Random disjoint split; the first part gets ``floor(fraction * n)`` rows."""
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie strictly between 0 and 1")
    if len(db) < 2:
        raise ValueError("need at least two rows to split")
    n_train = min(max(int(math.floor(fraction * len(db))), 1), len(db) - 1)
    perm = rng.permutation(len(db))
    return db.subset(np.sort(perm[:n_train])), db.subset(np.sort(perm[n_train:]))


def concat(dbs: Sequence[FingerprintDb]) -> FingerprintDb:
    first = dbs[0]
    for other in dbs[1:]:
        if other.ap_ids != first.ap_ids or other.width != first.width:
            raise ValueError("databases disagree on AP set or width")
    labels = None
    if all(d.labels is not None for d in dbs):
        labels = np.concatenate([d.labels for d in dbs])
    return replace(first, locations=np.vstack([d.locations for d in dbs]),
                   features=np.vstack([d.features for d in dbs]), labels=labels)


@dataclass(frozen=True)
class DatasetMeta:
    source: str  # "simulated", "uji" or "tkn"
    room_bounds: tuple[float, float]
    offset: tuple[float, float] = (0.0, 0.0)
    pruned_ap_ids: tuple[str, ...] = field(default=())
    kept_ap_ids: tuple[str, ...] = field(default=())

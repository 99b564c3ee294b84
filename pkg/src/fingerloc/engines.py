"""Localization engines behind one interface, shared by the bench harness and the CLI.

Every engine sees a :class:`FeatureSet`: the fixed-width fingerprints used by
the networks and the per-AP averages used by distance matching and the SVM.
"""

from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Sequence

import numpy as np

from .fingerprints import (FingerprintDb, Normalization, RawMeasurementRow, apply_normalization,
                           augment_permute, average_fingerprint, normalize, resample_fixed_width,
                           split_train_validation, with_voronoi_labels)
from .knn import KnnConfig, knn_localize_batch
from .nn import (AUTOENCODER_CONFIG, MlpModel, TrainConfig, build_autoencoder, build_regression_net,
                 encode, fine_tune, mlp_from_dict, mlp_to_dict, predict, train, train_autoencoder)
from .svm import KernelSpec, OvoModel, ovo_from_dict, ovo_to_dict, ovo_train, svm_localize_batch

ENGINES = ("ed_knn", "svm", "nn", "autoencoder+ed", "autoencoder+svm")


@dataclass(frozen=True)
class FeatureSet:
    """``fixed`` may hold several resampled rows per location; ``averaged`` holds one.

    Test sets always carry exactly one of each per location, in the same order.
    """

    fixed: FingerprintDb
    averaged: FingerprintDb

    def __len__(self):
        return len(self.fixed)

    @property
    def locations(self) -> np.ndarray:
        return self.fixed.locations


@dataclass(frozen=True)
class EngineConfig:
    knn_k: int = 3
    knn_weighting: str = "uniform"
    svm_kernel: str = "rbf"
    svm_gamma: float = 0.25
    svm_degree: int = 3
    svm_coef: float = 1.0
    svm_c: float = 1.0
    svm_k_top: int = 3
    svm_tol: float = 1e-3
    nn_hidden: int = 500
    nn_depth: int = 3
    nn_keep: float = 0.5
    nn_normalization: str = "minmax"  # minmax, zscore or none
    val_fraction: float = 0.7
    augment: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    ae_code_dim: int = 5
    ae_train: TrainConfig = AUTOENCODER_CONFIG

    @classmethod
    def from_dict(cls, d: dict) -> "EngineConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown engine settings: {sorted(unknown)}")
        for key in ("train", "ae_train"):
            if key in d and isinstance(d[key], dict):
                base = TrainConfig() if key == "train" else AUTOENCODER_CONFIG
                d[key] = replace(base, **d[key])
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    def kernel(self) -> KernelSpec:
        return KernelSpec(self.svm_kernel, self.svm_gamma, self.svm_degree, self.svm_coef)


@dataclass(frozen=True)
class Pipeline:
    """How raw rows become features: AP order, slot count and the missing-AP fill value."""

    ap_ids: tuple[str, ...]
    width: int
    default_dbm: float

    def features(self, rows: Sequence[RawMeasurementRow], rng: np.random.Generator,
                 copies: int = 1) -> FeatureSet:
        """Fixed-width rows (``copies`` per input row) plus one averaged row per input row."""
        # complete AP lists are kept as recorded; only short or long ones are resampled
        fixed = resample_fixed_width(rows, self.width, self.default_dbm, rng, ap_ids=self.ap_ids,
                                     copies=copies, resample_complete=False)
        return FeatureSet(fixed, average_fingerprint(rows, self.default_dbm, ap_ids=self.ap_ids))

    def to_dict(self) -> dict:
        return {"ap_ids": list(self.ap_ids), "width": self.width, "default_dbm": self.default_dbm}

    @classmethod
    def from_dict(cls, d: dict) -> "Pipeline":
        return cls(tuple(d["ap_ids"]), int(d["width"]), float(d["default_dbm"]))


def sub_rng(seed: int, *names) -> np.random.Generator:
    """Generator keyed by ``seed`` and a path of names, independent of call order."""
    key = [int(seed)] + [zlib.crc32(str(n).encode()) for n in names]
    return np.random.default_rng(key)


def _seed_int(rng: np.random.Generator) -> int:
    return int(rng.integers(2**31 - 1))


def _norm_fit(db: FingerprintDb, mode: str) -> FingerprintDb:
    return db if mode == "none" else normalize(db, mode)


def unique_location_grid(locations: np.ndarray) -> np.ndarray:
    """Distinct training locations in first-seen order; these act as classes."""
    _, first = np.unique(np.round(locations, 9), axis=0, return_index=True)
    return locations[np.sort(first)]


@dataclass
class Localizer:
    """A trained engine.  ``locate`` maps a :class:`FeatureSet` to coordinates."""

    engine: str
    config: EngineConfig
    knn_db: FingerprintDb | None = None
    ovo: OvoModel | None = None
    mlp: MlpModel | None = None
    autoencoder: MlpModel | None = None
    normalization: Normalization | None = None
    info: dict = field(default_factory=dict)

    def _net_input(self, fs: FeatureSet) -> np.ndarray:
        x = fs.fixed.features
        return x if self.normalization is None else self.normalization.apply(x)

    def locate(self, fs: FeatureSet) -> np.ndarray:
        cfg = self.config
        if self.engine == "ed_knn":
            return knn_localize_batch(self.knn_db, fs.averaged.features, KnnConfig(cfg.knn_k, cfg.knn_weighting))
        if self.engine == "svm":
            return svm_localize_batch(self.ovo, fs.averaged.features, cfg.svm_k_top)
        if self.engine == "nn":
            return predict(self.mlp, self._net_input(fs))
        codes = encode(self.autoencoder, self._net_input(fs))
        if self.engine == "autoencoder+ed":
            return knn_localize_batch(self.knn_db, codes, KnnConfig(cfg.knn_k, cfg.knn_weighting))
        return svm_localize_batch(self.ovo, codes, cfg.svm_k_top)

    def to_dict(self) -> dict:
        d = {"engine": self.engine, "config": self.config.to_dict(),
             "normalization": None if self.normalization is None else self.normalization.to_dict()}
        if self.knn_db is not None:
            d["knn_db"] = {"ap_ids": list(self.knn_db.ap_ids), "width": self.knn_db.width,
                           "locations": self.knn_db.locations.tolist(), "features": self.knn_db.features.tolist()}
        if self.ovo is not None:
            d["ovo"] = ovo_to_dict(self.ovo)
        if self.mlp is not None:
            d["mlp"] = mlp_to_dict(self.mlp)
        if self.autoencoder is not None:
            d["autoencoder"] = mlp_to_dict(self.autoencoder)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Localizer":
        if d.get("engine") not in ENGINES:
            raise ValueError(f"unknown engine {d.get('engine')!r}")
        knn_db = None
        if "knn_db" in d:
            k = d["knn_db"]
            knn_db = FingerprintDb(tuple(k["ap_ids"]), int(k["width"]), k["locations"], k["features"])
        return cls(d["engine"], EngineConfig.from_dict(d["config"]), knn_db,
                   ovo_from_dict(d["ovo"]) if "ovo" in d else None,
                   mlp_from_dict(d["mlp"]) if "mlp" in d else None,
                   mlp_from_dict(d["autoencoder"]) if "autoencoder" in d else None,
                   None if d.get("normalization") is None else Normalization.from_dict(d["normalization"]))


def _train_nn(fs: FeatureSet, cfg: EngineConfig, rng: np.random.Generator) -> Localizer:
    db = augment_permute(fs.fixed, cfg.augment, rng)
    db = _norm_fit(db, cfg.nn_normalization)
    tr, va = split_train_validation(db, cfg.val_fraction, rng)
    net = build_regression_net(db.dim, rng, cfg.nn_hidden, cfg.nn_depth, cfg.nn_keep)
    best, hist = train(net, tr, va, replace(cfg.train, seed=_seed_int(rng)))
    return Localizer("nn", cfg, mlp=best, normalization=db.normalization,
                     info={"best_epoch": hist.best_epoch, "stop_reason": hist.stop_reason, "history": hist})


def _train_autoencoder(fs: FeatureSet, cfg: EngineConfig, rng: np.random.Generator, engine: str) -> Localizer:
    db = _norm_fit(fs.fixed, cfg.nn_normalization)
    tr, va = split_train_validation(db, cfg.val_fraction, rng)
    ae = build_autoencoder(db.dim, cfg.ae_code_dim, rng)
    best, hist = train_autoencoder(ae, tr.features, va.features, replace(cfg.ae_train, seed=_seed_int(rng)))
    codes = FingerprintDb(tuple(f"code{i + 1}" for i in range(cfg.ae_code_dim)), 1, db.locations,
                          encode(best, db.features))
    out = Localizer(engine, cfg, autoencoder=best, normalization=db.normalization,
                    info={"best_epoch": hist.best_epoch, "stop_reason": hist.stop_reason})
    if engine == "autoencoder+ed":
        out.knn_db = codes
    else:
        out.ovo = ovo_train(with_voronoi_labels(codes, unique_location_grid(codes.locations)),
                            cfg.svm_c, cfg.kernel(), cfg.svm_tol)
    return out


def fit_localizer(engine: str, fs: FeatureSet, cfg: EngineConfig, rng: np.random.Generator) -> Localizer:
    """Train ``engine`` on a training :class:`FeatureSet`."""
    if engine == "ed_knn":
        return Localizer(engine, cfg, knn_db=fs.averaged)
    if engine == "svm":
        db = with_voronoi_labels(fs.averaged, unique_location_grid(fs.averaged.locations))
        return Localizer(engine, cfg, ovo=ovo_train(db, cfg.svm_c, cfg.kernel(), cfg.svm_tol))
    if engine == "nn":
        return _train_nn(fs, cfg, rng)
    if engine in ("autoencoder+ed", "autoencoder+svm"):
        return _train_autoencoder(fs, cfg, rng, engine)
    raise ValueError(f"unknown engine {engine!r}; choose from {', '.join(ENGINES)}")


def fine_tune_localizer(pretrained: Localizer, fs: FeatureSet, cfg: EngineConfig,
                        rng: np.random.Generator) -> Localizer:
    """Continue training a network localizer on new data, reusing its input scaling."""
    if pretrained.engine != "nn":
        raise ValueError("only nn localizers can be fine-tuned")
    db = augment_permute(fs.fixed, cfg.augment, rng)
    db = apply_normalization(db, pretrained.normalization)
    tr, va = split_train_validation(db, cfg.val_fraction, rng)
    best, hist = fine_tune(pretrained.mlp, tr, va, replace(cfg.train, seed=_seed_int(rng)))
    return Localizer("nn", cfg, mlp=best, normalization=pretrained.normalization,
                     info={"best_epoch": hist.best_epoch, "stop_reason": hist.stop_reason, "history": hist})


def location_errors(loc: Localizer, fs: FeatureSet) -> np.ndarray:
    return np.linalg.norm(loc.locate(fs) - fs.locations, axis=1)

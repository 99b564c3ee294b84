"""Mini-batch training with early stopping, fine-tuning and autoencoder fitting."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..fingerprints import FingerprintDb
from .model import MlpModel, backprop, forward, mse, penalty_value, predict
from .optim import make_optimizer


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"
    lr: float = 0.001
    batch_size: int = 100
    max_epochs: int = 500
    patience: int = 20
    penalty: str = "l2"
    penalty_lambda: float = 0.03
    rho: float = 0.9
    decay: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.batch_size < 1 or self.patience < 1 or self.max_epochs < 0:
            raise ValueError("batch_size and patience must be >= 1, max_epochs >= 0")
        if not 0 <= self.rho < 1 or not 0 < self.decay < 1:
            raise ValueError("need 0 <= rho < 1 and 0 < decay < 1")
        if self.penalty not in ("none", "l1", "l2"):
            raise ValueError(f"unknown penalty {self.penalty!r}")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_error: list[float] = field(default_factory=list)
    best_epoch: int = 0
    stop_reason: str = ""

    @property
    def best_val_error(self) -> float:
        return self.val_error[self.best_epoch]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "val_error_m"])
            for e, (tl, ve) in enumerate(zip(self.train_loss, self.val_error)):
                w.writerow([e, repr(tl), repr(ve)])


def fit(model: MlpModel, X, T, X_val, T_val, cfg: TrainConfig,
        metric: Callable[[MlpModel, np.ndarray, np.ndarray], float]) -> tuple[MlpModel, TrainHistory]:
    """Train ``model`` in place on transformed targets ``T``; return the best snapshot.

    Epoch 0 records the starting weights.  After every epoch ``metric`` is
    evaluated on the validation set; training stops once ``cfg.patience``
    epochs pass without a new minimum, or after ``cfg.max_epochs``.
    """
    X, T = np.asarray(X, dtype=float), np.asarray(T, dtype=float)
    if len(X) == 0:
        raise ValueError("empty training set")
    rng = np.random.default_rng(cfg.seed)
    opt = make_optimizer(cfg.optimizer, cfg.lr, cfg.rho, cfg.decay, cfg.eps)
    params = model.params()
    hist = TrainHistory()

    out, _ = forward(model, X)
    hist.train_loss.append(mse(out, T) + penalty_value(model, cfg.penalty, cfg.penalty_lambda))
    hist.val_error.append(metric(model, X_val, T_val))
    best = model.copy()
    hist.stop_reason = "max_epochs"
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(X))
        total = 0.0
        for s in range(0, len(X), cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            out, cache = forward(model, X[idx], train=True, rng=rng)
            total += mse(out, T[idx]) * len(idx)
            gw, gb = backprop(model, cache, T[idx], cfg.penalty, cfg.penalty_lambda)
            opt.step(params, gw + gb)
        hist.train_loss.append(total / len(X) + penalty_value(model, cfg.penalty, cfg.penalty_lambda))
        err = metric(model, X_val, T_val)
        if not math.isfinite(err):
            hist.val_error.append(err)
            hist.stop_reason = "diverged"
            break
        hist.val_error.append(err)
        if err < hist.val_error[hist.best_epoch]:
            hist.best_epoch = epoch
            best = model.copy()
        elif epoch - hist.best_epoch >= cfg.patience:
            hist.stop_reason = "patience"
            break
    return best, hist


def mean_location_error(model: MlpModel, X, T) -> float:
    """Mean Euclidean error in output units, after undoing target scaling."""
    pred = predict(model, X)
    truth = T * model.out_scale + model.out_shift
    return float(np.mean(np.linalg.norm(pred - truth, axis=1)))


def reconstruction_error(model: MlpModel, X, T) -> float:
    out, _ = forward(model, X)
    return mse(out, T)


def _center_targets(model: MlpModel, locations: np.ndarray, refit: bool) -> np.ndarray:
    # centered but not rescaled: the loss stays in squared meters, which sets
    # the balance against the weight penalty
    if refit:
        model.out_shift = locations.mean(axis=0)
        model.out_scale = np.ones(locations.shape[1])
    return (locations - model.out_shift) / model.out_scale


def train(model: MlpModel, train_db: FingerprintDb, val_db: FingerprintDb,
          cfg: TrainConfig = TrainConfig()) -> tuple[MlpModel, TrainHistory]:
    """Fit a location regressor; early stopping watches mean error in meters."""
    if len(train_db) == 0:
        raise ValueError("empty training set")
    _check_compatible(model, train_db, val_db)
    T = _center_targets(model, train_db.locations, refit=True)
    Tv = (val_db.locations - model.out_shift) / model.out_scale
    return fit(model, train_db.features, T, val_db.features, Tv, cfg, mean_location_error)


def fine_tune(pretrained: MlpModel, new_train_db: FingerprintDb, new_val_db: FingerprintDb,
              cfg: TrainConfig = TrainConfig()) -> tuple[MlpModel, TrainHistory]:
    """Continue training a copy of ``pretrained`` on new data, keeping its target scaling."""
    if len(new_train_db) == 0:
        raise ValueError("empty training set")
    model = pretrained.copy()
    _check_compatible(model, new_train_db, new_val_db)
    T = _center_targets(model, new_train_db.locations, refit=False)
    Tv = (new_val_db.locations - model.out_shift) / model.out_scale
    return fit(model, new_train_db.features, T, new_val_db.features, Tv, cfg, mean_location_error)


def _check_compatible(model, *dbs):
    for db in dbs:
        if db.dim != model.sizes[0]:
            raise ValueError(f"fingerprint width {db.dim} != network input {model.sizes[0]}")
    norms = {None if db.normalization is None else db.normalization.mode for db in dbs}
    if len(norms) > 1:
        raise ValueError("training and validation data are normalized differently")


def train_autoencoder(model: MlpModel, X, X_val, cfg: TrainConfig) -> tuple[MlpModel, TrainHistory]:
    """Minimise reconstruction MSE; early stopping watches validation reconstruction error."""
    return fit(model, X, X, X_val, X_val, cfg, reconstruction_error)


AUTOENCODER_CONFIG = TrainConfig(optimizer="sgd", lr=1.0, batch_size=50, max_epochs=200,
                                 patience=20, penalty="none", penalty_lambda=0.0)

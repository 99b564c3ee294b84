"""Soft-margin kernel SVM solved in the dual by SMO, with one-vs-one voting.

The binary solver minimises ``0.5 a'Qa - sum(a)`` with ``Q_ij = y_i y_j K_ij``
subject to ``0 <= a_i <= C`` and ``sum(a_i y_i) = 0``, always moving the
maximal KKT-violating pair.  Decision values are compared against 0.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.spatial.distance import cdist

from .fingerprints import FingerprintDb

TAU = 1e-12


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "rbf"  # "linear", "rbf" or "polynomial"
    gamma: float = 0.25
    degree: int = 3
    coef: float = 1.0

    def __post_init__(self):
        if self.kind not in ("linear", "rbf", "polynomial"):
            raise ValueError(f"unknown kernel {self.kind!r}")
        if self.kind == "rbf" and not self.gamma > 0:
            raise ValueError("rbf gamma must be positive")
        if self.kind == "polynomial" and self.degree < 1:
            raise ValueError("polynomial degree must be at least 1")

    def gram(self, X, Y) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if X.shape[1] != Y.shape[1]:
            raise ValueError(f"kernel inputs differ in width: {X.shape[1]} vs {Y.shape[1]}")
        if self.kind == "linear":
            return X @ Y.T
        if self.kind == "rbf":
            return np.exp(-self.gamma * cdist(X, Y, "sqeuclidean"))
        return (X @ Y.T + self.coef) ** self.degree

    def to_dict(self) -> dict:
        return {"kind": self.kind, "gamma": self.gamma, "degree": self.degree, "coef": self.coef}


def kernel_eval(spec: KernelSpec, x, y) -> float:
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"kernel inputs differ in shape: {x.shape} vs {y.shape}")
    return float(spec.gram(x.ravel()[None, :], y.ravel()[None, :])[0, 0])


class SmoConvergenceError(RuntimeError):
    def __init__(self, iterations, gap, alpha, bias):
        super().__init__(f"SMO did not converge after {iterations} iterations (KKT gap {gap:.3g})")
        self.iterations, self.gap, self.alpha, self.bias = iterations, gap, alpha, bias


@dataclass(frozen=True)
class BinarySvm:
    support_vectors: np.ndarray
    dual_coef: np.ndarray  # lambda_i * y_i for each support vector
    bias: float
    kernel: KernelSpec
    c_penalty: float
    sv_index: np.ndarray | None = None  # positions in the training set, when known

    def to_dict(self) -> dict:
        return {"support_vectors": self.support_vectors.tolist(), "dual_coef": self.dual_coef.tolist(),
                "bias": self.bias, "kernel": self.kernel.to_dict(), "c_penalty": self.c_penalty}

    @classmethod
    def from_dict(cls, d: dict) -> "BinarySvm":
        return cls(np.array(d["support_vectors"], dtype=float), np.array(d["dual_coef"], dtype=float),
                   float(d["bias"]), KernelSpec(**d["kernel"]), float(d["c_penalty"]))


def _bias(alpha, y, grad, c):
    free = (alpha > 0) & (alpha < c)
    yg = -y * grad
    if free.any():
        return float(yg[free].mean())
    lower = ((y > 0) & (alpha == 0)) | ((y < 0) & (alpha == c))
    upper = ((y < 0) & (alpha == 0)) | ((y > 0) & (alpha == c))
    lb = yg[lower].max() if lower.any() else None
    ub = yg[upper].min() if upper.any() else None
    if lb is None:
        return float(ub)
    if ub is None:
        return float(lb)
    return float(0.5 * (lb + ub))


def smo_gram(K: np.ndarray, y: np.ndarray, c_penalty: float, tol: float = 1e-3,
             max_iter: int | None = None) -> tuple[np.ndarray, float, int]:
    """Solve the dual for a precomputed Gram matrix; returns ``(alpha, b, iterations)``."""
    n = len(y)
    y = np.asarray(y, dtype=float)
    if not (np.any(y > 0) and np.any(y < 0)):
        raise ValueError("both labels must be present")
    if not tol > 0:
        raise ValueError("tol must be positive")
    if max_iter is None:
        max_iter = max(10_000, 100 * n)
    c = float(c_penalty)
    alpha = np.zeros(n)
    grad = -np.ones(n)
    diag = np.diag(K).copy()
    pos, neg = y > 0, y < 0
    for it in range(max_iter + 1):
        up = (pos & (alpha < c)) | (neg & (alpha > 0))
        low = (neg & (alpha < c)) | (pos & (alpha > 0))
        yg = -y * grad
        i = int(np.argmax(np.where(up, yg, -np.inf)))
        j = int(np.argmax(np.where(low, -yg, -np.inf)))
        gap = yg[i] - yg[j]
        if gap <= tol:
            return alpha, _bias(alpha, y, grad, c), it
        if it == max_iter:
            break
        eta = max(diag[i] + diag[j] - 2.0 * K[i, j], TAU)
        room_i = c - alpha[i] if y[i] > 0 else alpha[i]
        room_j = alpha[j] if y[j] > 0 else c - alpha[j]
        t = min(gap / eta, room_i, room_j)
        # a step that reaches the box lands on it exactly
        alpha[i] = (c if y[i] > 0 else 0.0) if t == room_i else alpha[i] + y[i] * t
        alpha[j] = (0.0 if y[j] > 0 else c) if t == room_j else alpha[j] - y[j] * t
        grad += y * (K[:, i] - K[:, j]) * t
    raise SmoConvergenceError(max_iter, float(gap), alpha, _bias(alpha, y, grad, c))


def smo_solve(points, labels, c_penalty: float = 1.0, spec: KernelSpec = KernelSpec(),
              tol: float = 1e-3, max_iter: int | None = None) -> BinarySvm:
    X = np.atleast_2d(np.asarray(points, dtype=float))
    y = np.asarray(labels, dtype=float)
    if set(np.unique(y)) - {-1.0, 1.0}:
        raise ValueError("labels must be -1 or +1")
    alpha, b, _ = smo_gram(spec.gram(X, X), y, c_penalty, tol, max_iter)
    sv = np.flatnonzero(alpha > 0)
    return BinarySvm(X[sv], alpha[sv] * y[sv], b, spec, float(c_penalty), sv_index=sv)


def dual_objective(alpha, y, K) -> float:
    ay = np.asarray(alpha) * np.asarray(y)
    return float(np.sum(alpha) - 0.5 * ay @ K @ ay)


def svm_decision(model: BinarySvm, x) -> float | np.ndarray:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    scores = model.kernel.gram(np.atleast_2d(x), model.support_vectors) @ model.dual_coef + model.bias
    return float(scores[0]) if single else scores


@dataclass
class OvoModel:
    """Pairwise classifiers over classes ``classes`` with representative ``class_locations``."""

    classes: np.ndarray
    class_locations: np.ndarray
    points: np.ndarray
    pairs: list[tuple[int, int]]
    machines: list[BinarySvm]
    kernel: KernelSpec
    c_penalty: float
    _coef: sparse.csc_matrix | None = field(default=None, repr=False)

    def _compiled(self):
        if self._coef is None:
            rows, cols, vals = [], [], []
            for p, m in enumerate(self.machines):
                rows.append(m.sv_index)
                cols.append(np.full(len(m.sv_index), p))
                vals.append(m.dual_coef)
            self._coef = sparse.csc_matrix(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                shape=(len(self.points), len(self.machines)))
            self._bias = np.array([m.bias for m in self.machines])
            self._first = np.array([a for a, _ in self.pairs])
            self._second = np.array([b for _, b in self.pairs])
        return self._coef

    def pair_scores(self, X) -> np.ndarray:
        coef = self._compiled()
        K = self.kernel.gram(X, self.points)
        return np.asarray((coef.T @ K.T).T) + self._bias

    def votes(self, X, chunk: int = 256) -> np.ndarray:
        """Vote counts, one row per query and one column per entry of ``classes``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.points.shape[1]:
            raise ValueError(f"fingerprint width {X.shape[1]} != model width {self.points.shape[1]}")
        self._compiled()
        nc = len(self.classes)
        out = np.empty((len(X), nc), dtype=np.int64)
        for s in range(0, len(X), chunk):
            scores = self.pair_scores(X[s:s + chunk])
            winners = np.where(scores >= 0, self._first, self._second)
            flat = winners + nc * np.arange(len(winners))[:, None]
            out[s:s + chunk] = np.bincount(flat.ravel(), minlength=nc * len(winners)).reshape(-1, nc)
        return out


def ovo_train(db: FingerprintDb, c_penalty: float = 1.0, spec: KernelSpec = KernelSpec(),
              tol: float = 1e-3) -> OvoModel:
    """Train one binary SVM per unordered pair of classes present in ``db``."""
    if db.labels is None:
        raise ValueError("database has no class labels")
    classes = np.unique(db.labels)
    if len(classes) < 2:
        raise ValueError("need at least two classes")
    if db.grid is not None:
        locs = db.grid[classes]
    else:
        locs = np.array([db.locations[db.labels == c].mean(axis=0) for c in classes])
    X = db.features
    K = spec.gram(X, X)
    members = [np.flatnonzero(db.labels == c) for c in classes]
    pairs, machines = [], []
    for a, b in itertools.combinations(range(len(classes)), 2):
        idx = np.concatenate([members[a], members[b]])
        y = np.concatenate([np.ones(len(members[a])), -np.ones(len(members[b]))])
        alpha, bias, _ = smo_gram(K[np.ix_(idx, idx)], y, c_penalty, tol)
        sv = alpha > 0
        machines.append(BinarySvm(X[idx[sv]], alpha[sv] * y[sv], bias, spec, float(c_penalty), sv_index=idx[sv]))
        pairs.append((a, b))
    return OvoModel(classes, locs, X, pairs, machines, spec, float(c_penalty))


def ovo_classify_batch(model: OvoModel, X) -> np.ndarray:
    # argmax takes the first maximum, i.e. the smallest class index on ties
    return model.classes[np.argmax(model.votes(X), axis=1)]


def ovo_classify(model: OvoModel, x) -> int:
    return int(ovo_classify_batch(model, np.asarray(x, dtype=float)[None, :])[0])


def svm_localize_batch(model: OvoModel, X, k_top: int = 3) -> np.ndarray:
    if k_top < 1:
        raise ValueError("k_top must be at least 1")
    votes = model.votes(X)
    top = np.argsort(-votes, axis=1, kind="stable")[:, :min(k_top, len(model.classes))]
    return model.class_locations[top].mean(axis=1)


def svm_localize(model: OvoModel, x, k_top: int = 3) -> np.ndarray:
    return svm_localize_batch(model, np.asarray(x, dtype=float)[None, :], k_top)[0]


def ovo_to_dict(model: OvoModel) -> dict:
    return {
        "kernel": model.kernel.to_dict(), "c_penalty": model.c_penalty,
        "classes": model.classes.tolist(), "class_locations": model.class_locations.tolist(),
        "points": model.points.tolist(),
        "machines": [{"pair": [int(a), int(b)], "sv_index": m.sv_index.tolist(),
                      "dual_coef": m.dual_coef.tolist(), "bias": m.bias}
                     for (a, b), m in zip(model.pairs, model.machines)],
    }


def ovo_from_dict(d: dict) -> OvoModel:
    spec = KernelSpec(**d["kernel"])
    points = np.array(d["points"], dtype=float)
    pairs, machines = [], []
    for m in d["machines"]:
        idx = np.array(m["sv_index"], dtype=np.int64)
        pairs.append(tuple(m["pair"]))
        machines.append(BinarySvm(points[idx], np.array(m["dual_coef"], dtype=float), float(m["bias"]),
                                  spec, float(d["c_penalty"]), sv_index=idx))
    return OvoModel(np.array(d["classes"], dtype=np.int64), np.array(d["class_locations"], dtype=float),
                    points, pairs, machines, spec, float(d["c_penalty"]))

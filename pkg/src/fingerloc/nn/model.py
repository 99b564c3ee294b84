"""Fully connected networks: initialization, forward pass, loss and backprop."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("relu", "linear", "sigmoid")


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def activate(kind: str, z):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "linear":
        return z
    if kind == "sigmoid":
        return _sigmoid(z)
    raise ValueError(f"unknown activation {kind!r}")


def activation_grad(kind: str, z, a):
    """Derivative of the activation given pre-activation ``z`` and output ``a``."""
    if kind == "relu":
        return (z > 0).astype(z.dtype)  # subgradient 0 at the kink
    if kind == "linear":
        return np.ones_like(z)
    return a * (1.0 - a)


@dataclass
class MlpModel:
    """Weights ``W[i]`` map layer ``i`` (``sizes[i]`` units) to layer ``i + 1``.

    ``keep_probs[i]`` is the probability that a unit feeding layer ``i`` is kept
    during training.  At evaluation every unit is used and its outgoing signal is
    multiplied by the same probability.  Network outputs live in a shifted (and optionally scaled)
    target space; ``out_shift`` and ``out_scale`` map them back to coordinates.
    """

    sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[str]
    keep_probs: list[float]
    out_shift: np.ndarray = field(default_factory=lambda: np.zeros(1))
    out_scale: np.ndarray = field(default_factory=lambda: np.ones(1))

    def __post_init__(self):
        n_layers = len(self.sizes) - 1
        if not (len(self.weights) == len(self.biases) == len(self.activations) == len(self.keep_probs) == n_layers):
            raise ValueError("one weight matrix, bias, activation and keep probability per layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.sizes[i], self.sizes[i + 1]) or b.shape != (self.sizes[i + 1],):
                raise ValueError(f"layer {i} has shapes {w.shape}, {b.shape}")
        for p in self.keep_probs:
            if not 0 < p <= 1:
                raise ValueError(f"keep probability {p} outside (0, 1]")
        for a in self.activations:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def params(self) -> list[np.ndarray]:
        """Weights then biases, as live references."""
        return [*self.weights, *self.biases]

    def copy(self) -> "MlpModel":
        return copy.deepcopy(self)


def he_init(fan_in: int, shape, rng: np.random.Generator) -> np.ndarray:
    """Gaussian entries with mean 0 and variance ``2 / fan_in``."""
    if fan_in < 1:
        raise ValueError("fan_in must be at least 1")
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


def build_mlp(sizes, activations, keep_probs, rng: np.random.Generator) -> MlpModel:
    sizes = [int(s) for s in sizes]
    weights = [he_init(sizes[i], (sizes[i], sizes[i + 1]), rng) for i in range(len(sizes) - 1)]
    biases = [np.zeros(s) for s in sizes[1:]]
    return MlpModel(sizes, weights, biases, list(activations), [float(p) for p in keep_probs],
                    np.zeros(sizes[-1]), np.ones(sizes[-1]))


def build_regression_net(input_dim: int, rng: np.random.Generator, hidden: int = 500,
                         depth: int = 3, keep: float = 0.5, out_dim: int = 2) -> MlpModel:
    """Three ReLU layers of 500 units with dropout after each, then a linear 2-D output."""
    sizes = [input_dim] + [hidden] * depth + [out_dim]
    acts = ["relu"] * depth + ["linear"]
    keeps = [1.0] + [keep] * depth
    return build_mlp(sizes, acts, keeps, rng)


def build_autoencoder(input_dim: int, code_dim: int, rng: np.random.Generator,
                      code_activation: str = "sigmoid") -> MlpModel:
    if not 1 <= code_dim < input_dim:
        raise ValueError("code_dim must satisfy 1 <= code_dim < input_dim")
    return build_mlp([input_dim, code_dim, input_dim], [code_activation, "linear"], [1.0, 1.0], rng)


def encode(model: MlpModel, x) -> np.ndarray:
    """Code-layer activation of a two-layer autoencoder."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.sizes[0]:
        raise ValueError(f"input width {x.shape[-1]} != {model.sizes[0]}")
    return activate(model.activations[0], x @ model.weights[0] + model.biases[0])


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]  # input to each layer after dropout / scaling
    pre: list[np.ndarray]
    post: list[np.ndarray]
    masks: list[np.ndarray | None]
    train: bool


def sample_masks(model: MlpModel, batch_size: int, rng: np.random.Generator) -> list[np.ndarray | None]:
    return [None if p == 1.0 else (rng.random((batch_size, n)) < p).astype(float)
            for p, n in zip(model.keep_probs, model.sizes[:-1])]


def forward(model: MlpModel, batch, train: bool = False, rng: np.random.Generator | None = None,
            masks=None) -> tuple[np.ndarray, ForwardCache]:
    """Run ``batch`` through the network.

    In training mode a Bernoulli keep-mask is drawn per unit and example (or
    ``masks`` is used verbatim); in evaluation mode each layer's input is
    scaled by its keep probability instead.
    """
    a = np.atleast_2d(np.asarray(batch, dtype=float))
    if a.shape[1] != model.sizes[0]:
        raise ValueError(f"input width {a.shape[1]} != {model.sizes[0]}")
    if train and masks is None:
        if rng is None:
            raise ValueError("training mode needs a random generator or explicit masks")
        masks = sample_masks(model, len(a), rng)
    if not train:
        masks = [None] * len(model.weights)
    cache = ForwardCache([], [], [], list(masks), train)
    for i, (w, b, act, p) in enumerate(zip(model.weights, model.biases, model.activations, model.keep_probs)):
        if train and masks[i] is not None:
            a = a * masks[i]
        elif not train and p != 1.0:
            a = a * p
        z = a @ w + b
        cache.inputs.append(a)
        cache.pre.append(z)
        a = activate(act, z)
        cache.post.append(a)
    return a, cache


def penalty_value(model: MlpModel, penalty: str, lam: float) -> float:
    if penalty == "none" or lam == 0:
        return 0.0
    if penalty == "l2":
        return 0.5 * lam * sum(float(np.sum(w * w)) for w in model.weights)
    if penalty == "l1":
        return lam * sum(float(np.sum(np.abs(w))) for w in model.weights)
    raise ValueError(f"unknown penalty {penalty!r}")


def mse(outputs, targets) -> float:
    return float(np.mean((np.asarray(outputs) - np.asarray(targets)) ** 2))


def loss(model: MlpModel, batch, targets, penalty: str = "none", lam: float = 0.0,
         train: bool = False, rng=None, masks=None) -> float:
    """Mean squared error over all output entries plus the weight penalty (biases excluded)."""
    out, _ = forward(model, batch, train=train, rng=rng, masks=masks)
    targets = np.asarray(targets, dtype=float).reshape(out.shape)
    return mse(out, targets) + penalty_value(model, penalty, lam)


def backprop(model: MlpModel, cache: ForwardCache, targets, penalty: str = "none",
             lam: float = 0.0) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Exact gradients of :func:`loss` for the masks recorded in ``cache``."""
    out = cache.post[-1]
    targets = np.asarray(targets, dtype=float).reshape(out.shape)
    delta = 2.0 * (out - targets) / out.size
    gw: list[np.ndarray] = [None] * len(model.weights)
    gb: list[np.ndarray] = [None] * len(model.weights)
    for i in reversed(range(len(model.weights))):
        dz = delta * activation_grad(model.activations[i], cache.pre[i], cache.post[i])
        gw[i] = cache.inputs[i].T @ dz
        gb[i] = dz.sum(axis=0)
        if i == 0:
            break
        delta = dz @ model.weights[i].T
        if cache.train and cache.masks[i] is not None:
            delta = delta * cache.masks[i]
        elif not cache.train and model.keep_probs[i] != 1.0:
            delta = delta * model.keep_probs[i]
    if penalty == "l2" and lam:
        gw = [g + lam * w for g, w in zip(gw, model.weights)]
    elif penalty == "l1" and lam:
        gw = [g + lam * np.sign(w) for g, w in zip(gw, model.weights)]
    elif penalty not in ("none", "l1", "l2"):
        raise ValueError(f"unknown penalty {penalty!r}")
    return gw, gb


def predict(model: MlpModel, fingerprints) -> np.ndarray:
    """Evaluation-mode outputs mapped back to coordinates."""
    out, _ = forward(model, fingerprints, train=False)
    return out * model.out_scale + model.out_shift


FORMAT = "fingerloc-mlp"
VERSION = 1


def mlp_to_dict(model: MlpModel) -> dict:
    return {"format": FORMAT, "version": VERSION, "sizes": model.sizes, "activations": model.activations,
            "keep_probs": model.keep_probs, "weights": [w.tolist() for w in model.weights],
            "biases": [b.tolist() for b in model.biases], "out_shift": model.out_shift.tolist(),
            "out_scale": model.out_scale.tolist()}


def mlp_from_dict(d: dict) -> MlpModel:
    if d.get("format") != FORMAT or d.get("version") != VERSION:
        raise ValueError(f"unsupported model format {d.get('format')!r} v{d.get('version')}")
    sizes = [int(s) for s in d["sizes"]]
    weights = [np.array(w, dtype=float).reshape(sizes[i], sizes[i + 1]) for i, w in enumerate(d["weights"])]
    biases = [np.array(b, dtype=float).reshape(sizes[i + 1]) for i, b in enumerate(d["biases"])]
    return MlpModel(sizes, weights, biases, list(d["activations"]), [float(p) for p in d["keep_probs"]],
                    np.array(d["out_shift"], dtype=float), np.array(d["out_scale"], dtype=float))

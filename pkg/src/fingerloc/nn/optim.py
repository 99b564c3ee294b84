"""First-order update rules operating in place on lists of parameter arrays."""

from __future__ import annotations

import numpy as np


class Optimizer:
    def __init__(self, lr: float):
        if not lr > 0:
            raise ValueError("learning rate must be positive")
        self.lr = lr
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        for k, (p, g) in enumerate(zip(params, grads)):
            p += self._delta(k, p, g)

    def _delta(self, k, p, g):
        raise NotImplementedError


class Sgd(Optimizer):
    def _delta(self, k, p, g):
        return -self.lr * g


class Momentum(Optimizer):
    """Heavy-ball: ``dW = rho * dW_prev - lr * g``."""

    def __init__(self, lr, rho=0.9):
        super().__init__(lr)
        if not 0 <= rho < 1:
            raise ValueError("rho must lie in [0, 1)")
        self.rho = rho
        self.velocity: dict[int, np.ndarray] = {}

    def _delta(self, k, p, g):
        v = self.velocity.get(k)
        v = -self.lr * g if v is None else self.rho * v - self.lr * g
        self.velocity[k] = v
        return v


class AdaGrad(Optimizer):
    def __init__(self, lr, eps=1e-8):
        super().__init__(lr)
        self.eps = eps
        self.acc: dict[int, np.ndarray] = {}

    def _delta(self, k, p, g):
        acc = self.acc.get(k, 0.0) + g * g
        self.acc[k] = acc
        return -self.lr * g / (np.sqrt(acc) + self.eps)


class RMSProp(Optimizer):
    def __init__(self, lr, decay=0.9, eps=1e-8):
        super().__init__(lr)
        if not 0 < decay < 1:
            raise ValueError("decay must lie in (0, 1)")
        self.decay, self.eps = decay, eps
        self.acc: dict[int, np.ndarray] = {}

    def _delta(self, k, p, g):
        acc = self.decay * self.acc.get(k, 0.0) + (1 - self.decay) * g * g
        self.acc[k] = acc
        return -self.lr * g / (np.sqrt(acc) + self.eps)


class Adam(Optimizer):
    def __init__(self, lr=0.001, rho=0.9, decay=0.999, eps=1e-8):
        super().__init__(lr)
        if not 0 <= rho < 1 or not 0 < decay < 1:
            raise ValueError("need 0 <= rho < 1 and 0 < decay < 1")
        self.rho, self.decay, self.eps = rho, decay, eps
        self.m: dict[int, np.ndarray] = {}
        self.v: dict[int, np.ndarray] = {}

    def _delta(self, k, p, g):
        m = self.rho * self.m.get(k, 0.0) + (1 - self.rho) * g
        v = self.decay * self.v.get(k, 0.0) + (1 - self.decay) * g * g
        self.m[k], self.v[k] = m, v
        m_hat = m / (1 - self.rho ** self.t)
        v_hat = v / (1 - self.decay ** self.t)
        return -self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(kind: str, lr: float, rho: float = 0.9, decay: float = 0.999, eps: float = 1e-8) -> Optimizer:
    if kind == "sgd":
        return Sgd(lr)
    if kind == "momentum":
        return Momentum(lr, rho)
    if kind == "adagrad":
        return AdaGrad(lr, eps)
    if kind == "rmsprop":
        return RMSProp(lr, decay, eps)
    if kind == "adam":
        return Adam(lr, rho, decay, eps)
    raise ValueError(f"unknown optimizer {kind!r}")

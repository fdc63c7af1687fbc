"""Gradient-based parameter updates.

Plain SGD is the default; momentum and Adam are opt-in.
"""
from __future__ import annotations

import numpy as np

from ..errors import InvalidArgument


def sgd_step(params, grads, lr: float, direction: str = "descend"):
    """In-place ``p <- p -/+ lr * g`` over aligned parameter and gradient lists."""
    if lr <= 0:
        raise InvalidArgument(f"learning rate must be positive, got {lr}")
    if direction not in ("descend", "ascend"):
        raise InvalidArgument(f"direction must be 'descend' or 'ascend', got {direction!r}")
    if len(params) != len(grads):
        raise InvalidArgument("params and grads differ in length")
    sign = -1.0 if direction == "descend" else 1.0
    for p, g in zip(params, grads):
        g = np.asarray(g)
        if p.data.shape != g.shape:
            raise InvalidArgument(f"gradient shape {g.shape} does not match parameter {p.data.shape}")
        p.data += sign * lr * g
    return params


class SGD:
    def __init__(self, params, lr=0.01, momentum=0.0):
        if lr <= 0:
            raise InvalidArgument(f"learning rate must be positive, got {lr}")
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self._vel = [np.zeros_like(p.data) for p in self.params]

    def step(self, grads):
        if not self.momentum:
            sgd_step(self.params, grads, self.lr)
            return
        for p, g, v in zip(self.params, grads, self._vel):
            v *= self.momentum
            v += g
            p.data -= self.lr * v


class Adam:
    def __init__(self, params, lr=2e-4, beta1=0.5, beta2=0.999, eps=1e-8):
        if lr <= 0:
            raise InvalidArgument(f"learning rate must be positive, got {lr}")
        self.params = list(params)
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self._m, self._v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(name: str, params, lr: float, momentum: float = 0.9, beta1: float = 0.5):
    if name == "sgd":
        return SGD(params, lr)
    if name == "momentum":
        return SGD(params, lr, momentum=momentum)
    if name == "adam":
        return Adam(params, lr, beta1=beta1)
    raise InvalidArgument(f"unknown optimizer {name!r}; expected sgd, momentum or adam")

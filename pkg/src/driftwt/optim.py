"""First-order optimizers over flat float64 parameter vectors."""

import numpy as np

from .numerics import ContractError


class SGD:
    def __init__(self, lr=0.1, weight_decay=0.0, momentum=0.0):
        self.lr = lr
        self.weight_decay = weight_decay
        self.momentum = momentum
        self.buf = None
        self.t = 0

    def step(self, params, grad, lr=None):
        lr = self.lr if lr is None else lr
        g = grad + self.weight_decay * params if self.weight_decay else grad
        if self.momentum:
            self.buf = g.copy() if self.buf is None else self.momentum * self.buf + g
            g = self.buf
        self.t += 1
        return params - lr * g


class Adam:
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.m = None
        self.v = None
        self.t = 0

    def step(self, params, grad, lr=None):
        lr = self.lr if lr is None else lr
        g = grad + self.weight_decay * params if self.weight_decay else grad
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * g
        self.v = self.beta2 * self.v + (1 - self.beta2) * g * g
        mhat = self.m / (1 - self.beta1**self.t)
        vhat = self.v / (1 - self.beta2**self.t)
        return params - lr * mhat / (np.sqrt(vhat) + self.eps)


def make_optimizer(name, lr, weight_decay=0.0):
    if name == "sgd":
        return SGD(lr, weight_decay)
    if name == "adam":
        return Adam(lr, weight_decay=weight_decay)
    raise ContractError(f"optimizer: unknown value {name!r}")

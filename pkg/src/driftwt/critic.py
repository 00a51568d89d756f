"""Wasserstein-1 critic: a two-layer tanh network with an exact gradient-penalty gradient.

``Phi(z) = v . tanh(W z + b) + c``. The input gradient is
``W^T (v * (1 - tanh^2))`` and the penalty ``(|grad_z Phi| - 1)^2`` is
differentiated through it analytically, including the second-order term.
"""

import numpy as np

from .kernels import as_points
from .numerics import ContractError, Rng
from .optim import Adam


class Critic:
    def __init__(self, dim, hidden=16, kappa=10.0, lr=1e-4, seed=0, rng=None):
        if kappa < 0:
            raise ContractError("penalty coefficient must be non-negative")
        rng = rng if rng is not None else Rng(seed)
        self.dim = dim
        self.hidden = hidden
        self.kappa = float(kappa)
        self.lr = float(lr)
        self.W = rng.normal((hidden, dim)) / np.sqrt(dim)
        self.b = np.zeros(hidden)
        self.v = rng.normal(hidden) / np.sqrt(hidden)
        self.c = 0.0
        self.opt = Adam(lr)
        self.steps = 0

    # flat parameter view, order: W, b, v, c
    @property
    def n_params(self):
        return self.hidden * self.dim + 2 * self.hidden + 1

    def get_params(self):
        return np.concatenate([self.W.ravel(), self.b, self.v, [self.c]])

    def set_params(self, p):
        p = np.asarray(p, dtype=np.float64)
        h, d = self.hidden, self.dim
        self.W = p[: h * d].reshape(h, d).copy()
        self.b = p[h * d : h * d + h].copy()
        self.v = p[h * d + h : h * d + 2 * h].copy()
        self.c = float(p[-1])

    def _pack(self, dW, db, dv, dc):
        return np.concatenate([dW.ravel(), db, dv, [dc]])

    def values(self, Z):
        Z = as_points(Z)
        return np.tanh(Z @ self.W.T + self.b) @ self.v + self.c

    def input_grads(self, Z):
        Z = as_points(Z)
        T = np.tanh(Z @ self.W.T + self.b)
        return ((1.0 - T * T) * self.v) @ self.W

    def forward(self, z):
        """Value and input gradient at a single point."""
        z = np.asarray(z, dtype=np.float64).reshape(1, -1)
        if z.shape[1] != self.dim:
            raise ContractError(f"critic expects dimension {self.dim}, got {z.shape[1]}")
        return float(self.values(z)[0]), self.input_grads(z)[0]

    def _weighted_value_grad(self, Z, alpha):
        """Gradient of sum_i alpha_i Phi(z_i) w.r.t. the flat parameters."""
        T = np.tanh(Z @ self.W.T + self.b)
        S = 1.0 - T * T
        dA = alpha[:, None] * S * self.v
        return self._pack(dA.T @ Z, dA.sum(0), T.T @ alpha, float(alpha.sum()))

    def penalty(self, Zt):
        """Mean of (|grad_z Phi| - 1)^2 and its parameter gradient."""
        m = Zt.shape[0]
        T = np.tanh(Zt @ self.W.T + self.b)
        S = 1.0 - T * T
        U = S * self.v
        G = U @ self.W
        norms = np.sqrt((G * G).sum(1))
        value = float(((norms - 1.0) ** 2).mean())
        safe = np.where(norms > 0, norms, 1.0)
        # subgradient 0 where the input gradient vanishes
        coef = np.where(norms > 0, 2.0 * (norms - 1.0) / safe, 0.0) / m
        Q = coef[:, None] * G
        R = Q @ self.W.T
        dA = R * self.v * (-2.0 * T * S)
        dW = U.T @ Q + dA.T @ Zt
        return value, self._pack(dW, dA.sum(0), (R * S).sum(0), 0.0)

    def interpolates(self, train_reps, train_weights, val_reps, rng):
        """Points u * z_v + (1 - u) * z_tr on random pairs, m = min(n_tr, n_v).

        The train endpoint is drawn with probability proportional to its weight,
        uniformly when every weight is zero.
        """
        Ztr = as_points(train_reps)
        Zv = as_points(val_reps)
        m = min(Ztr.shape[0], Zv.shape[0])
        w = np.asarray(train_weights, dtype=np.float64)
        p = w if w.sum() > 0 else None
        i = rng.choice(Ztr.shape[0], m, p)
        j = rng.integers(Zv.shape[0], m)
        u = rng.uniform(m)[:, None]
        return u * Zv[j] + (1.0 - u) * Ztr[i]

    def penalized_loss(self, train_reps, train_weights, val_reps, rng=None, kappa=None, interp=None):
        """Loss E_{w p_tr}[Phi] - E_{p_te}[Phi] + kappa * penalty, and its parameter gradient."""
        Ztr = as_points(train_reps)
        Zv = as_points(val_reps)
        w = np.asarray(train_weights, dtype=np.float64)
        if Ztr.shape[0] == 0 or Zv.shape[0] == 0:
            raise ContractError("critic loss needs at least one train and one validation sample")
        if np.any(w < 0):
            raise ContractError("train weights must be non-negative")
        kappa = self.kappa if kappa is None else kappa
        n_tr, n_v = Ztr.shape[0], Zv.shape[0]
        loss = float(w @ self.values(Ztr) / n_tr - self.values(Zv).mean())
        grad = self._weighted_value_grad(Ztr, w / n_tr) - self._weighted_value_grad(Zv, np.full(n_v, 1.0 / n_v))
        if kappa > 0:
            if interp is None:
                interp = self.interpolates(Ztr, w, Zv, rng)
            pen, pgrad = self.penalty(as_points(interp))
            loss += kappa * pen
            grad = grad + kappa * pgrad
        return loss, grad

    def train_step(self, train_reps, train_weights, val_reps, rng, lr=None, use_penalty=True):
        """One Adam step descending the penalized loss (ascending the dual gap)."""
        if lr is not None and not lr > 0:
            raise ContractError("learning rate must be positive")
        loss, grad = self.penalized_loss(
            train_reps, train_weights, val_reps, rng, kappa=self.kappa if use_penalty else 0.0
        )
        self.set_params(self.opt.step(self.get_params(), grad, lr if lr is not None else self.lr))
        self.steps += 1
        return loss

"""One-hidden-layer tanh classifier with softmax cross-entropy and manual backprop.

Labels are 0-based class indices. The two data transformations used for weight
estimation live here because both read the classifier's forward pass: the
per-sample loss value and the L2-normalised hidden activation.
"""

from dataclasses import dataclass

import numpy as np

from .numerics import ContractError, Rng
from .optim import make_optimizer

LOSS_FLOOR = 1e-12


@dataclass
class LossBatch:
    losses: np.ndarray
    probs: np.ndarray
    hidden: np.ndarray
    xs: np.ndarray
    ys: np.ndarray

    def __len__(self):
        return self.losses.shape[0]


class Classifier:
    """MLP ``d -> hidden -> n_classes`` with tanh hidden units.

    ``input_scale`` multiplies the default N(0, 1/d) input-weight initialisation
    and ``bias_scale`` sets the std of the hidden biases. Large values give sharp,
    spatially spread hidden units, a high-capacity regime in which the network
    can memorise noisy labels.
    """

    def __init__(self, dim, n_classes, hidden=32, seed=0, rng=None, optimizer="sgd", lr=0.1,
                 weight_decay=0.0, input_scale=1.0, bias_scale=0.0):
        rng = rng if rng is not None else Rng(seed)
        self.dim = dim
        self.n_classes = n_classes
        self.hidden = hidden
        self.W1 = rng.normal((hidden, dim)) * (input_scale / np.sqrt(dim))
        self.b1 = rng.normal(hidden) * bias_scale
        self.W2 = rng.normal((n_classes, hidden)) / np.sqrt(hidden)
        self.b2 = np.zeros(n_classes)
        self.opt = make_optimizer(optimizer, lr, weight_decay)

    @property
    def n_params(self):
        return self.W1.size + self.b1.size + self.W2.size + self.b2.size

    def get_params(self):
        return np.concatenate([self.W1.ravel(), self.b1, self.W2.ravel(), self.b2])

    def set_params(self, p):
        p = np.asarray(p, dtype=np.float64)
        h, d, C = self.hidden, self.dim, self.n_classes
        i = 0
        self.W1 = p[i : i + h * d].reshape(h, d).copy(); i += h * d
        self.b1 = p[i : i + h].copy(); i += h
        self.W2 = p[i : i + C * h].reshape(C, h).copy(); i += C * h
        self.b2 = p[i : i + C].copy()

    def hidden_layer(self, xs):
        return np.tanh(np.asarray(xs, dtype=np.float64) @ self.W1.T + self.b1)

    def logits(self, xs):
        return self.hidden_layer(xs) @ self.W2.T + self.b2

    def predict(self, xs):
        return np.argmax(self.logits(xs), axis=1)

    def forward(self, xs):
        """Hidden activations and logits."""
        xs = np.asarray(xs, dtype=np.float64)
        H = self.hidden_layer(xs)
        return H, H @ self.W2.T + self.b2

    def loss(self, xs, ys, H, Z):
        ys = np.asarray(ys)
        if ys.size and (ys.min() < 0 or ys.max() >= self.n_classes):
            raise ContractError(f"labels must lie in [0, {self.n_classes})")
        Z = Z - Z.max(1, keepdims=True)
        logp = Z - np.log(np.exp(Z).sum(1))[:, None]
        losses = np.maximum(-logp[np.arange(len(ys)), ys], LOSS_FLOOR)
        return LossBatch(losses, np.exp(logp), H, np.asarray(xs, dtype=np.float64), ys)

    def forward_loss(self, xs, ys):
        """Per-sample softmax cross-entropy, floored at LOSS_FLOOR so every loss is positive."""
        H, Z = self.forward(xs)
        return self.loss(xs, ys, H, Z)

    def grad(self, lb, coefs):
        """Gradient of ``sum_i coefs_i * loss_i`` with respect to the flat parameters."""
        coefs = np.asarray(coefs, dtype=np.float64)
        n = len(lb)
        dZ = lb.probs.copy()
        dZ[np.arange(n), lb.ys] -= 1.0
        # losses clamped at the floor contribute no gradient
        active = lb.losses > LOSS_FLOOR
        dZ *= (coefs * active)[:, None]
        dW2 = dZ.T @ lb.hidden
        db2 = dZ.sum(0)
        dA = (dZ @ self.W2) * (1.0 - lb.hidden**2)
        dW1 = dA.T @ lb.xs
        db1 = dA.sum(0)
        return np.concatenate([dW1.ravel(), db1, dW2.ravel(), db2])

    def risk_grad(self, lb, weights=None):
        """Gradient of the weighted empirical risk (1/n) sum_i w_i loss_i."""
        n = len(lb)
        w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
        return self.grad(lb, w / n)

    def weighted_update(self, lb, weights, lr=None):
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != lb.losses.shape:
            raise ContractError(f"{w.shape[0]} weights for a batch of {len(lb)}")
        if np.any(w < 0):
            raise ContractError("weights must be non-negative")
        g = self.risk_grad(lb, w)
        self.set_params(self.opt.step(self.get_params(), g, lr))
        return g


def weighted_risk(lb, weights):
    return float(np.asarray(weights) @ lb.losses / len(lb))


def transform_loss(lb):
    """One-dimensional representations: each sample's loss value."""
    return lb.losses[:, None].copy()


def l2_normalize(H):
    norms = np.sqrt((H * H).sum(1, keepdims=True))
    return np.where(norms > 0, H / np.where(norms > 0, norms, 1.0), H)


def transform_hidden(clf, xs, ys):
    """Unit-norm hidden activations partitioned by label: {y: (indices, reps)}."""
    Z = l2_normalize(clf.hidden_layer(xs))
    ys = np.asarray(ys)
    return {int(y): (np.nonzero(ys == y)[0], Z[ys == y]) for y in np.unique(ys)}

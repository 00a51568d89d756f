"""Feasible sets for the weight-estimation problems and their Euclidean projections.

Three sets are supported:

* ``NonnegMeanBand(eps)``: ``{w : w >= 0, |mean(w) - 1| <= eps}`` (KMM, W1)
* ``NonnegWeightedSumOne(a)``: ``{b : b >= 0, a @ b = 1}`` (KLIEP)
* ``NonnegOrthant()``: ``{b : b >= 0}`` (LSIF)
"""

from dataclasses import dataclass, field

import numpy as np

from .numerics import ContractError, as_vec


class ConfigError(ValueError):
    """A constraint set was defined with parameters that make it empty or invalid."""


def project_scaled_simplex(x, total):
    """Euclidean projection onto ``{y >= 0, sum(y) = total}`` by the sorted-threshold rule."""
    n = x.shape[0]
    if total <= 0:
        return np.zeros(n)
    u = np.sort(x)[::-1]
    css = np.cumsum(u) - total
    ks = np.arange(1, n + 1)
    rho = np.nonzero(u - css / ks > 0)[0][-1]
    tau = css[rho] / (rho + 1)
    return np.maximum(x - tau, 0.0)


@dataclass(frozen=True)
class NonnegMeanBand:
    epsilon: float = 0.1

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigError(f"mean-band slack must be positive, got {self.epsilon}")

    def project(self, x):
        x = as_vec(x)
        y = np.maximum(x, 0.0)
        n = y.shape[0]
        m = y.mean()
        lo, hi = 1.0 - self.epsilon, 1.0 + self.epsilon
        # the 1e-13 slack keeps already-projected points fixed despite summation roundoff
        if m > hi + 1e-13:
            return project_scaled_simplex(x, n * hi)
        if m < lo - 1e-13:
            # the lower bound is only active when clipping pushed the mean below it;
            # the orthant-and-equality projection then shifts every entry upward
            return project_scaled_simplex(x, n * max(lo, 0.0))
        return y

    def is_feasible(self, x, tol=0.0):
        x = as_vec(x)
        return bool(np.all(x >= -tol) and abs(x.mean() - 1.0) <= self.epsilon + tol)


@dataclass(frozen=True)
class NonnegWeightedSumOne:
    a: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = as_vec(self.a, "a")
        if np.any(a < 0) or not np.all(np.isfinite(a)):
            raise ConfigError("weighted-sum constraint needs finite, non-negative coefficients")
        if not a.sum() > 0:
            raise ConfigError("weighted-sum constraint needs at least one positive coefficient")
        object.__setattr__(self, "a", a)

    def _beta(self, x, tau):
        return np.maximum(x - tau * self.a, 0.0)

    def project(self, x):
        """max(x - tau a, 0) with tau chosen so that a @ beta = 1.

        a @ beta(tau) is piecewise linear and nonincreasing in tau with kinks at
        the breakpoints x_l / a_l. The crossing segment is found by scanning the
        sorted breakpoints, then tau is solved in closed form on its support.
        Entries with a_l = 0 do not enter the constraint and are clipped at 0.
        """
        x = as_vec(x)
        a = self.a
        if x.shape != a.shape:
            raise ContractError(f"length mismatch: x has {x.shape[0]}, a has {a.shape[0]}")
        out = np.maximum(x, 0.0)
        pos = a > 0
        xp, ap = x[pos], a[pos]
        bp = xp / ap
        order = np.argsort(-bp, kind="stable")
        bs, xs, as_ = bp[order], xp[order], ap[order]
        # with the k largest breakpoints in the support: s(tau) = sx[k] - tau * sa[k]
        sx = np.cumsum(as_ * xs)
        sa = np.cumsum(as_ * as_)
        # value of s at the next breakpoint (support still the first k entries)
        nxt = np.append(bs[1:], -np.inf)
        s_next = sx - nxt * sa
        k = int(np.argmax(s_next >= 1.0))
        tau = (sx[k] - 1.0) / sa[k]
        out[pos] = np.maximum(xp - tau * ap, 0.0)
        return out

    def is_feasible(self, x, tol=0.0):
        x = as_vec(x)
        return bool(np.all(x >= -tol) and abs(self.a @ x - 1.0) <= tol)


@dataclass(frozen=True)
class NonnegOrthant:
    def project(self, x):
        return np.maximum(as_vec(x), 0.0)

    def is_feasible(self, x, tol=0.0):
        return bool(np.all(as_vec(x) >= -tol))


def project(constraint, x):
    return constraint.project(x)


def is_feasible(constraint, x, tol=0.0):
    if tol < 0:
        raise ContractError("tolerance must be non-negative")
    return constraint.is_feasible(x, tol)

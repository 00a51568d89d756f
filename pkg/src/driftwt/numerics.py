"""Dense arithmetic helpers, the package RNG and a central-difference gradient checker.

Vectors and matrices are plain float64 numpy arrays. The RNG is a counter-based
SplitMix64 generator so that streams are identical on every platform and numpy
version; nothing here touches numpy's global or default generators.
"""

import math

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


class ContractError(ValueError):
    """A documented precondition of a public operation was violated."""


class EvaluationError(ArithmeticError):
    """A function returned a non-finite value where a finite one was required."""


def as_vec(x, name="x"):
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ContractError(f"{name} must be one-dimensional, got shape {v.shape}")
    return v


def as_mat(m, name="m"):
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise ContractError(f"{name} must be two-dimensional, got shape {a.shape}")
    return a


def gemv(m, v):
    """Matrix-vector product with a dimension check."""
    m = as_mat(m, "m")
    v = as_vec(v, "v")
    if m.shape[1] != v.shape[0]:
        raise ContractError(f"gemv: matrix has {m.shape[1]} columns, vector has length {v.shape[0]}")
    return m @ v


def is_symmetric(m, tol=1e-12):
    m = as_mat(m)
    return m.shape[0] == m.shape[1] and bool(np.all(np.abs(m - m.T) <= tol))


def power_iteration(matvec, n, iters=30):
    """Estimate the largest eigenvalue of a symmetric PSD operator.

    Starts from the all-ones vector, which is never orthogonal to the Perron
    vector of an entrywise-positive matrix such as an RBF Gram matrix.
    """
    v = np.ones(n) / math.sqrt(n)
    lam = 0.0
    for _ in range(iters):
        u = matvec(v)
        norm = float(np.linalg.norm(u))
        if norm == 0.0:
            return 0.0
        lam = float(v @ u)
        v = u / norm
    # Rayleigh quotient of the final iterate
    return max(lam, float(v @ matvec(v)))


def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


class Rng:
    """SplitMix64 in counter mode.

    Draw ``i`` (0-based) of a stream with seed ``s`` is
    ``mix64(s + (i + 1) * 0x9E3779B97F4A7C15 mod 2**64)`` where ``mix64`` is the
    SplitMix64 finaliser (shifts 30/27/31, multipliers 0xBF58476D1CE4E5B9 and
    0x94D049BB133111EB). Uniform doubles take the top 53 bits. Normals use the
    Box-Muller transform on consecutive pairs of uniforms.
    """

    def __init__(self, seed):
        self.seed = int(seed) & _MASK64
        self.counter = 0

    def __repr__(self):
        return f"Rng(seed={self.seed}, counter={self.counter})"

    def next_u64(self, n):
        ks = np.arange(self.counter + 1, self.counter + 1 + n, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            return _mix64(np.uint64(self.seed) + ks * _GOLDEN)

    def spawn(self, key):
        """Independent child stream identified by an integer or string key."""
        if isinstance(key, str):
            key = int.from_bytes(key.encode("utf8")[:8].ljust(8, b"\0"), "little") ^ len(key)
        with np.errstate(over="ignore"):
            base = _mix64(np.array([self.seed ^ (int(key) & _MASK64)], dtype=np.uint64) + _GOLDEN)
        return Rng(int(base[0]))

    def uniform(self, n=None, low=0.0, high=1.0):
        k = 1 if n is None else int(n)
        u = (self.next_u64(k) >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)
        u = low + (high - low) * u
        return float(u[0]) if n is None else u

    def normal(self, size=None, loc=0.0, scale=1.0):
        shape = () if size is None else (size if isinstance(size, tuple) else (int(size),))
        n = int(np.prod(shape)) if shape else 1
        m = (n + 1) // 2
        u = self.uniform(2 * m)
        u1 = 1.0 - u[:m]  # in (0, 1]
        u2 = u[m:]
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])[:n]
        z = loc + scale * z
        return float(z[0]) if size is None else z.reshape(shape)

    def integers(self, high, n=None):
        """Integers in [0, high) by scaling uniforms; bias is below 2**-40 for high < 2**13."""
        k = 1 if n is None else int(n)
        out = np.minimum((self.uniform(k) * high).astype(np.int64), high - 1)
        return int(out[0]) if n is None else out

    def permutation(self, n):
        return np.argsort(self.uniform(n), kind="stable")

    def choice(self, n, size, p=None):
        """Sample ``size`` indices from range(n) with replacement."""
        if p is None:
            return self.integers(n, size)
        cdf = np.cumsum(np.asarray(p, dtype=np.float64))
        cdf /= cdf[-1]
        return np.minimum(np.searchsorted(cdf, self.uniform(size), side="right"), n - 1)


def check_gradient(f, grad, x, h=1e-5):
    """Maximum relative error between ``grad(x)`` and central differences of ``f``.

    Returns ``max_i |g_i - fd_i| / (|g_i| + 1e-8)``. Raises EvaluationError if any
    evaluation of ``f`` is non-finite.
    """
    if not h > 0:
        raise ContractError("step h must be positive")
    x = np.array(x, dtype=np.float64)
    g = np.asarray(grad(x), dtype=np.float64).ravel()
    flat = x.ravel()
    worst = 0.0
    for i in range(flat.size):
        xp = flat.copy()
        xm = flat.copy()
        xp[i] += h
        xm[i] -= h
        fp = float(f(xp.reshape(x.shape)))
        fm = float(f(xm.reshape(x.shape)))
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise EvaluationError(f"non-finite function value near coordinate {i}")
        fd = (fp - fm) / (2 * h)
        worst = max(worst, abs(g[i] - fd) / (abs(g[i]) + 1e-8))
    return worst

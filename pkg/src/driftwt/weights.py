"""Global per-sample weight vector with index-based gather and scatter."""

import csv

import numpy as np

from .numerics import ContractError


class WeightStore:
    """Non-negative weights for every training sample, initialised to one.

    The trainer gathers a mini-batch's weights as the warm start for weight
    estimation and scatters the result back. An optional ``log`` list records
    (indices, gathered values) pairs so tests can audit the warm-start chain.
    """

    def __init__(self, n, fill=1.0):
        if n < 1:
            raise ContractError("weight store needs at least one sample")
        self.values = np.full(int(n), float(fill))
        self.log = None

    def __len__(self):
        return self.values.shape[0]

    def _check(self, indices):
        idx = np.asarray(indices, dtype=np.int64)
        if idx.ndim != 1:
            raise ContractError("indices must be one-dimensional")
        if idx.size and (idx.min() < 0 or idx.max() >= self.values.shape[0]):
            raise ContractError("index out of range")
        if np.unique(idx).size != idx.size:
            raise ContractError("duplicate index within one batch")
        return idx

    def gather(self, indices):
        idx = self._check(indices)
        out = self.values[idx].copy()
        if self.log is not None:
            self.log.append(("gather", idx.copy(), out.copy()))
        return out

    def scatter(self, indices, new_values):
        idx = self._check(indices)
        vals = np.asarray(new_values, dtype=np.float64)
        if vals.shape != idx.shape:
            raise ContractError(f"{vals.shape[0]} values for {idx.shape[0]} indices")
        if np.any(vals < 0) or not np.all(np.isfinite(vals)):
            raise ContractError("weights must be finite and non-negative (project before scatter)")
        self.values[idx] = vals
        if self.log is not None:
            self.log.append(("scatter", idx.copy(), vals.copy()))
        return self

    def to_csv(self, path, is_noisy=None):
        """Columns: index, weight, is_noisy (0/1, empty when unknown)."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "weight", "is_noisy"])
            for i, v in enumerate(self.values):
                flag = "" if is_noisy is None else int(bool(is_noisy[i]))
                w.writerow([i, repr(float(v)), flag])


def init(n_tr):
    return WeightStore(n_tr)


def gather(ws, indices):
    return ws.gather(indices)


def scatter(ws, indices, new_values):
    return ws.scatter(indices, new_values)

"""Bi-level training loops: accelerated dynamic importance weighting and baselines.

Per mini-batch the loop fetches a training batch and a validation batch, runs
the classifier forward, maps both batches to representations (loss values or
normalised hidden activations), advances weight estimation by a few warm-started
PGD steps, writes the weights back to the global store and takes one
weighted-risk step on the classifier.
"""

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import pgd
from .critic import Critic
from .kernels import BasisSet, RbfKernel, as_points, gram, median_heuristic
from .metrics import StageTimer, accuracy, balanced_accuracy, stage_report, weight_stats
from .model import Classifier, l2_normalize, transform_loss
from .numerics import ContractError, Rng
from .objectives import KINDS, KLIEPObjective, LSIFObjective, W1Objective, kmm_build
from .weights import WeightStore

BASELINES = ("uniform", "random", "val_only", "diw_kmm")
TRANSFORMS = ("loss", "hidden")

# weight-estimation step sizes when none is configured; "auto" = 1/L for quadratics
DEFAULT_ETA = {"kmm": "auto", "lsif": "auto", "kliep": 0.5, "w1": 0.01}


@dataclass
class WEConfig:
    steps: int = 1
    eta: object = None  # None -> DEFAULT_ETA[estimator]
    epsilon: float = 0.1
    sigma: object = "auto"
    lam: float = 1e-5
    kappa: float = 10.0
    critic_lr: float = 1e-4
    critic_hidden: int = 16
    critic_updates: int = 3
    warm_start_batches: int = 50
    w2_clamp: bool = False
    diw_tol: float = 1e-8
    diw_max_iter: int = 10_000


@dataclass
class TrainConfig:
    estimator: str = "kmm"
    transform: str = "loss"
    baseline: object = None
    epochs: int = 100
    batch_size: int = 256
    val_batch_size: object = None  # None -> min(batch_size, n_v)
    lr: float = 0.1
    lr_schedule: str = "step"  # "step", "constant" or "inv_sqrt" (lr / sqrt(epochs))
    lr_decay_every: int = 100
    lr_decay_factor: float = 0.1
    optimizer: str = "sgd"
    weight_decay: float = 0.0
    hidden: int = 32
    input_scale: float = 1.0
    bias_scale: float = 0.0
    seed: int = 0
    topk: int = 5
    snapshot_every: int = 0  # copy the weight vector every k epochs (0: final only)
    we: WEConfig = field(default_factory=WEConfig)

    def __post_init__(self):
        if isinstance(self.we, dict):
            self.we = WEConfig(**self.we)
        if self.estimator not in KINDS:
            raise ContractError(f"estimator: unknown value {self.estimator!r}")
        if self.transform not in TRANSFORMS:
            raise ContractError(f"transform: unknown value {self.transform!r}")
        if self.baseline is not None and self.baseline not in BASELINES:
            raise ContractError(f"baseline: unknown value {self.baseline!r}")
        if self.optimizer not in ("sgd", "adam"):
            raise ContractError(f"optimizer: unknown value {self.optimizer!r}")
        if self.lr_schedule not in ("step", "constant", "inv_sqrt"):
            raise ContractError(f"lr_schedule: unknown value {self.lr_schedule!r}")
        if self.epochs < 1:
            raise ContractError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ContractError("batch_size must be positive")

    def lr_at(self, epoch):
        if self.lr_schedule == "constant":
            return self.lr
        if self.lr_schedule == "inv_sqrt":
            return self.lr / np.sqrt(self.epochs)
        if self.lr_schedule == "step":
            return self.lr * self.lr_decay_factor ** (epoch // self.lr_decay_every)
        raise ContractError(f"lr_schedule: unknown value {self.lr_schedule!r}")

    @property
    def eta(self):
        return DEFAULT_ETA[self.estimator] if self.we.eta is None else self.we.eta


@dataclass
class TrainReport:
    config: dict
    epochs: list = field(default_factory=list)
    weights: np.ndarray = None
    weight_stats: dict = field(default_factory=dict)
    stages: list = field(default_factory=list)
    skipped_batches: int = 0
    n_batches: int = 0
    notes: list = field(default_factory=list)
    model: object = None
    log: list = None
    snapshots: dict = field(default_factory=dict)

    def final(self, key, window=1):
        vals = [e[key] for e in self.epochs[-window:]]
        return float(np.mean(vals))

    def to_json_dict(self):
        return {
            "config": self.config,
            "epochs": self.epochs,
            "weight_stats": self.weight_stats,
            "stages": [list(r) for r in self.stages],
            "skipped_batches": self.skipped_batches,
            "n_batches": self.n_batches,
            "notes": self.notes,
        }


@dataclass(frozen=True)
class ClassPriorRatio:
    ratios: dict

    def __getitem__(self, y):
        return self.ratios[int(y)]


def estimate_class_prior_ratio(train_labels, val_labels, smoothing=1.0):
    """r_y = ((c_val(y) + s) / n_v) / ((c_tr(y) + s) / n_tr) for every training class."""
    tr = np.asarray(train_labels)
    va = np.asarray(val_labels)
    classes_tr = set(np.unique(tr).tolist())
    missing = set(np.unique(va).tolist()) - classes_tr
    if missing:
        raise ContractError(f"validation classes {sorted(missing)} do not occur in training data")
    n_tr, n_v = tr.size, va.size
    ratios = {}
    for y in sorted(classes_tr):
        ratios[int(y)] = ((np.sum(va == y) + smoothing) / n_v) / ((np.sum(tr == y) + smoothing) / n_tr)
    return ClassPriorRatio(ratios)


class ValLoader:
    """Shuffled validation mini-batches; reshuffles only when the epoch of batches runs out."""

    def __init__(self, n, batch_size, rng):
        self.n = n
        self.batch_size = min(batch_size, n)
        self.rng = rng
        self.order = None
        self.pos = 0
        self.rebuilds = 0

    def next(self):
        if self.order is None or self.pos + self.batch_size > self.n:
            self.order = self.rng.permutation(self.n)
            self.pos = 0
            self.rebuilds += 1
        idx = self.order[self.pos : self.pos + self.batch_size]
        self.pos += self.batch_size
        return idx


class _WeightEstimator:
    """Per-batch weight estimation for one group of samples (a batch or a class partition)."""

    def __init__(self, cfg, n_val, rng):
        self.cfg = cfg
        self.kind = "kmm" if cfg.baseline == "diw_kmm" else cfg.estimator
        self.we = cfg.we
        self.eta = "auto" if cfg.baseline == "diw_kmm" else cfg.eta
        # parametric state: one coefficient per validation sample, NaN until first visited
        self.beta = np.full(n_val, np.nan)
        self.critics = {}
        self.rng = rng
        self.batches_seen = 0

    def _kernel(self, z_tr, z_v):
        s = self.we.sigma
        return RbfKernel(median_heuristic(z_tr, z_v) if s == "auto" else float(s))

    def _pgd_cfg(self, clamp):
        if self.cfg.baseline == "diw_kmm":
            return pgd.PgdConfig(step_size="auto", mode="to_convergence", tol=self.we.diw_tol,
                                 max_iter=self.we.diw_max_iter)
        return pgd.PgdConfig(steps=self.we.steps, step_size=self.eta, w2_clamp=clamp)

    def critic(self, key, dim):
        c = self.critics.get(key)
        if c is None:
            c = self.critics[key] = Critic(dim, self.we.critic_hidden, self.we.kappa, self.we.critic_lr,
                                           rng=self.rng.spawn(f"critic-{key}"))
            c.rng = self.rng.spawn(f"critic-pairs-{key}")
        return c

    def estimate(self, z_tr, z_v, w0, v_idx, clamp=None, key=0):
        """Return (weights for the training group, WE start point)."""
        z_tr = as_points(z_tr)
        z_v = as_points(z_v)
        kind = self.kind
        if kind == "kmm":
            obj = kmm_build(self._kernel(z_tr, z_v), z_tr, z_v, self.we.epsilon)
            x0 = np.ones(len(w0)) if self.cfg.baseline == "diw_kmm" else w0
            res = pgd.run(obj, obj.constraint.project(x0), self._pgd_cfg(clamp))
            return res.x, x0
        if kind == "w1":
            c = self.critic(key, z_tr.shape[1])
            use_penalty = self.batches_seen >= self.we.warm_start_batches
            for _ in range(self.we.critic_updates):
                c.train_step(z_tr, w0, z_v, c.rng, use_penalty=use_penalty)
            obj = W1Objective(c.values(z_tr), c.values(z_v), self.we.epsilon)
            res = pgd.run(obj, obj.constraint.project(w0), self._pgd_cfg(clamp))
            return res.x, w0
        kernel = self._kernel(z_tr, z_v)
        Psi_tr = gram(kernel, z_tr, z_v)
        Psi_v = gram(kernel, z_v, z_v)
        basis = BasisSet(z_v)
        if kind == "kliep":
            obj = KLIEPObjective(basis, kernel, Psi_v, Psi_tr.mean(0))
        else:
            H = Psi_tr.T @ Psi_tr / Psi_tr.shape[0]
            obj = LSIFObjective(basis, kernel, 0.5 * (H + H.T), Psi_v.mean(0), self.we.lam)
        b0 = self.beta[v_idx]
        fresh = np.isnan(b0)
        if fresh.any():
            # start unvisited coefficients where uniform beta gives mean weight one
            b0[fresh] = 1.0 / Psi_tr.mean(0).sum()
        beta0 = obj.constraint.project(b0)
        res = pgd.run(obj, beta0, self._pgd_cfg(clamp))
        self.beta[v_idx] = res.x
        return np.maximum(Psi_tr @ res.x, 0.0), b0


def _threads():
    try:
        return max(1, int(os.environ.get("DRIFTWT_THREADS", "1")))
    except ValueError:
        return 1


class _Run:
    def __init__(self, data, cfg, timer=None, instrument=False, prior=None, profile_epochs=()):
        self.data = data
        self.cfg = cfg
        root = Rng(cfg.seed)
        self.shuffle_rng = root.spawn("shuffle")
        self.val_rng = root.spawn("val")
        self.random_rng = root.spawn("random-weights")
        self.train = data.val if cfg.baseline == "val_only" else data.train
        self.n = len(self.train)
        self.model = Classifier(data.dim, data.n_classes, cfg.hidden, rng=root.spawn("model"),
                                optimizer=cfg.optimizer, lr=cfg.lr, weight_decay=cfg.weight_decay,
                                input_scale=cfg.input_scale, bias_scale=cfg.bias_scale)
        self.store = WeightStore(self.n)
        self.uses_we = cfg.baseline in (None, "diw_kmm")
        self.estimator = _WeightEstimator(cfg, len(data.val), root.spawn("we")) if self.uses_we else None
        self.val_loader = ValLoader(len(data.val), cfg.val_batch_size or cfg.batch_size, self.val_rng)
        self.timer = timer or StageTimer()
        self.profile_epochs = set(profile_epochs)
        if self.profile_epochs:
            # record only inside the windows opened at the profiled epochs
            self.timer.active = self.timer.recording = False
        self.instrument = instrument
        self.log = [] if instrument else None
        if instrument:
            self.store.log = []
        self.prior = prior
        self.report = TrainReport(config=_config_dict(cfg))
        if cfg.baseline == "diw_kmm":
            self.report.notes.append("diw_kmm: weights reset to ones before every batch (no warm start)")

    # representations -------------------------------------------------------
    def _estimate_loss(self, lb_tr, lb_v, tr_idx, v_idx, clamp):
        w0 = self.store.gather(tr_idx)
        w, start = self.estimator.estimate(transform_loss(lb_tr), transform_loss(lb_v), w0, v_idx, clamp)
        if self.log is not None:
            self.log.append({"kind": "we", "indices": tr_idx.copy(), "gathered": w0, "start": np.array(start)})
        self.store.scatter(tr_idx, w)
        return w

    def _estimate_hidden(self, lb_tr, lb_v, tr_idx, v_idx, ys_tr, ys_v, clamp):
        Z_tr = l2_normalize(lb_tr.hidden)
        Z_v = l2_normalize(lb_v.hidden)
        w_batch = self.store.gather(tr_idx)
        jobs = []
        for y in np.unique(ys_tr):
            m_tr = np.nonzero(ys_tr == y)[0]
            m_v = np.nonzero(ys_v == y)[0]
            if len(m_tr) < 2 or len(m_v) < 2:
                continue
            jobs.append((int(y), m_tr, m_v))
        if not jobs:
            return np.zeros(len(tr_idx))
        r = self.prior

        def work(job):
            y, m_tr, m_v = job
            # stored weights carry the class-prior factor; undo it for the warm start
            w0 = w_batch[m_tr] / r[y]
            w, _ = self.estimator.estimate(Z_tr[m_tr], Z_v[m_v], w0, v_idx[m_v], clamp, key=y)
            return w * r[y]

        n_threads = min(_threads(), len(jobs))
        if n_threads > 1 and self.cfg.estimator != "w1":
            with ThreadPoolExecutor(n_threads) as ex:
                results = list(ex.map(work, jobs))
        else:
            results = [work(j) for j in jobs]
        w = w_batch.copy()
        for (y, m_tr, _), wy in zip(jobs, results):
            w[m_tr] = wy
        self.store.scatter(tr_idx, w)
        return w

    # main loop -------------------------------------------------------------
    def run(self):
        cfg, T, model = self.cfg, self.timer, self.model
        tr, val = self.train, self.data.val
        hidden = cfg.transform == "hidden" and cfg.baseline is None
        if hidden and self.prior is None:
            raise ContractError("hidden-layer transformation needs a class-prior ratio")
        st = {name: T.stage(name) for name in (
            "fetch tr data", "fetch val data", "forward tr data", "forward val data", "get tr loss",
            "get val loss", "estimate weights", "weight tr loss", "backward data", "update model")}
        for epoch in range(cfg.epochs):
            t_epoch = time.perf_counter()
            if epoch in self.profile_epochs:
                T.open_window()
            lr = cfg.lr_at(epoch)
            if cfg.baseline == "random":
                self.store.values = np.maximum(self.random_rng.normal(self.n), 0.0)
            perm = self.shuffle_rng.permutation(self.n)
            bs = min(cfg.batch_size, self.n)
            for start in range(0, self.n, bs):
                with st["fetch tr data"]:
                    tr_idx = perm[start : start + bs]
                    xb, yb = tr.x[tr_idx], tr.y[tr_idx]
                if len(tr_idx) < 2:
                    continue
                with st["forward tr data"]:
                    H, Z = model.forward(xb)
                with st["get tr loss"]:
                    lb = model.loss(xb, yb, H, Z)
                self.report.n_batches += 1
                if self.uses_we:
                    with st["fetch val data"]:
                        v_idx = self.val_loader.next()
                        xv, yv = val.x[v_idx], val.y[v_idx]
                    with st["forward val data"]:
                        Hv, Zv = model.forward(xv)
                    with st["get val loss"]:
                        lbv = model.loss(xv, yv, Hv, Zv)
                    with st["estimate weights"]:
                        clamp = None
                        if cfg.we.w2_clamp:
                            g_pre = model.risk_grad(lb, self.store.values[tr_idx])
                            clamp = float(np.sum((lr * g_pre) ** 2))
                        try:
                            if hidden:
                                w = self._estimate_hidden(lb, lbv, tr_idx, v_idx, yb, yv, clamp)
                            else:
                                w = self._estimate_loss(lb, lbv, tr_idx, v_idx, clamp)
                        except pgd.StepFailure:
                            self.report.skipped_batches += 1
                            T.step()
                            continue
                        self.estimator.batches_seen += 1
                else:
                    w = self.store.values[tr_idx]
                with st["weight tr loss"]:
                    risk = float(w @ lb.losses) / len(lb)
                with st["backward data"]:
                    g = model.risk_grad(lb, w)
                with st["update model"]:
                    model.set_params(model.opt.step(model.get_params(), g, lr))
                if self.log is not None:
                    self.log.append({"kind": "wc", "risk": risk, "weights": np.array(w), "losses": lb.losses.copy()})
                T.step()
            self._epoch_metrics(epoch, lr, time.perf_counter() - t_epoch)
            k = cfg.snapshot_every
            if k and (epoch + 1) % k == 0:
                self.report.snapshots[epoch + 1] = self.store.values.copy()
        return self._finish()

    def _epoch_metrics(self, epoch, lr, seconds):
        d, model = self.data, self.model
        k = min(self.cfg.topk, d.n_classes)
        logits = model.logits(d.test.x)
        top1, topk = accuracy(logits, d.test.clean_y, k)
        lb_all = model.forward_loss(self.train.x, self.train.y)
        g = model.risk_grad(lb_all, self.store.values)
        w = self.store.values
        noisy = self.train.is_noisy
        row = {
            "epoch": epoch + 1,
            "lr": lr,
            "test_acc": top1,
            f"test_top{k}": topk,
            "test_bal_acc": balanced_accuracy(logits, d.test.clean_y, d.n_classes),
            "val_acc": accuracy(model.logits(d.val.x), d.val.y)[0],
            "train_risk": float(w @ lb_all.losses / len(lb_all)),
            "grad_norm_sq": float(g @ g),
            "w_mean": float(w.mean()),
            "w_mean_clean": float(w[~noisy].mean()) if (~noisy).any() else float("nan"),
            "w_mean_noisy": float(w[noisy].mean()) if noisy.any() else float("nan"),
            "skipped": self.report.skipped_batches,
            "seconds": seconds,
        }
        self.report.epochs.append(row)

    def _finish(self):
        rep = self.report
        rep.weights = self.store.values.copy()
        groups = np.where(self.train.is_noisy, "noisy", "clean")
        rep.weight_stats = {
            "noise": weight_stats(rep.weights, groups).to_dict(),
            "class": weight_stats(rep.weights, self.train.y).to_dict(),
        }
        self.timer.finish()
        try:
            rep.stages = stage_report(self.timer)
        except ContractError:
            rep.stages = []
        rep.model = self.model
        rep.log = self.log
        if self.store.log is not None:
            rep.log = (self.log, self.store.log)
        return rep


def _config_dict(cfg):
    d = asdict(cfg)
    return d


def train_adiw(data, cfg, timer=None, instrument=False, profile_epochs=()):
    """Accelerated dynamic importance weighting with the loss-value transformation."""
    if len(data.val) == 0:
        raise ContractError("validation set is empty")
    if cfg.transform != "loss":
        cfg = TrainConfig(**{**asdict(cfg), "transform": "loss"})
    return _Run(data, cfg, timer, instrument, profile_epochs=profile_epochs).run()


def train_adiw_hidden(data, cfg, prior=None, timer=None, instrument=False, profile_epochs=()):
    """Class-wise weight estimation on L2-normalised hidden activations, scaled by r_y."""
    if len(data.val) == 0:
        raise ContractError("validation set is empty")
    if prior is None:
        prior = estimate_class_prior_ratio(data.train.y, data.val.y)
    if cfg.transform != "hidden":
        cfg = TrainConfig(**{**asdict(cfg), "transform": "hidden"})
    return _Run(data, cfg, timer, instrument, prior=prior, profile_epochs=profile_epochs).run()


def train_baseline(data, cfg, timer=None, instrument=False, profile_epochs=()):
    if cfg.baseline not in BASELINES:
        raise ContractError(f"baseline: unknown value {cfg.baseline!r}")
    return _Run(data, cfg, timer, instrument, profile_epochs=profile_epochs).run()


def train(data, cfg, timer=None, instrument=False, profile_epochs=()):
    """Dispatch on the config: baseline, hidden-layer or loss-value ADIW."""
    if cfg.baseline is not None:
        return train_baseline(data, cfg, timer, instrument, profile_epochs)
    if cfg.transform == "hidden":
        return train_adiw_hidden(data, cfg, timer=timer, instrument=instrument, profile_epochs=profile_epochs)
    return train_adiw(data, cfg, timer, instrument, profile_epochs)

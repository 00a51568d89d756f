"""Experiment specifications stored as INI files.

Sections: ``[experiment]`` (name, trials, seeds, out), ``[data]``, ``[train]``,
``[we]`` and an optional ``[sweep]`` whose keys are ``section.field`` and whose
values are comma-separated alternatives.
"""

import configparser
import itertools
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .constraints import ConfigError
from .data import (inject_pair_flip, inject_symmetric_flip, make_class_prior_shift, make_covariate_shift_1d,
                   make_gaussian_mixture, make_two_gaussians, from_csv)
from .numerics import ContractError
from .trainer import TrainConfig, WEConfig

DATA_KINDS = ("two_gaussians", "covariate_shift_1d", "gaussian_mixture", "class_prior", "csv")
NOISE_KINDS = ("none", "symmetric", "pair")


@dataclass
class DataSpec:
    kind: str = "two_gaussians"
    n_tr: int = 2000
    n_v: int = 100
    n_te: int = 2000
    dim: int = 2
    sep: float = 1.0
    var: float = 1.0
    shift: float = 1.0
    classes: int = 4
    radius: float = 2.0
    noise: str = "none"
    noise_rate: float = 0.0
    mu: float = 0.5
    rho: float = 20.0
    n_val_per_class: int = 10
    majority_per_class: int = 0  # 0: use every available sample
    path: str = ""

    def __post_init__(self):
        if self.kind not in DATA_KINDS:
            raise ContractError(f"kind: unknown value {self.kind!r}")
        if self.noise not in NOISE_KINDS:
            raise ContractError(f"noise: unknown value {self.noise!r}")


@dataclass
class ExperimentSpec:
    name: str = "experiment"
    trials: int = 1
    seeds: list = None
    out: str = "runs"
    data: DataSpec = field(default_factory=DataSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    sweep: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.seeds is None:
            self.seeds = list(range(self.trials))
        if len(self.seeds) != self.trials:
            raise ContractError(f"seeds: {len(self.seeds)} seeds for {self.trials} trials")


def _ring_means(C, d, radius):
    ang = 2 * np.pi * np.arange(C) / C
    means = np.zeros((C, d))
    means[:, 0] = radius * np.cos(ang)
    if d > 1:
        means[:, 1] = radius * np.sin(ang)
    return means


def build_dataset(spec, seed):
    """Materialise the data section for one trial seed."""
    s = spec
    if s.kind == "csv":
        ds = from_csv(s.path)
    elif s.kind == "covariate_shift_1d":
        ds = make_covariate_shift_1d(s.n_tr, s.n_v, s.n_te, seed, s.shift)
    elif s.kind == "two_gaussians":
        ds = make_two_gaussians(s.n_tr, s.n_v, s.n_te, seed, s.sep, s.var, s.dim)
    else:
        means = _ring_means(s.classes, s.dim, s.radius)
        ds = make_gaussian_mixture(s.classes, s.dim, means, [s.var] * s.classes, s.n_tr, s.n_v, s.n_te, seed)
        if s.kind == "class_prior":
            ds, _ = make_class_prior_shift(ds, s.mu, s.rho, s.n_val_per_class, seed, s.majority_per_class or None)
    if s.noise == "symmetric":
        ds = inject_symmetric_flip(ds, s.noise_rate, seed)
    elif s.noise == "pair":
        ds = inject_pair_flip(ds, s.noise_rate, seed)
    return ds


# ---------------------------------------------------------------------------
# text <-> values

def _fmt(v):
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


def _number(raw):
    try:
        return int(raw)
    except ValueError:
        return float(raw)


def _coerce(f, raw):
    raw = raw.strip()
    kind = f.type
    if kind is bool:
        low = raw.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    if kind is str:
        return raw
    if kind is list:
        return [_number(x) for x in raw.split(",") if x.strip()]
    # free-typed fields (None, "auto" or a number)
    if raw.lower() in ("none", ""):
        return None
    try:
        return _number(raw)
    except ValueError:
        return raw


def _line_index(text):
    """{(section, key): line number} for diagnostics."""
    where = {}
    section = None
    for no, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s[0] in "#;":
            continue
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip()
            where[(section, None)] = no
        elif "=" in s and section is not None:
            where[(section, s.split("=", 1)[0].strip().lower())] = no
    return where


class _Reader:
    def __init__(self, text, source):
        self.source = source
        self.lines = _line_index(text)
        self.cp = configparser.ConfigParser(interpolation=None)
        try:
            self.cp.read_string(text, source=source)
        except configparser.Error as e:
            raise ConfigError(f"{source}: {e}") from None

    def fail(self, section, key, msg):
        no = self.lines.get((section, key)) or self.lines.get((section, None))
        loc = f"{self.source}:{no}" if no else self.source
        raise ConfigError(f"{loc}: {section}.{key}: {msg}" if key else f"{loc}: [{section}]: {msg}")

    def values(self, section, cls, skip=()):
        if not self.cp.has_section(section):
            return {}
        known = {f.name: f for f in fields(cls) if f.name not in skip}
        out = {}
        for key, raw in self.cp.items(section):
            if key not in known:
                self.fail(section, key, "unknown field")
            try:
                out[key] = _coerce(known[key], raw)
            except ValueError as e:
                self.fail(section, key, str(e))
        return out

    def build(self, section, cls, kwargs):
        try:
            return cls(**kwargs)
        except ContractError as e:
            msg = str(e)
            key = msg.split(":", 1)[0].strip() if ":" in msg else None
            if key not in kwargs and key not in {f.name for f in fields(cls)}:
                key = None
            self.fail(section, key, msg.split(":", 1)[1].strip() if key else msg)


SECTIONS = ("experiment", "data", "train", "we", "sweep")


def parse_config(text, source="<config>"):
    r = _Reader(text, source)
    for s in r.cp.sections():
        if s not in SECTIONS:
            r.fail(s, None, "unknown section")
    data = r.build("data", DataSpec, r.values("data", DataSpec))
    we = r.build("we", WEConfig, r.values("we", WEConfig))
    train = r.build("train", TrainConfig, {**r.values("train", TrainConfig, skip=("we",)), "we": we})
    exp = r.values("experiment", ExperimentSpec, skip=("data", "train", "sweep"))
    if exp.get("seeds") is not None and "trials" not in exp:
        exp["trials"] = len(exp["seeds"])
    sweep = {}
    if r.cp.has_section("sweep"):
        for key, raw in r.cp.items("sweep"):
            sec, _, name = key.partition(".")
            target = {"data": DataSpec, "train": TrainConfig, "we": WEConfig}.get(sec)
            if target is None or name not in {f.name for f in fields(target)}:
                r.fail("sweep", key, "expected data.<field>, train.<field> or we.<field>")
            sweep[key] = [x.strip() for x in raw.split(",") if x.strip()]
    return r.build("experiment", ExperimentSpec, {**exp, "data": data, "train": train, "sweep": sweep})


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read(), source=str(path))


def dump_config(spec):
    """INI text that parses back to an equal spec."""
    lines = ["[experiment]"]
    for key in ("name", "trials", "seeds", "out"):
        lines.append(f"{key} = {_fmt(getattr(spec, key))}")
    lines += ["", "[data]"]
    lines += [f"{f.name} = {_fmt(getattr(spec.data, f.name))}" for f in fields(DataSpec)]
    lines += ["", "[train]"]
    lines += [f"{f.name} = {_fmt(getattr(spec.train, f.name))}" for f in fields(TrainConfig) if f.name != "we"]
    lines += ["", "[we]"]
    lines += [f"{f.name} = {_fmt(getattr(spec.train.we, f.name))}" for f in fields(WEConfig)]
    if spec.sweep:
        lines += ["", "[sweep]"]
        lines += [f"{k} = {', '.join(v)}" for k, v in spec.sweep.items()]
    return "\n".join(lines) + "\n"


def with_override(spec, key, raw):
    """Copy of ``spec`` with ``section.field`` set from its text form."""
    sec, _, name = key.partition(".")
    if sec == "data":
        f = {f.name: f for f in fields(DataSpec)}[name]
        return replace(spec, data=replace(spec.data, **{name: _coerce(f, raw)}))
    if sec == "we":
        f = {f.name: f for f in fields(WEConfig)}[name]
        return replace(spec, train=replace(spec.train, we=replace(spec.train.we, **{name: _coerce(f, raw)})))
    f = {f.name: f for f in fields(TrainConfig)}[name]
    return replace(spec, train=replace(spec.train, **{name: _coerce(f, raw)}))


def sweep_points(spec):
    """[(label, spec)] over the Cartesian product of the sweep alternatives."""
    if not spec.sweep:
        return [(spec.name, spec)]
    keys = list(spec.sweep)
    out = []
    for combo in itertools.product(*(spec.sweep[k] for k in keys)):
        s = replace(spec, sweep={})
        for k, v in zip(keys, combo):
            s = with_override(s, k, v)
        label = "_".join(f"{k.split('.', 1)[1]}-{v}" for k, v in zip(keys, combo))
        out.append((label, replace(s, name=f"{spec.name}_{label}")))
    return out

"""Experiment configuration: YAML files, flag overrides, validation, hashing."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .experiments import MAX_N, MAX_REPLICAS

KINDS = ("exact-suite", "spectral-suite", "simulate", "bg2", "lemma-scan", "cm-scan", "qv",
         "energy", "remainder", "kipnis")


@dataclass
class ModelSection:
    a: float = 0.0
    rho: float = 0.5
    n: list = field(default_factory=lambda: [128])
    N_factor: int = 1  # ring size N = N_factor * n


@dataclass
class StatisticSection:
    m: list = field(default_factory=lambda: [2])
    ell: list = field(default_factory=list)
    L: list = field(default_factory=list)
    eps: list = field(default_factory=list)
    eps_n: float = 0.125
    lemma: str = "renorm"
    ell0: int = 2


@dataclass
class ExperimentConfig:
    kind: str
    model: ModelSection = field(default_factory=ModelSection)
    statistic: StatisticSection = field(default_factory=StatisticSection)
    t: float = 0.1
    replicas: int = 100
    seed: int = 0
    out: str = "results"
    quick: bool = False

    # -- serialization ----------------------------------------------------
    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        model = ModelSection(**(d.pop("model", None) or {}))
        stat = StatisticSection(**(d.pop("statistic", None) or {}))
        cfg = cls(model=model, statistic=stat, **d)
        cfg.normalize()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise ValueError(f"{path}: config must be a mapping")
        return cls.from_dict(data)

    def dump(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=True), encoding="utf-8")

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def sha256(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    # -- overrides and validation -----------------------------------------
    def override(self, **flags) -> "ExperimentConfig":
        """Apply non-None flag values; dotted names address nested sections."""
        for key, value in flags.items():
            if value is None:
                continue
            target = self
            parts = key.split(".")
            for p in parts[:-1]:
                target = getattr(target, p)
            if not hasattr(target, parts[-1]):
                raise ValueError(f"unknown config key {key!r}")
            setattr(target, parts[-1], value)
        self.normalize()
        return self

    def normalize(self) -> None:
        m = self.model
        m.n = [int(x) for x in _as_list(m.n)]
        m.a, m.rho, m.N_factor = float(m.a), float(m.rho), int(m.N_factor)
        s = self.statistic
        s.m = [int(x) for x in _as_list(s.m)]
        s.ell = [int(x) for x in _as_list(s.ell)]
        s.L = [int(x) for x in _as_list(s.L)]
        s.eps = [float(x) for x in _as_list(s.eps)]
        s.eps_n, s.ell0 = float(s.eps_n), int(s.ell0)
        self.t, self.replicas, self.seed = float(self.t), int(self.replicas), int(self.seed)

    def validate(self) -> None:
        """Check grids against the preconditions of the launched experiment."""
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        m, s = self.model, self.statistic
        if not 0 < m.rho < 1:
            raise ValueError("rho must lie in (0, 1)")
        if m.a < 0:
            raise ValueError("a must be nonnegative")
        if m.N_factor < 1:
            raise ValueError("N_factor must be a positive integer")
        if self.kind in ("exact-suite", "spectral-suite"):
            return
        if not m.n:
            raise ValueError("empty n grid")
        for n in m.n:
            if not 2 <= n <= MAX_N:
                raise ValueError(f"n={n} outside [2, {MAX_N}]")
            if m.a > n ** 0.5:
                raise ValueError(f"a={m.a} exceeds sqrt(n) for n={n}")
        lo = 0 if self.kind == "kipnis" else 2
        if not lo <= self.replicas <= MAX_REPLICAS:
            raise ValueError(f"replicas must lie in [{lo}, {MAX_REPLICAS}]")
        if self.t <= 0:
            raise ValueError("t must be positive")
        if self.kind in ("bg2", "energy"):
            grid = s.eps + ([s.eps_n] if self.kind == "bg2" else [e / 2 for e in s.eps])
            for e in grid:
                for n in m.n:
                    if e * n < 2 or abs(e * n - round(e * n)) > 1e-9:
                        raise ValueError(f"eps*n = {e * n} must be an integer >= 2 (n={n})")
        if self.kind in ("lemma-scan", "cm-scan"):
            if not s.ell:
                raise ValueError("empty ell grid")
            for n in m.n:
                for mm in s.m:
                    for ell in s.ell + s.L:
                        if not mm <= ell <= n // 4:
                            raise ValueError(f"scale separation violated: need m <= ell <= n/4 "
                                             f"(m={mm}, ell={ell}, n={n})")
        if self.kind == "kipnis" and max(m.n) * m.N_factor > 12:
            raise ValueError("kipnis needs a small ring (N <= 12)")


# acceptance-scale defaults per experiment kind; flags and config files override
DEFAULTS = {
    "exact-suite": {},
    "spectral-suite": {},
    "simulate": {"model": {"a": 1.0, "rho": 0.5, "n": [256]}, "t": 0.05, "replicas": 400},
    "bg2": {"model": {"a": 0.0, "rho": 0.5, "n": [128, 256, 512]},
            "statistic": {"eps": [0.125, 0.0625, 0.03125, 0.015625], "eps_n": 0.125},
            "t": 0.1, "replicas": 200},
    "lemma-scan": {"model": {"a": 0.0, "rho": 0.5, "n": [256]},
                   "statistic": {"m": [2], "ell": [4, 8, 16, 32], "lemma": "renorm"},
                   "t": 0.1, "replicas": 100},
    "cm-scan": {"model": {"a": 0.0, "rho": 0.5, "n": [512]},
                "statistic": {"m": [1, 2, 4], "ell": [4, 6, 8, 11, 16, 23, 32]},
                "t": 0.1, "replicas": 100},
    "qv": {"model": {"a": 1.0, "rho": 0.5, "n": [512]}, "t": 0.1, "replicas": 2000},
    "energy": {"model": {"a": 1.0, "rho": 0.5, "n": [512]},
               "statistic": {"eps": [0.125, 0.0625, 0.03125, 0.015625]},
               "t": 0.1, "replicas": 400},
    "remainder": {"model": {"a": 1.0, "rho": 0.25, "n": [128, 181, 256, 362, 512]},
                  "t": 0.1, "replicas": 400},
    "kipnis": {"model": {"a": 0.0, "rho": 0.5, "n": [8]}, "statistic": {"m": [2], "ell": [4]},
               "t": 1.0, "replicas": 0},
}


def default_config(kind: str) -> ExperimentConfig:
    if kind not in DEFAULTS:
        raise ValueError(f"kind must be one of {KINDS}")
    return ExperimentConfig.from_dict({"kind": kind, **DEFAULTS[kind]})


def _as_list(v):
    if v is None:
        return []
    if isinstance(v, str):
        return [x for x in v.replace(" ", "").split(",") if x]
    if isinstance(v, (list, tuple)):
        return list(v)
    return [v]

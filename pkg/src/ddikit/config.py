"""Training configuration with a canonical ``key = value`` text form."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields, replace
from pathlib import Path

ABLATIONS = ("no_tsbkg", "no_hig", "mean_pool", "no_infomin")


@dataclass(frozen=True)
class TrainConfig:
    # graph construction
    k: int = 2
    node_cap: int = 200
    fp_bits: int = 1024
    fp_radius: int = 2
    # encoders
    d0: int = 64
    hidden: int = 64
    heads: int = 2
    L1: int = 2
    L2: int = 2
    L3: int = 2
    L4: int = 2
    gt_self_loops: bool = True
    gt_residual: bool = True
    # objective
    beta: float = 2.0
    gamma: float = -1.0  # negative: calibrate from the first batch
    gamma_ratio: float = 10.0
    center_reduction: str = "mean"
    # optimization
    epochs: int = 100
    batch_size: int = 64
    lr: float = 1e-3
    patience: int = 20
    seed: int = 0
    dtype: str = "float32"
    # evaluation
    fold_mode: str = "random"
    n_folds: int = 5
    valid_fraction: float = 0.1
    # ablations
    no_tsbkg: bool = False
    no_hig: bool = False
    mean_pool: bool = False
    no_infomin: bool = False

    def to_text(self) -> str:
        return "".join(f"{f.name} = {_fmt(getattr(self, f.name))}\n"
                       for f in sorted(fields(self), key=lambda f: f.name))

    def hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]

    def model_hash(self) -> str:
        """Hash of the fields that determine parameter shapes and forward semantics."""
        keys = ("k", "fp_bits", "d0", "hidden", "heads", "L1", "L2", "L3", "L4",
                "gt_self_loops", "gt_residual") + ABLATIONS
        text = "".join(f"{key}={_fmt(getattr(self, key))};" for key in keys)
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def with_overrides(self, overrides: dict | None = None, **kw) -> "TrainConfig":
        merged = dict(overrides or {}, **kw)
        return replace(self, **{k: _parse(self, k, v) for k, v in merged.items()})

    @classmethod
    def from_text(cls, text: str) -> "TrainConfig":
        base = cls()
        values = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"config line {lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key] = value
        return base.with_overrides(values)

    @classmethod
    def load(cls, path) -> "TrainConfig":
        return cls.from_text(Path(path).read_text())

    def save(self, path):
        Path(path).write_text(self.to_text())


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def _parse(cfg, key, value):
    types = {f.name: f.type for f in fields(cfg)}
    if key not in types:
        raise KeyError(f"unknown config key {key!r}")
    if not isinstance(value, str):
        return value
    kind = type(getattr(cfg, key))
    if kind is bool:
        low = value.lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"{key}: expected a boolean, got {value!r}")
        return low in ("true", "1", "yes")
    return kind(value)

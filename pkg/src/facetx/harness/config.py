"""Run configuration and its flat ``key = value`` file format."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from ..geometry import Geometry
from ..losses import LossWeights


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


GEOMETRY_KEYS = ("image_size", "channels", "feat_dim", "heads", "sem_classes")


@dataclass(frozen=True)
class Config:
    # geometry
    image_size: int = 64
    channels: int = 64
    feat_dim: int = 64
    heads: int = 4
    sem_classes: int = 8
    # loss weights
    lambda1: float = 5.0
    lambda2: float = 10.0
    lambda3: float = 0.001
    lambda4: float = 1.0
    # optimizer
    lr: float = 0.0002
    beta1: float = 0.5
    beta2: float = 0.999
    adam_eps: float = 1e-8
    # schedule and data
    batch_size: int = 4
    steps: int = 500
    n_pairs: int = 200
    seed: int = 0
    data_seed: int = 0
    ckpt_every: int = 100
    cx_select: bool = True
    deterministic: bool = True
    # paths
    data_path: str = ""
    ckpt_path: str = "checkpoint.ftx"
    metrics_path: str = "metrics.tsv"

    def __post_init__(self):
        try:
            self.geometry
            self.weights
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.batch_size < 1 or self.steps < 0 or self.n_pairs < 1:
            raise ConfigError("batch_size and n_pairs must be positive, steps nonnegative")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1) or self.lr <= 0:
            raise ConfigError("invalid optimizer settings")

    @property
    def geometry(self) -> Geometry:
        return Geometry(**{k: getattr(self, k) for k in GEOMETRY_KEYS})

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.lambda1, self.lambda2, self.lambda3, self.lambda4)

    def fingerprint(self) -> str:
        """Hash of the fields that fix parameter shapes; checkpoints are tied to it."""
        geo = {k: getattr(self, k) for k in GEOMETRY_KEYS}
        return hashlib.sha256(json.dumps(geo, sort_keys=True).encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        return asdict(self)

    def override(self, **kwargs) -> "Config":
        unknown = set(kwargs) - {f.name for f in fields(self)}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return replace(self, **kwargs)

    def to_text(self) -> str:
        return "".join(f"{f.name} = {_fmt(getattr(self, f.name))}\n" for f in fields(self))


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def _coerce(name: str, kind: type, raw: str):
    try:
        if kind is bool:
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        return kind(raw)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r} as {kind.__name__}") from None


_TYPES = {"int": int, "float": float, "bool": bool, "str": str}


def from_dict(values: dict) -> Config:
    types = {f.name: _TYPES[f.type] if isinstance(f.type, str) else f.type for f in fields(Config)}
    unknown = set(values) - set(types)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    parsed = {}
    for k, v in values.items():
        parsed[k] = _coerce(k, types[k], v) if isinstance(v, str) and types[k] is not str else v
    return Config(**parsed)


def parse_config(text: str) -> Config:
    """Parse ``key = value`` lines; ``#`` starts a comment, blank lines are ignored."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value
    return from_dict(values)


def load_config(path) -> Config:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)

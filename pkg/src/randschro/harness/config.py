"""Flat key=value experiment configuration."""

from __future__ import annotations

import ast
import dataclasses
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from typing import Any, Mapping


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


# keys that do not change results and are excluded from the config hash
_SCHEDULING_KEYS = ("workers", "out")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    # operator model
    E: float = 1.0
    sigma: float = 1.0
    n: int = 500
    omega: str = "gaussian"
    model: str = "critical"
    R: float = 20.0
    # SDE
    dt: float = 1e-4
    tau: float = 1.0
    beta: float = 2.0
    Tmax: float | None = None
    delta: float = 1e-3
    # sampling
    paths: int = 1000
    master_seed: int = 20240601
    lambda_grid: tuple = (0.0, 1.0, 2.0)
    window: tuple = (0.0, 2.0 * math.pi)
    extra: Mapping[str, Any] = field(default_factory=dict)
    # scheduling
    chunk: int = 2000
    workers: int = 1
    out: str = "runs/out"

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["lambda_grid"] = list(self.lambda_grid)
        d["window"] = list(self.window)
        d["extra"] = dict(self.extra)
        return d

    def hash(self) -> str:
        d = {k: v for k, v in self.as_dict().items() if k not in _SCHEDULING_KEYS}
        blob = json.dumps(d, sort_keys=True, default=repr).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def get(self, key: str, default=None):
        return self.extra.get(key, default)

    def replace(self, **kw) -> "ExperimentConfig":
        return validate(dataclasses.replace(self, **kw))


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _coerce(key: str, value: Any) -> Any:
    if key not in _FIELDS:
        return value
    f = _FIELDS[key]
    typ = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    try:
        if typ == "int":
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if typ == "float":
            return float(value)
        if typ == "float | None":
            return None if value is None else float(value)
        if typ == "str":
            return str(value)
        if typ == "tuple":
            if isinstance(value, (int, float)):
                value = (value,)
            return tuple(float(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(key, f"cannot interpret {value!r} as {typ}") from None
    return value


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    from .experiments import EXPERIMENTS

    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError("experiment", f"unknown experiment {cfg.experiment!r}")
    if not (abs(cfg.E) < 2):
        raise ConfigError("E", "energy must satisfy |E| < 2")
    if not cfg.sigma >= 0:
        raise ConfigError("sigma", "must be non-negative")
    if cfg.n < 1:
        raise ConfigError("n", "must be >= 1")
    if cfg.omega not in ("gaussian", "rademacher"):
        raise ConfigError("omega", "must be 'gaussian' or 'rademacher'")
    if cfg.model not in ("critical", "decaying"):
        raise ConfigError("model", "must be 'critical' or 'decaying'")
    if not cfg.R > 0:
        raise ConfigError("R", "must be positive")
    if not (cfg.dt > 0 and math.isfinite(cfg.dt)):
        raise ConfigError("dt", "must be positive")
    if not cfg.tau > 0:
        raise ConfigError("tau", "must be positive")
    if not cfg.beta > 0:
        raise ConfigError("beta", "must be positive")
    if cfg.Tmax is not None and not cfg.Tmax > 0:
        raise ConfigError("Tmax", "must be positive")
    if not (0 < cfg.delta < 1):
        raise ConfigError("delta", "must lie in (0, 1)")
    if cfg.paths < 1:
        raise ConfigError("paths", "must be >= 1")
    if not (0 <= cfg.master_seed < 2 ** 64):
        raise ConfigError("master_seed", "must be a 64-bit unsigned integer")
    if len(cfg.window) != 2 or not cfg.window[0] < cfg.window[1]:
        raise ConfigError("window", "must be an increasing pair")
    if cfg.chunk < 1:
        raise ConfigError("chunk", "must be >= 1")
    if cfg.workers < 1:
        raise ConfigError("workers", "must be >= 1")
    return cfg


def _literal(text: str) -> Any:
    text = text.strip()
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def parse_text(text: str) -> dict:
    """Parse ``key = value`` lines; '#' starts a comment; values are Python literals or bare strings."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected key = value, got {raw!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = _literal(v)
    return out


def from_mapping(d: Mapping[str, Any]) -> ExperimentConfig:
    from .experiments import EXPERIMENTS

    d = dict(d)
    if "experiment" not in d:
        raise ConfigError("experiment", "missing")
    name = d["experiment"]
    if name not in EXPERIMENTS:
        raise ConfigError("experiment", f"unknown experiment {name!r}")
    merged = dict(EXPERIMENTS[name].defaults)
    merged.update(d)
    extra = dict(merged.pop("extra", {}) or {})
    kw = {}
    for k, v in merged.items():
        if k in _FIELDS:
            kw[k] = _coerce(k, v)
        else:
            extra[k] = v
    kw["extra"] = extra
    return validate(ExperimentConfig(**kw))


def load_config(path: str | os.PathLike, overrides: Mapping[str, Any] | None = None) -> ExperimentConfig:
    with open(path) as fh:
        d = parse_text(fh.read())
    d.update(overrides or {})
    return from_mapping(d)


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []
    for k, v in cfg.as_dict().items():
        if k == "extra":
            for ek, ev in sorted(v.items()):
                lines.append(f"{ek} = {ev!r}")
        else:
            lines.append(f"{k} = {v!r}")
    return "\n".join(lines) + "\n"

"""JSON configuration files and the ``VP_SEED`` override."""

from __future__ import annotations

import json
import os
from dataclasses import fields

from .exceptions import InvalidArgumentError
from .harness import ExperimentConfig

SEED_ENV = "VP_SEED"

_FIELDS = {f.name for f in fields(ExperimentConfig)}


def env_seed(default: int) -> int:
    value = os.environ.get(SEED_ENV)
    if value is None or value == "":
        return default
    try:
        return int(value)
    except ValueError:
        raise InvalidArgumentError(f"{SEED_ENV} must be an integer, got {value!r}") from None


def config_from_dict(data: dict) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig`; a nested ``simnet`` block is flattened."""
    data = dict(data)
    simnet = data.pop("simnet", None) or {}
    for key in ("rtt_ms", "bandwidth_bps"):
        if key in simnet:
            data[key] = simnet[key]
    if "seed" in simnet and "seed" not in data:
        data["seed"] = simnet["seed"]
    unknown = set(data) - _FIELDS
    if unknown:
        raise InvalidArgumentError(f"unknown configuration keys: {sorted(unknown)}")
    for key in ("targets", "indices"):
        if data.get(key) is not None:
            data[key] = tuple(data[key])
    return ExperimentConfig(**data)


def load_config(path: str | None = None, **overrides) -> ExperimentConfig:
    """Read ``path`` (if any), apply non-``None`` overrides, then ``VP_SEED``."""
    data = {}
    if path:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    data.update({k: v for k, v in overrides.items() if v is not None})
    cfg = config_from_dict(data)
    cfg.seed = env_seed(cfg.seed)
    return cfg

"""Flat key = value run configuration.

A config file is plain text: one `key = value` per line, `#` starts a
comment, blank lines are ignored. Dotted prefixes route keys to the
sub-configurations (model.*, client.*, dp.*, aggregator.*); bare keys
belong to the simulation itself. Every key has a default, so the empty file is a
valid config. Unknown keys are rejected rather than silently ignored.

Example::

    # attentive aggregation with upload noise
    model.vocab_size = 5000
    model.hidden_dim = 64
    client.lr = 0.5
    dp.enabled = true
    dp.beta_mag = 0.001
    aggregator.strategy = fedatt
    rounds = 25
    train_path = data/train.txt
    valid_path = data/valid.txt
    test_path = data/test.txt
"""

from __future__ import annotations

import types
import typing
from dataclasses import MISSING, fields
from pathlib import Path

from .aggregation import AggregatorConfig
from .client import ClientConfig, DpConfig
from .errors import ConfigError
from .model import GruLmConfig
from .simulation import SimConfig

__all__ = [
    "parse_config_text",
    "apply_overrides",
    "build_sim_config",
    "load_config",
    "known_keys",
]

_SECTIONS: dict[str, type] = {
    "model": GruLmConfig,
    "client": ClientConfig,
    "dp": DpConfig,
    "aggregator": AggregatorConfig,
}
# fields of SimConfig that are sub-configs, not simple values
_COMPOSITE = set(_SECTIONS)

# GruLmConfig has no default vocab size (models must know theirs); the
# config layer supplies one so that every key is optional.
_EXTRA_DEFAULTS = {"model.vocab_size": 10_000}


def _field_types(cls: type) -> dict[str, type]:
    hints = typing.get_type_hints(cls)
    return {f.name: hints[f.name] for f in fields(cls)}


def known_keys() -> dict[str, type]:
    """All accepted config keys mapped to their value type."""
    keys: dict[str, type] = {}
    for section, cls in _SECTIONS.items():
        for name, tp in _field_types(cls).items():
            keys[f"{section}.{name}"] = tp
    for name, tp in _field_types(SimConfig).items():
        if name not in _COMPOSITE:
            keys[name] = tp
    return keys


_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def _coerce(key: str, raw: str, tp: type):
    if isinstance(tp, types.UnionType) or typing.get_origin(tp) is typing.Union:
        args = typing.get_args(tp)
        if raw.strip().lower() in ("none", "null", ""):
            if type(None) in args:
                return None
            raise ConfigError(f"{key}: value may not be empty")
        inner = [a for a in args if a is not type(None)]
        tp = inner[0]
    raw = raw.strip()
    try:
        if tp is bool:
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if tp is int:
            return int(raw)
        if tp is float:
            return float(raw)
        if tp is str:
            return raw
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None
    raise ConfigError(f"{key}: unsupported value type {tp}")


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Raw key -> value strings from config text; rejects malformed lines."""
    pairs: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        key, sep, value = stripped.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key = key.strip()
        if key in pairs:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        pairs[key] = value.strip()
    return pairs


def apply_overrides(pairs: dict[str, str], overrides: list[str]) -> dict[str, str]:
    """Fold `key=value` command-line overrides on top of file pairs."""
    merged = dict(pairs)
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"override must look like key=value, got {item!r}")
        merged[key.strip()] = value.strip()
    return merged


def build_sim_config(pairs: dict[str, str]) -> SimConfig:
    """Construct a validated SimConfig from raw key/value strings."""
    keys = known_keys()
    unknown = [k for k in pairs if k not in keys]
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")

    values: dict[str, object] = {}
    for key, raw in pairs.items():
        values[key] = _coerce(key, raw, keys[key])

    section_kwargs: dict[str, dict] = {s: {} for s in _SECTIONS}
    sim_kwargs: dict[str, object] = {}
    for key, value in values.items():
        if "." in key:
            section, name = key.split(".", 1)
            section_kwargs[section][name] = value
        else:
            sim_kwargs[key] = value

    sub = {}
    for section, cls in _SECTIONS.items():
        kwargs = section_kwargs[section]
        for extra_key, default in _EXTRA_DEFAULTS.items():
            sec, name = extra_key.split(".", 1)
            if sec == section:
                kwargs.setdefault(name, default)
        sub[section] = cls(**kwargs)
    return SimConfig(
        model=sub["model"],
        client=sub["client"],
        dp=sub["dp"],
        aggregator=sub["aggregator"],
        **sim_kwargs,
    )


def load_config(
    path: str | Path | None, overrides: list[str] | None = None
) -> SimConfig:
    """Read a config file (optional) and apply overrides; defaults fill the rest."""
    pairs: dict[str, str] = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        pairs = parse_config_text(p.read_text(encoding="utf-8"), source=str(p))
    if overrides:
        pairs = apply_overrides(pairs, overrides)
    return build_sim_config(pairs)

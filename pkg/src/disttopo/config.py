"""Plain-text ``key = value`` config files.

Values are parsed as JSON when possible (numbers, lists, booleans), otherwise
kept as bare strings. ``#`` starts a comment.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json

from .errors import ConfigError, InvalidConfig


def parse_kv(text: str, source: str = "<config>") -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            out[key] = json.loads(value)
        except ValueError:
            out[key] = value
    return out


def read_kv(path) -> dict:
    try:
        with open(path) as fh:
            return parse_kv(fh.read(), str(path))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def dump_kv(obj) -> str:
    data = dataclasses.asdict(obj) if dataclasses.is_dataclass(obj) else dict(obj)
    return "".join(f"{k} = {json.dumps(v)}\n" for k, v in data.items())


def config_hash(obj) -> str:
    return hashlib.sha256(dump_kv(obj).encode()).hexdigest()[:16]


def build(cls, mapping: dict):
    """Instantiate dataclass ``cls`` from ``mapping``, rejecting unknown keys."""
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(mapping) - names
    if unknown:
        raise InvalidConfig(sorted(unknown)[0], "unknown key")
    return cls(**mapping)


def override(obj, **changes):
    """Copy of dataclass ``obj`` with the non-None ``changes`` applied."""
    changes = {k: v for k, v in changes.items() if v is not None}
    return dataclasses.replace(obj, **changes) if changes else obj

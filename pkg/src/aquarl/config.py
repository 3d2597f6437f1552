"""Flat ``key = value`` config files.

One assignment per line; ``#`` starts a comment; blank lines are ignored.
Values are coerced to the type of the matching dataclass field.
"""
from __future__ import annotations

import dataclasses
import types
import typing
from pathlib import Path

from .errors import ConfigError


def read_kv_file(path) -> dict[str, str]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from exc
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        out[key] = value
    return out


def _coerce(value, tp, key):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union or origin is types.UnionType:
        # Optional[X]: "none"/"" map to None, anything else to X
        if isinstance(value, str) and value.strip().lower() in ("", "none"):
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(value, inner[0], key)
    if not isinstance(value, str):
        return value
    try:
        if tp is bool:
            low = value.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if tp is int:
            return int(value)
        if tp is float:
            return float(value)
        if origin in (tuple, list):
            item = args[0] if args else str
            parts = [p for p in value.replace(";", ",").split(",") if p.strip()]
            return tuple(_coerce(p.strip(), item, key) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {value!r}") from exc
    return value


def field_types(cls) -> dict[str, type]:
    hints = typing.get_type_hints(cls)
    return {f.name: hints[f.name] for f in dataclasses.fields(cls)}


def build(cls, values: dict, *, strict: bool = True):
    """Instantiate dataclass ``cls`` from string or native values.

    With ``strict`` unknown keys raise; otherwise they are ignored.
    """
    types = field_types(cls)
    unknown = set(values) - set(types)
    if strict and unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    kwargs = {k: _coerce(v, types[k], k) for k, v in values.items() if k in types}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc

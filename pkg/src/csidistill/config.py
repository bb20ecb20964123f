"""Flat ``key = value`` configuration files."""

from __future__ import annotations

import dataclasses
import hashlib
import typing
from pathlib import Path

from .errors import FormatError

_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def _coerce(raw: str, kind, key: str):
    try:
        if kind is bool:
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is str:
            return raw
    except ValueError:
        raise FormatError(f"{key}: cannot parse {raw!r} as {kind.__name__}") from None
    raise FormatError(f"{key}: unsupported field type {kind!r}")


def parse_config(text: str, schema: type) -> dict:
    """Parse ``key = value`` lines into typed values for the dataclass ``schema``.

    Blank lines and ``#`` comments are skipped; unknown or repeated keys are
    rejected.
    """
    hints = typing.get_type_hints(schema)
    known = {f.name for f in dataclasses.fields(schema)}
    out: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise FormatError(f"line {lineno}: unknown key {key!r}")
        if key in out:
            raise FormatError(f"line {lineno}: duplicate key {key!r}")
        out[key] = _coerce(raw, hints[key], key)
    return out


def load_config(path, schema: type, **overrides):
    values = parse_config(Path(path).read_text(encoding="utf-8"), schema) if path else {}
    values.update({k: v for k, v in overrides.items() if v is not None})
    return schema(**values)


def format_config(cfg) -> str:
    lines = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        lines.append(f"{f.name} = {v!r}" if isinstance(v, float) else f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def config_hash(cfg) -> str:
    return hashlib.sha256(format_config(cfg).encode("utf-8")).hexdigest()

"""``key = value`` configuration files.

Keys are dotted (``synth.n_patients``, ``plan.seeds``); values are Python
literals (numbers, strings, tuples, dicts, ``True``/``False``/``None``)
and anything that does not parse as a literal is kept as a string. Lines
starting with ``#`` are comments.
"""
from __future__ import annotations

import ast
from dataclasses import fields
from pathlib import Path

from .exceptions import ConfigurationError


def parse_value(text: str):
    text = text.strip()
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def parse_config(text: str, source: str = "<config>") -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigurationError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ConfigurationError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = parse_value(value)
    return out


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"missing config file: {path}")
    return parse_config(path.read_text(encoding="utf-8"), str(path))


def section(config: dict, prefix: str) -> dict:
    """Entries under ``prefix.`` with the prefix stripped."""
    head = prefix + "."
    return {k[len(head):]: v for k, v in config.items() if k.startswith(head)}


def build_dataclass(cls, values: dict, where: str):
    """Instantiate ``cls`` from ``values``, rejecting unknown keys."""
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigurationError(f"unknown {where} key(s): {', '.join(unknown)}")
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"bad {where} settings: {exc}") from exc

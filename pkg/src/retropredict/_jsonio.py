"""Deterministic JSON files: sorted keys, fixed indentation, no NaN."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np


def _default(obj):
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    return json.dumps(obj, indent=indent, sort_keys=True, allow_nan=False, ensure_ascii=False,
                      default=_default) + "\n"


def dump(obj, path) -> None:
    Path(path).write_text(dumps(obj), encoding="utf-8")


def load(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))

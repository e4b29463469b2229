"""Canonical serialisation helpers shared by the output writers."""

from __future__ import annotations

import dataclasses
import hashlib
import json

import numpy as np


def _plain(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def canonical_json(obj, indent=None) -> str:
    """JSON text with sorted keys; floats keep full ``repr`` precision."""
    return json.dumps(_plain(obj), sort_keys=True, indent=indent, allow_nan=True)


def config_hash(obj) -> str:
    """SHA-256 of the canonical JSON form of ``obj``."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def to_plain(obj):
    """Nested dicts/lists of builtins, suitable for ``json.dump``."""
    return _plain(obj)

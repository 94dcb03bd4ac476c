"""Canonical JSON encoding shared by every persisted artifact."""

from __future__ import annotations

import hashlib
import json
import math
from enum import Enum
from typing import Any

SIGNIFICANT_DIGITS = 12


def normalize(obj: Any) -> Any:
    """Convert ``obj`` into plain JSON types with floats fixed to 12 significant digits."""
    if isinstance(obj, bool) or obj is None:
        return obj
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, int):
        return int(obj)
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return None
        rounded = float(f"{obj:.{SIGNIFICANT_DIGITS}g}")
        return 0.0 if rounded == 0 else rounded
    if hasattr(obj, "item") and callable(obj.item):  # numpy scalar
        return normalize(obj.item())
    if isinstance(obj, str):
        return obj
    if isinstance(obj, dict):
        return {str(k): normalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [normalize(v) for v in obj]
    if isinstance(obj, (set, frozenset)):
        return [normalize(v) for v in sorted(obj, key=repr)]
    if hasattr(obj, "to_dict"):
        return normalize(obj.to_dict())
    raise TypeError(f"cannot canonicalize {type(obj).__name__}")


def dumps(obj: Any) -> str:
    """Serialize to canonical JSON: sorted keys, compact separators, fixed float precision."""
    return json.dumps(normalize(obj), sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def loads(text: str) -> Any:
    return json.loads(text)


def digest(obj: Any) -> str:
    return hashlib.sha256(dumps(obj).encode("utf-8")).hexdigest()

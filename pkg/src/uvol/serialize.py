"""Deterministic JSON/CSV serialization.

Result files must be byte-identical across reruns and thread counts, so
floats are written with 17 significant digits (round-trip exact for 64-bit),
JSON keys are sorted, and no timestamps or runtimes enter result payloads.
"""

from __future__ import annotations

import json
import math
from typing import Iterable, Sequence

import numpy as np


def fmt_float(x) -> str:
    v = float(x)
    if not math.isfinite(v):
        raise ValueError(f"non-finite value in output: {v}")
    return format(v, ".17g")


def _plainify(obj):
    if isinstance(obj, dict):
        return {str(k): _plainify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plainify(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return [_plainify(v) for v in obj.tolist()]
    return obj


def canonical_json(obj) -> str:
    return json.dumps(_plainify(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _cell(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return fmt_float(value)


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_cell(v) for v in row))
    return "\n".join(lines) + "\n"

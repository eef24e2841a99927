"""JSON wire formats for matrices, layouts, channels and distributions."""

from __future__ import annotations

import json

import numpy as np

from .errors import DimensionError
from .linalg import SystemLayout


def matrix_to_json(m: np.ndarray) -> dict:
    a = np.asarray(m, dtype=complex)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    return {
        "rows": int(a.shape[0]),
        "cols": int(a.shape[1]),
        "data": [[float(z.real), float(z.imag)] for z in a.reshape(-1)],
    }


def matrix_from_json(obj: dict) -> np.ndarray:
    rows, cols = int(obj["rows"]), int(obj["cols"])
    data = obj["data"]
    if len(data) != rows * cols:
        raise DimensionError(f"matrix data length {len(data)} != {rows}*{cols}")
    flat = np.array([complex(re, im) for re, im in data], dtype=complex)
    return flat.reshape(rows, cols)


def layout_to_json(layout: SystemLayout) -> dict:
    return {"factors": [[lab, int(d)] for lab, d in layout.factors]}


def layout_from_json(obj: dict) -> SystemLayout:
    return SystemLayout(tuple((str(lab), int(d)) for lab, d in obj["factors"]))


def dumps(obj) -> str:
    """Deterministic JSON serialization: sorted keys, fixed separators."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)

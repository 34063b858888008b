"""JSON encoding of complex matrices, channels and reports.

Complex numbers are ``[re, im]`` pairs and matrices are row-major nested
lists, so files stay language neutral and diffable.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .channels import Channel
from .exceptions import ScenarioError
from .opcore import HilbertSpace


def matrix_to_json(M: np.ndarray) -> list:
    M = np.asarray(M, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in M]


def matrix_from_json(data, name: str = "matrix") -> np.ndarray:
    try:
        arr = np.asarray(data, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{name}: expected a nested list of [re, im] pairs") from exc
    if arr.ndim == 2:
        return arr.astype(complex)
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise ScenarioError(f"{name}: expected shape (rows, cols, 2), got {arr.shape}")
    return arr[..., 0] + 1j * arr[..., 1]


def channel_to_dict(E: Channel) -> dict:
    out = {
        "dims": list(E.space.factor_dims),
        "label": E.label,
        "kraus": [matrix_to_json(M) for M in E.kraus],
    }
    meta = getattr(E, "metadata", None)
    if callable(meta):
        out.update(meta())
    return out


def channel_from_dict(data: dict, check: bool = True) -> Channel:
    try:
        dims = [int(x) for x in data["dims"]]
        kraus = np.array([matrix_from_json(K, f"kraus[{i}]") for i, K in enumerate(data["kraus"])])
    except KeyError as exc:
        raise ScenarioError(f"channel is missing field {exc.args[0]!r}") from exc
    space = HilbertSpace(tuple(dims))
    return Channel(kraus, space, data.get("label", ""), check=check)


def _clean(obj):
    """Make numpy scalars, arrays and non-finite floats JSON friendly."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj) and obj.ndim == 2:
            return matrix_to_json(obj)
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True)


def write_json(obj, path) -> None:
    Path(path).write_text(dumps(obj) + "\n", encoding="utf-8")


def load_json(path) -> dict:
    """Parse a JSON file, reporting the line and column of syntax errors."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc

"""Numerical tolerances and size limits shared by every module.

Defaults can be overridden globally with :func:`set_tolerances` or locally
with the :func:`tolerances` context manager::

    with tolerances(eig=1e-8):
        fixed_point_space(channel)
"""
from __future__ import annotations

import contextlib
import contextvars
import dataclasses
import os
from dataclasses import dataclass

DEFAULT_DIM_CAP = 64


@dataclass(frozen=True)
class Tolerances:
    herm: float = 1e-10
    trace: float = 1e-10
    psd: float = 1e-9
    orth: float = 1e-9
    rank: float = 1e-9
    eig: float = 1e-9
    tp: float = 1e-9
    idem: float = 1e-9
    # eigenvalue floor applied before inverting density matrices
    floor: float = 1e-12
    # relative cutoff for supports of reduced states
    support: float = 1e-10


_current: contextvars.ContextVar[Tolerances] = contextvars.ContextVar(
    "qstab_tolerances", default=Tolerances()
)


def get_tolerances() -> Tolerances:
    return _current.get()


def set_tolerances(**overrides: float) -> Tolerances:
    tol = dataclasses.replace(_current.get(), **overrides)
    _current.set(tol)
    return tol


@contextlib.contextmanager
def tolerances(**overrides: float):
    token = _current.set(dataclasses.replace(_current.get(), **overrides))
    try:
        yield _current.get()
    finally:
        _current.reset(token)


def dim_cap() -> int:
    """Largest admissible Hilbert-space dimension.

    The superoperator side is the square of this number. ``QSTAB_DIM_CAP``
    overrides the default of 64.
    """
    raw = os.environ.get("QSTAB_DIM_CAP")
    if raw is None:
        return DEFAULT_DIM_CAP
    try:
        cap = int(raw)
    except ValueError as exc:
        raise ValueError(f"QSTAB_DIM_CAP must be an integer, got {raw!r}") from exc
    if cap < 1:
        raise ValueError(f"QSTAB_DIM_CAP must be positive, got {cap}")
    return cap

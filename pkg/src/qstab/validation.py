"""Input validation helpers in the spirit of ``sklearn.utils.validation``."""
from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .config import get_tolerances
from .exceptions import DimensionError, NotPositiveDefiniteError, NotProjectorError


def check_operator(X, dim: int | None = None, name: str = "X") -> np.ndarray:
    """Return ``X`` as a square complex array, optionally of side ``dim``."""
    X = np.asarray(X, dtype=complex)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise DimensionError(f"{name} must be a square matrix, got shape {X.shape}")
    if dim is not None and X.shape[0] != dim:
        raise DimensionError(f"{name} has dimension {X.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite entries")
    return X


def is_hermitian(X: np.ndarray, tol: float | None = None) -> bool:
    tol = get_tolerances().herm if tol is None else tol
    return bool(np.max(np.abs(X - X.conj().T), initial=0.0) <= tol)


def hermitian_part(X: np.ndarray) -> np.ndarray:
    return 0.5 * (X + X.conj().T)


def check_hermitian(X, dim: int | None = None, name: str = "X", tol: float | None = None):
    X = check_operator(X, dim, name)
    if not is_hermitian(X, tol):
        raise ValueError(f"{name} is not Hermitian")
    return hermitian_part(X)


def check_density_matrix(rho, dim: int | None = None, name: str = "rho") -> np.ndarray:
    """Validate a density matrix and return its Hermitian part.

    Raises ``ValueError`` when ``rho`` is not Hermitian, has eigenvalues
    below ``-tol_psd``, or does not have unit trace.
    """
    tol = get_tolerances()
    rho = check_hermitian(rho, dim, name, tol.herm)
    evals = np.linalg.eigvalsh(rho)
    if evals[0] < -tol.psd:
        raise ValueError(f"{name} is not positive semidefinite (min eigenvalue {evals[0]:.3e})")
    if abs(np.trace(rho).real - 1.0) > max(tol.trace, tol.trace * rho.shape[0]):
        raise ValueError(f"{name} must have unit trace, got {np.trace(rho).real:.12g}")
    return rho


def check_positive_definite(xi, dim: int | None = None, name: str = "xi") -> np.ndarray:
    xi = check_hermitian(xi, dim, name)
    lo = np.linalg.eigvalsh(xi)[0]
    if lo <= get_tolerances().psd:
        raise NotPositiveDefiniteError(f"{name} is not positive definite (min eigenvalue {lo:.3e})")
    return xi


def check_projector(P, dim: int | None = None, name: str = "P") -> np.ndarray:
    P = check_operator(P, dim, name)
    tol = 1e3 * get_tolerances().herm
    if not is_hermitian(P, tol) or np.max(np.abs(P @ P - P)) > tol:
        raise NotProjectorError(f"{name} is not an orthogonal projector")
    if np.trace(P).real < 0.5:
        raise NotProjectorError(f"{name} is the zero projector")
    return hermitian_part(P)


def check_index_set(positions: Iterable[int], n: int, name: str = "positions") -> tuple[int, ...]:
    """Return a sorted tuple of distinct factor indices in ``range(n)``."""
    try:
        idx = tuple(int(p) for p in positions)
    except TypeError as exc:
        raise DimensionError(f"{name} must be an iterable of integers") from exc
    if len(idx) == 0:
        raise DimensionError(f"{name} must be nonempty")
    if len(set(idx)) != len(idx):
        raise DimensionError(f"{name} contains duplicates: {idx}")
    bad = [p for p in idx if p < 0 or p >= n]
    if bad:
        raise DimensionError(f"{name} out of range for {n} factors: {bad}")
    return tuple(sorted(idx))


def check_probabilities(probs: Sequence[float], floor: float = 0.0, name: str = "probs") -> np.ndarray:
    p = np.asarray(probs, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError(f"{name} must be a nonempty 1-d sequence")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"{name} must sum to 1, got {p.sum():.12g}")
    if np.any(p < floor - 1e-15):
        raise ValueError(f"{name} must be bounded below by {floor}, got min {p.min():.6g}")
    return p

"""Quantum channels stored as Kraus lists with a cached superoperator.

The superoperator acts on column-major vectorizations,
``S @ vec(X) == vec(E(X))`` with ``S = sum_k conj(M_k) (x) M_k``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import get_tolerances
from .exceptions import ConvergenceError, DimensionError, NotCPTPError
from .opcore import HilbertSpace, tensor_embed, unvec, vec
from .validation import check_index_set, check_operator


def kraus_to_superoperator(kraus: np.ndarray) -> np.ndarray:
    d = kraus.shape[-1]
    S = np.zeros((d * d, d * d), dtype=complex)
    for M in kraus:
        S += np.kron(M.conj(), M)
    return S


def superoperator_to_choi(S: np.ndarray) -> np.ndarray:
    """Choi matrix ``J = sum_ij E(|i><j|) (x) |i><j|`` arranged so that ``J = sum_k m_k m_k^H``
    with ``m_k`` the row-major flattening of the Kraus operators."""
    d = int(round(np.sqrt(S.shape[0])))
    S4 = S.reshape((d, d, d, d), order="F")
    return S4.transpose(0, 2, 1, 3).reshape(d * d, d * d)


def choi_to_kraus(J: np.ndarray, tol: float | None = None) -> np.ndarray:
    """Kraus operators from a PSD Choi matrix; eigenvalues below ``tol_psd`` are dropped."""
    tol = get_tolerances().psd if tol is None else tol
    d = int(round(np.sqrt(J.shape[0])))
    w, v = np.linalg.eigh(0.5 * (J + J.conj().T))
    if w[0] < -max(tol, 1e-7 * abs(w[-1])):
        raise NotCPTPError(f"map is not completely positive (min Choi eigenvalue {w[0]:.3e})")
    keep = w > tol
    if not keep.any():
        return np.zeros((1, d, d), dtype=complex)
    vecs = v[:, keep] * np.sqrt(w[keep])
    return np.ascontiguousarray(vecs.T.reshape(-1, d, d))


class Channel:
    """Linear map on ``B(H)`` given by an operator-sum representation.

    ``Channel(kraus)`` validates trace preservation and complete positivity
    unless ``check=False``; unchecked instances are used for duals and for
    report-only inspection of candidate maps.
    """

    def __init__(self, kraus, space: HilbertSpace | None = None, label: str = "", check: bool = True,
                 superoperator: np.ndarray | None = None):
        K = np.asarray(kraus, dtype=complex)
        if K.ndim == 2:
            K = K[None]
        if K.ndim != 3 or K.shape[1] != K.shape[2]:
            raise DimensionError(f"Kraus operators must be square, got shape {K.shape}")
        d = K.shape[1]
        if space is None:
            space = HilbertSpace.unstructured(d)
        if space.dim != d:
            raise DimensionError(f"Kraus operators have dimension {d}, space has {space.dim}")
        self.space = space
        self.label = label
        self._kraus = K
        self._kraus.setflags(write=False)
        S = kraus_to_superoperator(K)
        if superoperator is not None:
            gap = np.max(np.abs(S - superoperator))
            if gap > 1e-8:
                raise ValueError(f"Kraus list and superoperator disagree (max entry gap {gap:.3e})")
        self._super = S
        self._super.setflags(write=False)
        if check:
            tp = tp_residual(self)
            if tp > get_tolerances().tp:
                raise NotCPTPError(f"Kraus operators are not trace preserving (residual {tp:.3e})")

    @classmethod
    def from_superoperator(cls, S: np.ndarray, space: HilbertSpace | None = None, label: str = "",
                           check: bool = True) -> "Channel":
        """Build a channel from its superoperator, re-extracting Kraus operators from the Choi matrix."""
        S = np.asarray(S, dtype=complex)
        kraus = choi_to_kraus(superoperator_to_choi(S))
        return cls(kraus, space, label, check)

    @classmethod
    def identity(cls, space: HilbertSpace) -> "Channel":
        return cls(np.eye(space.dim, dtype=complex)[None], space, "identity")

    @classmethod
    def unitary(cls, U: np.ndarray, space: HilbertSpace | None = None, label: str = "unitary") -> "Channel":
        return cls(np.asarray(U, dtype=complex)[None], space, label)

    @property
    def kraus(self) -> np.ndarray:
        return self._kraus

    @property
    def superoperator(self) -> np.ndarray:
        return self._super

    @property
    def dim(self) -> int:
        return self.space.dim

    def choi(self) -> np.ndarray:
        return superoperator_to_choi(self._super)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return apply(self, X)

    def __matmul__(self, other: "Channel") -> "Channel":
        return compose(self, other)

    def __repr__(self) -> str:
        name = f" {self.label!r}" if self.label else ""
        return f"<Channel{name} on C^{self.dim} with {len(self._kraus)} Kraus operators>"


def apply(E: Channel, X: np.ndarray) -> np.ndarray:
    """Operator-sum action ``sum_k M_k X M_k^H``."""
    X = check_operator(X, E.dim)
    K = E.kraus
    return (K @ X @ K.conj().transpose(0, 2, 1)).sum(axis=0)


def apply_superoperator(E: Channel, X: np.ndarray) -> np.ndarray:
    return unvec(E.superoperator @ vec(X), E.dim)


def compose(E2: Channel, E1: Channel, max_kraus: int | None = None) -> Channel:
    """``E2 o E1``; the Kraus list is re-extracted from the Choi matrix when it would exceed ``max_kraus``."""
    if E1.dim != E2.dim:
        raise DimensionError("cannot compose channels on different spaces")
    d = E1.dim
    max_kraus = d * d if max_kraus is None else max_kraus
    label = f"{E2.label or 'E2'}*{E1.label or 'E1'}"
    S = E2.superoperator @ E1.superoperator
    if len(E1.kraus) * len(E2.kraus) > max_kraus:
        kraus = choi_to_kraus(superoperator_to_choi(S))
    else:
        kraus = np.einsum("iab,jbc->ijac", E2.kraus, E1.kraus).reshape(-1, d, d)
    return Channel(kraus, E1.space, label, check=False)


def dual(E: Channel) -> Channel:
    """Heisenberg-picture map ``X -> sum_k M_k^H X M_k`` (unital, generally not trace preserving)."""
    return Channel(E.kraus.conj().transpose(0, 2, 1), E.space, f"dual({E.label})", check=False)


def tp_residual(E: Channel) -> float:
    K = E.kraus
    return float(np.linalg.norm(np.einsum("kba,kbc->ac", K.conj(), K) - np.eye(E.dim), 2))


def idempotency_residual(E: Channel) -> float:
    S = E.superoperator
    return float(np.linalg.norm(S @ S - S, 2))


@dataclass(frozen=True)
class ChannelReport:
    tp_residual: float
    min_choi_eigenvalue: float
    idempotency_residual: float

    @property
    def choi_deficit(self) -> float:
        return max(0.0, -self.min_choi_eigenvalue)

    def is_cptp(self, tol: float = 1e-9) -> bool:
        return self.tp_residual < tol and self.choi_deficit < tol

    def is_projection(self, tol: float = 1e-9) -> bool:
        return self.is_cptp(tol) and self.idempotency_residual < tol


def validate(E: Channel) -> ChannelReport:
    """TP residual ``||sum M^H M - I||``, minimal Choi eigenvalue and ``||E^2 - E||``."""
    S = E.superoperator
    d = E.dim
    # TP residual from the superoperator so maps without a faithful Kraus list are covered
    dual_on_identity = unvec(S.conj().T @ vec(np.eye(d)), d)
    tp = float(np.linalg.norm(dual_on_identity - np.eye(d), 2))
    J = E.choi()
    lo = float(np.linalg.eigvalsh(0.5 * (J + J.conj().T))[0])
    return ChannelReport(tp, lo, idempotency_residual(E))


def validate_superoperator(S: np.ndarray) -> ChannelReport:
    """Report for a map given only by its superoperator (it may fail to be CP)."""
    S = np.asarray(S, dtype=complex)
    d = int(round(np.sqrt(S.shape[0])))
    tp = float(np.linalg.norm(unvec(S.conj().T @ vec(np.eye(d)), d) - np.eye(d), 2))
    J = superoperator_to_choi(S)
    lo = float(np.linalg.eigvalsh(0.5 * (J + J.conj().T))[0])
    return ChannelReport(tp, lo, float(np.linalg.norm(S @ S - S, 2)))


def embed_neighborhood(E_local: Channel, neighborhood, space: HilbertSpace) -> Channel:
    """Extend a channel on the factors in ``neighborhood`` by the identity on the rest."""
    idx = check_index_set(neighborhood, space.n_factors)
    d_loc = int(np.prod([space.factor_dims[a] for a in idx]))
    if E_local.dim != d_loc:
        raise DimensionError(f"local channel acts on dimension {E_local.dim}, neighborhood {idx} has {d_loc}")
    kraus = np.array([tensor_embed(M, idx, space) for M in E_local.kraus])
    label = f"{E_local.label or 'E'}@{list(idx)}"
    return Channel(kraus, space, label, check=False)


def damped_limit_superoperator(E: Channel, lam: float = 0.5, tol: float = 1e-11,
                               max_iter: int = 10_000) -> np.ndarray:
    """Superoperator of ``E~^n`` for ``E~ = (1 - lam) E + lam Id``, squared until it settles.

    Stops when ``||T E~ - T||_F < tol`` (every probe direction at once) and
    raises :class:`ConvergenceError` once the exponent would pass ``max_iter``.
    """
    if not 0.0 < lam < 1.0:
        raise ValueError(f"damping lam must lie in (0, 1), got {lam}")
    D = (1.0 - lam) * E.superoperator + lam * np.eye(E.dim ** 2)
    T, power = D, 1
    while np.linalg.norm(T @ D - T) >= tol:
        if 2 * power > max_iter:
            raise ConvergenceError(f"damped iteration did not settle below {tol:g} within {max_iter} steps")
        T, power = T @ T, 2 * power
    return T


def damped_power(E: Channel, lam: float = 0.5, n: int | None = None, tol: float = 1e-11,
                 max_iter: int = 10_000) -> Channel:
    """Power of the damped map ``(1 - lam) E + lam Id``.

    With ``n`` given, returns exactly the ``n``-th power; otherwise the power
    is grown by squaring until it stops changing (see
    :func:`damped_limit_superoperator`). The limit is the projection onto
    ``fix(E)`` along the remaining spectrum.
    """
    if not 0.0 < lam < 1.0:
        raise ValueError(f"damping lam must lie in (0, 1), got {lam}")
    if n is not None:
        if n < 0:
            raise ValueError("n must be non-negative")
        D = (1.0 - lam) * E.superoperator + lam * np.eye(E.dim ** 2)
        T = np.linalg.matrix_power(D, int(n))
    else:
        T = damped_limit_superoperator(E, lam, tol, max_iter)
    return Channel.from_superoperator(T, E.space, f"damped({E.label})", check=False)


def mixture(channels: Sequence[Channel], weights: Sequence[float]) -> Channel:
    """Convex combination ``sum_j q_j E_j`` with Kraus operators ``sqrt(q_j) M``."""
    w = np.asarray(weights, dtype=float)
    if len(w) != len(channels) or np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
        raise ValueError("weights must be a probability vector matching the channels")
    kraus = np.concatenate([np.sqrt(q) * E.kraus for q, E in zip(w, channels) if q > 0])
    return Channel(kraus, channels[0].space, "mixture", check=False)


# --------------------------------------------------------------------------
# a few standard channels used by examples and tests

def depolarizing(p: float, d: int = 2) -> Channel:
    """``X -> (1 - p) X + p Tr(X) I / d``."""
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    S = (1 - p) * np.eye(d * d) + p * np.outer(vec(np.eye(d)), vec(np.eye(d))) / d
    return Channel.from_superoperator(S, HilbertSpace.unstructured(d), f"depolarizing({p:g})")


def amplitude_damping(gamma: float) -> Channel:
    k0 = np.array([[1, 0], [0, np.sqrt(1 - gamma)]], dtype=complex)
    k1 = np.array([[0, np.sqrt(gamma)], [0, 0]], dtype=complex)
    return Channel([k0, k1], HilbertSpace.unstructured(2), f"amplitude_damping({gamma:g})")


def dephasing(d: int = 2) -> Channel:
    """Complete dephasing in the computational basis."""
    kraus = np.zeros((d, d, d), dtype=complex)
    for i in range(d):
        kraus[i, i, i] = 1.0
    return Channel(kraus, HilbertSpace.unstructured(d), "dephasing")


def transpose_map(d: int) -> Channel:
    """The (positive, not completely positive) transpose, for validation tests."""
    S = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            S[j + d * i, i + d * j] = 1.0
    ch = Channel.__new__(Channel)
    ch.space = HilbertSpace.unstructured(d)
    ch.label = "transpose"
    ch._kraus = np.zeros((0, d, d), dtype=complex)
    ch._super = S
    return ch

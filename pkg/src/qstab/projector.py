"""Construction of CPTP projections (idempotent channels) onto prescribed fixed sets."""
from __future__ import annotations

import enum

import numpy as np

from .channels import (
    Channel,
    apply,
    choi_to_kraus,
    damped_limit_superoperator,
    idempotency_residual,
    superoperator_to_choi,
)
from .config import get_tolerances
from .exceptions import ConvergenceError, DecompositionError
from .fixpoint import BlockDecomposition, DistortedAlgebra, block_decompose, fixed_point_space
from .opcore import (
    HilbertSpace,
    InnerMode,
    OperatorSubspace,
    _mode,
    _Whitener,
    psd_power,
    support_isometry,
)
from .validation import check_density_matrix, check_projector


class Method(str, enum.Enum):
    RESET = "RESET"
    DAMPED = "DAMPED"
    DIRECT = "DIRECT"
    COMPOSED = "COMPOSED"


class ProjectionChannel(Channel):
    """An idempotent channel together with the set it projects onto."""

    def __init__(self, kraus, space: HilbertSpace, target, method: Method, label: str = "",
                 check: bool = True):
        super().__init__(kraus, space, label or method.value.lower(), check=check)
        self.target = target
        self.method = Method(method)

    @classmethod
    def wrap(cls, E: Channel, target, method: Method, label: str = "") -> "ProjectionChannel":
        return cls(E.kraus, E.space, target, method, label or E.label, check=False)

    @property
    def target_dim(self) -> int:
        if isinstance(self.target, np.ndarray):
            # a projector Pi stands for the algebra B(range Pi)
            return support_isometry(self.target, 0.5).shape[1] ** 2
        return self.target.dim

    def target_subspace(self) -> OperatorSubspace:
        return _target_subspace(self.target, self.space)

    def image_residual(self, X: np.ndarray) -> float:
        """Distance of ``E(X)`` from the target set, relative to ``||E(X)||``."""
        return self.target_subspace().residual(apply(self, X))

    def metadata(self) -> dict:
        return {"method": self.method.value, "target_dim": int(self.target_dim)}


def _target_subspace(target, space: HilbertSpace | None = None) -> OperatorSubspace:
    if isinstance(target, np.ndarray):
        space = HilbertSpace.unstructured(target.shape[0]) if space is None else space
        return _block_algebra(support_isometry(target, 0.5), space)
    if isinstance(target, DistortedAlgebra):
        return target.subspace
    if isinstance(target, BlockDecomposition):
        return target.algebra()
    return target


def reset_map(P: np.ndarray, space: HilbertSpace | None = None, label: str = "reset") -> ProjectionChannel:
    """``X -> P X P + P Tr(P_perp X) / Tr P``, a CPTP projection onto ``B(range P)``.

    Kraus operators: ``P`` and ``|phi_i><psi_j| / sqrt(Tr P)`` for
    orthonormal bases ``phi`` of ``range P`` and ``psi`` of its complement.
    """
    P = check_projector(P)
    d = P.shape[0]
    space = HilbertSpace.unstructured(d) if space is None else space
    phi = support_isometry(P, 0.5)
    psi = support_isometry(np.eye(d) - P, 0.5)
    r = phi.shape[1]
    kraus = [P]
    for i in range(r):
        for j in range(psi.shape[1]):
            kraus.append(np.outer(phi[:, i], psi[:, j].conj()) / np.sqrt(r))
    target = _block_algebra(phi, space)
    return ProjectionChannel(np.array(kraus), space, target, Method.RESET, label)


def _block_algebra(U: np.ndarray, space: HilbertSpace) -> OperatorSubspace:
    from .fixpoint import hermitian_span
    r = U.shape[1]
    units = []
    for i in range(r):
        for j in range(r):
            units.append(np.outer(U[:, i], U[:, j].conj()))
    return hermitian_span(np.array(units), space)


def _sharpen(T: np.ndarray, max_rounds: int = 20) -> np.ndarray:
    """Square ``T`` while that lowers ``||T^2 - T||``."""
    res = np.linalg.norm(T @ T - T, 2)
    for _ in range(max_rounds):
        T2 = T @ T
        res2 = np.linalg.norm(T2 @ T2 - T2, 2)
        if res2 >= res:
            break
        T, res = T2, res2
    return T


def cptp_projection(E: Channel, lam: float = 0.5, max_iter: int = 10_000) -> ProjectionChannel:
    """Projection onto ``fix(E)`` as the limit of the damped powers of ``E``.

    An already idempotent ``E`` is returned as is (wrapped).
    """
    tol = get_tolerances().idem
    if idempotency_residual(E) < tol:
        return ProjectionChannel.wrap(E, fixed_point_space(E), Method.DAMPED)
    T = _sharpen(damped_limit_superoperator(E, lam, max_iter=max_iter))
    res = float(np.linalg.norm(T @ T - T, 2))
    if res >= tol:
        raise ConvergenceError(f"damped projection is not idempotent (residual {res:.3e})")
    kraus = choi_to_kraus(superoperator_to_choi(T))
    return ProjectionChannel(kraus, E.space, fixed_point_space(E), Method.DAMPED,
                             f"proj({E.label})" if E.label else "damped", check=False)


def _block_kraus(B: BlockDecomposition) -> list[np.ndarray]:
    """Kraus operators of ``Y -> (+)_l V_l (Tr_F(V_l^H Y V_l) (x) tau_F) V_l^H``."""
    kraus = []
    for b in B.blocks:
        t, vecs = np.linalg.eigh(b.tau_F)
        for m in range(b.f):
            if t[m] <= 0:
                continue
            for k in range(b.f):
                e = np.zeros((b.f, b.f), dtype=complex)
                e[:, k] = np.sqrt(t[m]) * vecs[:, m]
                kraus.append(b.isometry @ np.kron(np.eye(b.s), e) @ b.isometry.conj().T)
    return kraus


def _decomposition(A) -> BlockDecomposition:
    if isinstance(A, BlockDecomposition):
        return A
    if isinstance(A, DistortedAlgebra):
        return block_decompose(A)
    raise TypeError("expected a BlockDecomposition or a DistortedAlgebra")


def direct_projection(A, label: str = "direct") -> ProjectionChannel:
    """``X -> (+)_l Tr_F(Pi_l X Pi_l) (x) tau_F`` for a fixed set with a full-rank state."""
    B = _decomposition(A)
    if B.has_remainder:
        raise DecompositionError("the fixed set has a remainder block; use composed_projection")
    return ProjectionChannel(np.array(_block_kraus(B)), B.space, B, Method.DIRECT, label)


def composed_projection(A, label: str = "composed") -> ProjectionChannel:
    """``E1 o E0`` for a fixed set supported on a proper subspace.

    ``E0`` resets everything into ``B(supp)``; ``E1`` is the block
    projection on the support extended by the identity on the complement.
    """
    B = _decomposition(A)
    P = np.eye(B.space.dim) - B.remainder
    E0 = reset_map(P, B.space)
    k1 = _block_kraus(B)
    if B.has_remainder:
        k1.append(B.remainder.astype(complex))
    d = B.space.dim
    K = np.einsum("iab,jbc->ijac", np.array(k1), E0.kraus).reshape(-1, d, d)
    if len(K) > d * d:
        S = sum(np.kron(M.conj(), M) for M in K)
        K = choi_to_kraus(superoperator_to_choi(S))
    return ProjectionChannel(K, B.space, B, Method.COMPOSED, label)


def hs_orthogonal_projection(A: OperatorSubspace) -> np.ndarray:
    """Superoperator of the HS-orthogonal projection onto ``A`` (not CP in general)."""
    A = A if A.mode is InnerMode.HS else A.with_mode(InnerMode.HS)
    return A.projector()


def check_self_adjoint(E: Channel, rho: np.ndarray | None = None, mode=InnerMode.XI) -> float:
    """``max |<E(X), Y> - <X, E(Y)>|`` over a Hermitian basis, with weight ``xi = rho^-1``.

    ``mode`` is ``XI``, ``XI_SYM`` or ``HS`` (``rho`` is ignored for ``HS``).
    """
    mode = _mode(mode)
    xi = None
    if mode is not InnerMode.HS:
        rho = check_density_matrix(rho, E.dim)
        xi = psd_power(rho, -1)
    herm = []
    d = E.dim
    for i in range(d):
        for j in range(d):
            X = np.zeros((d, d), dtype=complex)
            if i == j:
                X[i, i] = 1
            elif i < j:
                X[i, j] = X[j, i] = 1 / np.sqrt(2)
            else:
                X[i, j], X[j, i] = 1j / np.sqrt(2), -1j / np.sqrt(2)
            herm.append(X)
    herm = np.array(herm)
    wh = _Whitener(mode, xi, d)
    C = wh.to_coords(herm)
    CE = wh.to_coords(np.array([apply(E, X) for X in herm]))
    G = CE.conj().T @ C - C.conj().T @ CE
    return float(np.abs(G).max())

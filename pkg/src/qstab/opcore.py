"""Dense operators on tensor-product Hilbert spaces and operator-subspace geometry.

Operators are plain ``numpy`` complex arrays; the :class:`HilbertSpace` that
carries the tensor-factor structure is passed alongside where it matters.
Operator subspaces are handled through column-major vectorization
(``vec(X) = X.reshape(-1, order="F")``).

Weighted inner products are realized by a *whitening* map ``w`` such that
``<X, Y> = vec(w(X))^H vec(w(Y))``:

* ``HS``      ``w(X) = X``                    ``<X,Y> = Tr(X^H Y)``
* ``XI``      ``w(X) = xi^(1/2) X``           ``<X,Y> = Tr(X^H xi Y)``
* ``XI_SYM``  ``w(X) = xi^(1/4) X xi^(1/4)``  ``<X,Y> = Tr(X^H xi^(1/2) Y xi^(1/2))``

On Hermitian arguments the two weighted forms reduce to ``Tr(X xi Y)`` and
``Tr(X xi^(1/2) Y xi^(1/2))``; taking the adjoint on the first slot extends
them to genuine inner products on the whole operator space.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import reduce
from typing import Callable, Iterable, Sequence

import numpy as np

from .config import dim_cap, get_tolerances
from .exceptions import DimensionError, NotPositiveDefiniteError
from .validation import check_index_set, check_operator, check_positive_definite


@dataclass(frozen=True)
class HilbertSpace:
    """Finite-dimensional space ``H = H_1 (x) ... (x) H_n``."""

    factor_dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.factor_dims)
        object.__setattr__(self, "factor_dims", dims)
        if len(dims) == 0:
            raise DimensionError("a Hilbert space needs at least one factor")
        if len(dims) == 1:
            if dims[0] < 1:
                raise DimensionError(f"dimension must be positive, got {dims[0]}")
        elif any(d < 2 for d in dims):
            raise DimensionError(f"every tensor factor must have dimension >= 2, got {dims}")
        cap = dim_cap()
        if self.dim > cap:
            raise DimensionError(f"total dimension {self.dim} exceeds the cap of {cap}")

    @classmethod
    def qubits(cls, n: int) -> "HilbertSpace":
        return cls((2,) * n)

    @classmethod
    def unstructured(cls, d: int) -> "HilbertSpace":
        return cls((d,))

    @property
    def dim(self) -> int:
        return math.prod(self.factor_dims)

    @property
    def n_factors(self) -> int:
        return len(self.factor_dims)

    def subsystem(self, positions: Iterable[int]) -> "HilbertSpace":
        idx = check_index_set(positions, self.n_factors)
        return HilbertSpace(tuple(self.factor_dims[a] for a in idx))

    def complement(self, positions: Iterable[int]) -> tuple[int, ...]:
        idx = set(check_index_set(positions, self.n_factors))
        return tuple(a for a in range(self.n_factors) if a not in idx)


class InnerMode(str, enum.Enum):
    HS = "HS"
    XI = "XI"
    XI_SYM = "XI_SYM"


# --------------------------------------------------------------------------
# basic linear algebra

def vec(X: np.ndarray) -> np.ndarray:
    return np.asarray(X).reshape(-1, order="F")


def unvec(v: np.ndarray, d: int) -> np.ndarray:
    return np.asarray(v).reshape((d, d), order="F")


def dagger(X: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(X, -1, -2))


def ket(bits: str | Sequence[int], dims: Sequence[int] | None = None) -> np.ndarray:
    """Computational basis vector, e.g. ``ket("0110")``."""
    digits = [int(b) for b in bits]
    dims = [2] * len(digits) if dims is None else list(dims)
    idx = 0
    for digit, d in zip(digits, dims):
        idx = idx * d + digit
    out = np.zeros(math.prod(dims), dtype=complex)
    out[idx] = 1.0
    return out


def projector_onto(vectors: np.ndarray) -> np.ndarray:
    """Orthogonal projector onto the column span of ``vectors``."""
    vectors = np.asarray(vectors, dtype=complex)
    if vectors.ndim == 1:
        vectors = vectors[:, None]
    q, _ = np.linalg.qr(vectors)
    return q @ q.conj().T


def psd_power(rho: np.ndarray, p: float, support: bool = False) -> np.ndarray:
    """Matrix power of a positive semidefinite operator via eigendecomposition.

    Eigenvalues below the configured floor are treated as zero. Negative
    powers of a singular operator raise unless ``support`` is set, in which
    case the pseudo-power on the support is returned.
    """
    floor = get_tolerances().floor
    w, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    keep = w > floor
    if p < 0 and not keep.all() and not support:
        raise NotPositiveDefiniteError(
            f"operator is singular (min eigenvalue {w[0]:.3e}); pass support=True for a pseudo-power"
        )
    wp = np.zeros_like(w)
    wp[keep] = w[keep] ** p
    return (v * wp) @ v.conj().T


def support_isometry(rho: np.ndarray, rel_tol: float | None = None) -> np.ndarray:
    """Orthonormal basis (as columns) of the support of a PSD operator.

    Eigenvalues above ``rel_tol`` times the largest one are kept.
    """
    rel_tol = get_tolerances().support if rel_tol is None else rel_tol
    w, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    top = max(w[-1], 0.0)
    keep = w > rel_tol * top
    return v[:, keep][:, ::-1]


def support_projector(rho: np.ndarray, rel_tol: float | None = None) -> np.ndarray:
    u = support_isometry(rho, rel_tol)
    return u @ u.conj().T


def range_intersection(projectors: Sequence[np.ndarray], tol: float | None = None) -> np.ndarray:
    """Orthonormal basis of the intersection of the ranges of projectors.

    Computed as the kernel of ``sum_j (I - P_j)``, a PSD operator whose
    zero eigenspace is exactly the common range.
    """
    tol = get_tolerances().eig if tol is None else tol
    d = projectors[0].shape[0]
    K = sum(np.eye(d) - P for P in projectors)
    w, v = np.linalg.eigh(0.5 * (K + K.conj().T))
    return v[:, w < tol * max(1, len(projectors))]


def trace_norm(X: np.ndarray) -> float:
    X = np.asarray(X)
    if X.ndim == 2 and X.shape[0] == X.shape[1] and np.abs(X - X.conj().T).max() <= 1e-14:
        return float(np.sum(np.abs(np.linalg.eigvalsh(X))))
    return float(np.sum(np.linalg.svd(X, compute_uv=False)))


def trace_distance(rho: np.ndarray, tau: np.ndarray) -> float:
    """``||rho - tau||_1`` without the conventional factor 1/2."""
    return trace_norm(np.asarray(rho) - np.asarray(tau))


def trace_distance_to_set(rho: np.ndarray, target) -> float:
    """Trace-norm distance from ``rho`` to a state or to a projected image.

    ``target`` is either a density matrix or a map onto the target set
    (e.g. a CPTP projection). For a map the distance to ``target(rho)`` is
    returned, an upper bound for the distance to the set itself.
    """
    if callable(target):
        return trace_distance(rho, target(rho))
    return trace_distance(rho, target)


# --------------------------------------------------------------------------
# tensor structure

def permute_factors(X: np.ndarray, order: Sequence[int], space: HilbertSpace) -> np.ndarray:
    """Reorder the tensor factors of ``X``.

    ``X`` acts on ``H_{order[0]} (x) H_{order[1]} (x) ...``; the result is the
    same operator written in the natural factor order of ``space``.
    """
    order = list(order)
    n = space.n_factors
    if sorted(order) != list(range(n)):
        raise DimensionError(f"order {order} is not a permutation of {n} factors")
    dims = [space.factor_dims[a] for a in order]
    T = X.reshape(dims + dims)
    inv = np.argsort(order)
    T = T.transpose(list(inv) + [n + i for i in inv])
    return T.reshape(space.dim, space.dim)


def tensor_embed(local: np.ndarray, positions: Iterable[int], space: HilbertSpace) -> np.ndarray:
    """Neighborhood operator ``local (x) I`` acting on ``positions`` of ``space``.

    ``positions`` are 0-based factor indices; ``local`` acts on those factors
    taken in increasing order.
    """
    idx = check_index_set(positions, space.n_factors)
    d_local = math.prod(space.factor_dims[a] for a in idx)
    local = check_operator(local, d_local, "local")
    rest = [a for a in range(space.n_factors) if a not in idx]
    d_rest = math.prod(space.factor_dims[a] for a in rest)
    full = np.kron(local, np.eye(d_rest))
    return permute_factors(full, list(idx) + rest, space)


def partial_trace(X: np.ndarray, keep: Iterable[int], space: HilbertSpace) -> np.ndarray:
    """Trace out every factor not in ``keep``; kept factors stay in increasing order."""
    keep = check_index_set(keep, space.n_factors)
    X = check_operator(X, space.dim)
    n = space.n_factors
    dims = list(space.factor_dims)
    T = X.reshape(dims + dims)
    letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
    rows = [letters[a] for a in range(n)]
    cols = [letters[n + a] if a in keep else letters[a] for a in range(n)]
    out = "".join(rows[a] for a in keep) + "".join(cols[a] for a in keep)
    R = np.einsum("".join(rows) + "".join(cols) + "->" + out, T)
    dk = math.prod(dims[a] for a in keep)
    return R.reshape(dk, dk)


# --------------------------------------------------------------------------
# inner products

def _mode(mode) -> InnerMode:
    return InnerMode(mode.value if isinstance(mode, InnerMode) else str(mode).upper())


def inner(X: np.ndarray, Y: np.ndarray, mode=InnerMode.HS, xi: np.ndarray | None = None) -> complex:
    """Inner product of two operators.

    ``HS`` gives ``Tr(X^H Y)``. ``XI`` gives ``Tr(X^H xi Y)`` and ``XI_SYM``
    gives ``Tr(X^H xi^(1/2) Y xi^(1/2))``; for Hermitian ``X`` these are the
    weighted forms ``Tr(X xi Y)`` and ``Tr(X xi^(1/2) Y xi^(1/2))``.
    """
    mode = _mode(mode)
    X = np.asarray(X, dtype=complex)
    Y = np.asarray(Y, dtype=complex)
    if mode is InnerMode.HS:
        return complex(np.vdot(X, Y))
    if xi is None:
        raise ValueError(f"mode {mode.value} requires a weight xi")
    xi = check_positive_definite(xi, X.shape[0])
    if mode is InnerMode.XI:
        return complex(np.trace(X.conj().T @ xi @ Y))
    s = psd_power(xi, 0.5)
    return complex(np.trace(X.conj().T @ s @ Y @ s))


class _Whitener:
    """Maps operators to coordinates in which the chosen inner product is Euclidean."""

    def __init__(self, mode: InnerMode, xi: np.ndarray | None, d: int):
        self.mode = mode
        self.d = d
        if mode is InnerMode.HS:
            self.left = self.right = self.ileft = self.iright = None
            return
        if xi is None:
            raise ValueError(f"mode {mode.value} requires a weight xi")
        xi = check_positive_definite(xi, d)
        if mode is InnerMode.XI:
            self.left, self.ileft = psd_power(xi, 0.5), psd_power(xi, -0.5)
            self.right = self.iright = None
        else:
            self.left = self.right = psd_power(xi, 0.25)
            self.ileft = self.iright = psd_power(xi, -0.25)

    def forward(self, ops: np.ndarray) -> np.ndarray:
        out = ops if self.left is None else self.left @ ops
        return out if self.right is None else out @ self.right

    def backward(self, ops: np.ndarray) -> np.ndarray:
        out = ops if self.ileft is None else self.ileft @ ops
        return out if self.iright is None else out @ self.iright

    def to_coords(self, ops: np.ndarray) -> np.ndarray:
        w = self.forward(np.asarray(ops, dtype=complex).reshape(-1, self.d, self.d))
        return np.swapaxes(w, -1, -2).reshape(len(w), -1).T

    def from_coords(self, Q: np.ndarray) -> np.ndarray:
        ops = np.swapaxes(Q.T.reshape(-1, self.d, self.d), -1, -2)
        return self.backward(ops)


class OperatorSubspace:
    """Subspace of ``B(H)`` with an orthonormal basis under a declared inner product.

    Do not call the constructor with arbitrary generators; use
    :func:`orthonormalize`.
    """

    def __init__(self, space: HilbertSpace, coords: np.ndarray, mode=InnerMode.HS,
                 weight: np.ndarray | None = None):
        self.space = space
        self.mode = _mode(mode)
        self.weight = None if self.mode is InnerMode.HS else np.asarray(weight, dtype=complex)
        self._wh = _Whitener(self.mode, self.weight, space.dim)
        d2 = space.dim ** 2
        self.coords = np.asarray(coords, dtype=complex).reshape(d2, -1)
        self.coords.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    def __len__(self) -> int:
        return self.dim

    def __repr__(self) -> str:
        return f"<OperatorSubspace dim={self.dim} of B(C^{self.space.dim}) mode={self.mode.value}>"

    @property
    def basis(self) -> np.ndarray:
        """Orthonormal basis as an array of shape ``(dim, d, d)``."""
        return self._wh.from_coords(self.coords)

    def gram(self) -> np.ndarray:
        return self.coords.conj().T @ self.coords

    def projector(self) -> np.ndarray:
        """Orthogonal projector in whitened coordinates, shape ``(d^2, d^2)``."""
        return self.coords @ self.coords.conj().T

    def coordinates_of(self, X: np.ndarray) -> np.ndarray:
        return self._wh.to_coords(X)

    def project(self, X: np.ndarray) -> np.ndarray:
        """Orthogonal projection of ``X`` (or a stack of operators) onto the subspace."""
        X = np.asarray(X, dtype=complex)
        single = X.ndim == 2
        c = self._wh.to_coords(X)
        out = self._wh.from_coords(self.coords @ (self.coords.conj().T @ c))
        return out[0] if single else out

    def residual(self, X: np.ndarray) -> float:
        """Relative norm of the component of ``X`` orthogonal to the subspace."""
        c = self._wh.to_coords(X)
        r = c - self.coords @ (self.coords.conj().T @ c)
        nrm = np.linalg.norm(c)
        return float(np.linalg.norm(r) / nrm) if nrm > 0 else 0.0

    def contains(self, X: np.ndarray, tol: float | None = None) -> bool:
        tol = get_tolerances().orth if tol is None else tol
        return self.residual(X) <= tol

    def compatible(self, other: "OperatorSubspace") -> bool:
        if self.space.dim != other.space.dim or self.mode is not other.mode:
            return False
        if self.mode is InnerMode.HS:
            return True
        return np.allclose(self.weight, other.weight, atol=1e-12)

    def with_mode(self, mode=InnerMode.HS, xi: np.ndarray | None = None) -> "OperatorSubspace":
        """Same subspace, re-orthonormalized under another inner product."""
        return orthonormalize(self.basis, self.space, mode, xi)

    def equals(self, other: "OperatorSubspace", tol: float = 1e-8) -> bool:
        return self.dim == other.dim and subspace_distance(self, other) <= tol


def orthonormalize(generators, space: HilbertSpace, mode=InnerMode.HS, xi: np.ndarray | None = None,
                   hermitian: bool = False, tol: float | None = None) -> OperatorSubspace:
    """Orthonormal basis for the span of ``generators``.

    Generators are normalized, stacked and passed through an SVD; directions
    with singular value below ``tol_rank`` times the largest are dropped.
    With ``hermitian=True`` (HS mode, Hermitian generators only) the basis is
    chosen Hermitian by working over the real span.
    """
    tol = get_tolerances().rank if tol is None else tol
    mode = _mode(mode)
    G = np.asarray(generators, dtype=complex)
    if G.ndim == 2:
        G = G[None]
    if G.ndim != 3 or G.shape[1:] != (space.dim, space.dim):
        raise DimensionError(f"generators must have shape (k, {space.dim}, {space.dim}), got {G.shape}")
    wh = _Whitener(mode, xi, space.dim)
    M = wh.to_coords(G)
    norms = np.linalg.norm(M, axis=0)
    if not (norms > 1e-14 * max(1.0, norms.max(initial=0.0))).any():
        raise ValueError("all generators are numerically zero")
    # rounding residue (e.g. the anti-Hermitian part of a Hermitian product)
    # must not be normalized up into a spurious direction
    big = norms > tol * norms.max()
    M = M[:, big] / norms[big]
    if hermitian:
        if mode is not InnerMode.HS:
            raise ValueError("a Hermitian orthonormal basis is only available in HS mode")
        R = np.vstack([M.real, M.imag])
        U, s, _ = np.linalg.svd(R, full_matrices=False)
        r = int(np.sum(s > tol * s[0]))
        d2 = M.shape[0]
        Q = U[:d2, :r] + 1j * U[d2:, :r]
    else:
        U, s, _ = np.linalg.svd(M, full_matrices=False)
        r = int(np.sum(s > tol * s[0]))
        Q = U[:, :r]
    return OperatorSubspace(space, Q, mode, xi)


def full_operator_space(space: HilbertSpace, mode=InnerMode.HS, xi=None) -> OperatorSubspace:
    d = space.dim
    units = np.zeros((d * d, d, d), dtype=complex)
    for k in range(d * d):
        units[k, k % d, k // d] = 1.0
    return orthonormalize(units, space, mode, xi)


def _orth_complement_within(Q: np.ndarray, QI: np.ndarray) -> np.ndarray:
    """Orthonormal basis of ``span(Q)`` minus ``span(QI)`` (``QI`` inside ``span(Q)``)."""
    if QI.shape[1] == 0:
        return Q
    M = Q - QI @ (QI.conj().T @ Q)
    if M.shape[1] == 0:
        return M
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    return U[:, s > 0.5]


def subspace_intersect(A: OperatorSubspace, B: OperatorSubspace, tol: float | None = None) -> OperatorSubspace:
    """Basis of ``A`` intersected with ``B``.

    A direction of ``B`` is kept when its principal-angle sine to ``A`` is
    below ``tol`` (default ``tol_eig``); sines resolve small angles far
    better than cosines near 1.
    """
    tol = get_tolerances().eig if tol is None else tol
    if not A.compatible(B):
        raise ValueError("subspaces must share the Hilbert space, inner-product mode and weight")
    QA, QB = A.coords, B.coords
    if A.dim == 0 or B.dim == 0:
        return OperatorSubspace(A.space, QA[:, :0], A.mode, A.weight)
    R = QB - QA @ (QA.conj().T @ QB)
    _, s, vh = np.linalg.svd(R, full_matrices=True)
    sines = np.zeros(QB.shape[1])
    sines[: len(s)] = s
    V = vh.conj().T[:, sines <= tol]
    Q = QB @ V
    if Q.shape[1]:
        Q, _ = np.linalg.qr(Q)
    return OperatorSubspace(A.space, Q, A.mode, A.weight)


def intersect_all(subspaces: Sequence[OperatorSubspace], tol: float | None = None) -> OperatorSubspace:
    return reduce(lambda a, b: subspace_intersect(a, b, tol), subspaces)


def subspace_angle(A: OperatorSubspace, B: OperatorSubspace, tol: float | None = None) -> tuple[float, float]:
    """Cosine and angle between two subspaces modulo their intersection.

    ``c = ||P_A P_B - P_{A&B}||``, computed as the largest principal cosine
    between ``A`` and ``B`` once the common part has been removed from both.
    """
    I = subspace_intersect(A, B, tol)
    QA = _orth_complement_within(A.coords, I.coords)
    QB = _orth_complement_within(B.coords, I.coords)
    if QA.shape[1] == 0 or QB.shape[1] == 0:
        c = 0.0
    else:
        c = float(np.linalg.norm(QA.conj().T @ QB, 2))
    c = min(max(c, 0.0), 1.0)
    return c, math.acos(c)


def subspace_distance(A: OperatorSubspace, B: OperatorSubspace) -> float:
    """Spectral-norm distance between the orthogonal projectors onto ``A`` and ``B``.

    Subspaces with different inner products are first re-expressed in HS
    mode, so the result is zero exactly when the two sets coincide.
    """
    if not A.compatible(B):
        A = A.with_mode(InnerMode.HS) if A.mode is not InnerMode.HS else A
        B = B.with_mode(InnerMode.HS) if B.mode is not InnerMode.HS else B
    if A.dim == 0 and B.dim == 0:
        return 0.0
    return float(np.linalg.norm(A.projector() - B.projector(), 2))


def subspace_sum(subspaces: Sequence[OperatorSubspace]) -> OperatorSubspace:
    first = subspaces[0]
    gens = np.concatenate([s.basis for s in subspaces if s.dim])
    return orthonormalize(gens, first.space, first.mode, first.weight)


def map_subspace(f: Callable[[np.ndarray], np.ndarray], A: OperatorSubspace) -> OperatorSubspace:
    """Span of the images of ``A``'s basis under a linear map ``f``."""
    images = np.array([f(X) for X in A.basis])
    return orthonormalize(images, A.space, A.mode, A.weight)

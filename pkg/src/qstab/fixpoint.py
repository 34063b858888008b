"""Fixed-point sets of channels and the rho-distorted algebras that describe them.

A fixed set ``A`` containing a full-rank state ``rho`` is handled in its
undistorted form ``a = rho^{-1/2} A rho^{-1/2}``, an ordinary unital
``*``-algebra. Closures, modular maps and the block decomposition are all
computed there and mapped back.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .channels import Channel, apply, damped_limit_superoperator, dual
from .config import get_tolerances
from .exceptions import ConvergenceError, DecompositionError, DimensionError
from .opcore import (
    HilbertSpace,
    InnerMode,
    OperatorSubspace,
    orthonormalize,
    psd_power,
    subspace_distance,
    subspace_intersect,
    support_isometry,
    unvec,
    vec,
)
from .validation import check_density_matrix, check_index_set, check_operator

log = logging.getLogger(__name__)

CENTER_SEED = 0xA17E


def _hermitian_generators(ops: np.ndarray) -> np.ndarray:
    ops = np.asarray(ops, dtype=complex)
    adj = ops.conj().transpose(0, 2, 1)
    return np.concatenate([ops + adj, 1j * (ops - adj)])


def hermitian_span(ops, space: HilbertSpace, tol: float | None = None) -> OperatorSubspace:
    """HS-orthonormal Hermitian basis for the span of ``ops`` and their adjoints."""
    return orthonormalize(_hermitian_generators(ops), space, InnerMode.HS, hermitian=True, tol=tol)


# --------------------------------------------------------------------------
# fixed points

def fixed_point_space(E: Channel, tol: float | None = None) -> OperatorSubspace:
    """``fix(E)`` as a subspace with a Hermitian HS-orthonormal basis.

    The kernel of ``S - I`` is read off the SVD; a warning is logged when the
    next singular value lies within ten times the tolerance.
    """
    tol = get_tolerances().eig if tol is None else tol
    d = E.dim
    _, s, vh = np.linalg.svd(E.superoperator - np.eye(d * d))
    scale = max(1.0, float(s[0]))
    null = s <= tol * scale
    nxt = s[~null]
    if nxt.size and nxt.min() <= 10 * tol * scale:
        log.warning("fixed_point_space: singular value %.3e is within 10x tolerance of the kernel", nxt.min())
    V = vh.conj().T[:, null]
    ops = np.array([unvec(V[:, k], d) for k in range(V.shape[1])])
    if len(ops) == 0:
        raise ConvergenceError("no fixed point found; the map is probably not trace preserving")
    sub = hermitian_span(ops, E.space, tol=1e-6)
    if sub.dim != len(ops):
        # Hermitizing can only fail for maps that are not Hermiticity preserving
        sub = orthonormalize(ops, E.space)
    return sub


def fixed_point_residual(E: Channel, A: OperatorSubspace) -> float:
    """Largest ``||E(X) - X||_F`` over the basis of ``A``."""
    return max((float(np.linalg.norm(apply(E, X) - X)) for X in A.basis), default=0.0)


def max_rank_fixed_state(E: Channel, lam: float = 0.5) -> np.ndarray:
    """``E_inf(I/d)``, a fixed state whose support contains every other fixed state's support."""
    d = E.dim
    T = damped_limit_superoperator(E, lam)
    rho = unvec(T @ vec(np.eye(d) / d), d)
    rho = 0.5 * (rho + rho.conj().T)
    rho /= np.trace(rho).real
    res = np.linalg.norm(apply(E, rho) - rho)
    if res > 1e3 * get_tolerances().eig:
        raise ConvergenceError(f"limit state is not fixed (residual {res:.3e})")
    return rho


# --------------------------------------------------------------------------
# Schmidt spans

def to_bipartite(X: np.ndarray, part, space: HilbertSpace) -> tuple[np.ndarray, int, int]:
    """Rewrite ``X`` with the factors in ``part`` first; returns it with the two dimensions."""
    idx = check_index_set(part, space.n_factors)
    rest = [a for a in range(space.n_factors) if a not in idx]
    order = list(idx) + rest
    n = space.n_factors
    dims = list(space.factor_dims)
    T = np.asarray(X).reshape(dims + dims).transpose(order + [n + a for a in order])
    dA = math.prod(dims[a] for a in idx)
    return T.reshape(space.dim, space.dim), dA, space.dim // dA


def operator_schmidt(X: np.ndarray, part, space: HilbertSpace, tol: float | None = None):
    """Operator-Schmidt decomposition ``X = sum_k s_k A_k (x) B_k`` across ``part`` and its complement.

    Returns ``(s, A, B)`` with HS-orthonormal factors and singular values
    above ``tol_rank`` times the largest.
    """
    tol = get_tolerances().rank if tol is None else tol
    idx = check_index_set(part, space.n_factors)
    if len(idx) == space.n_factors:
        raise DimensionError("the bipartition is trivial: part covers every factor")
    X = check_operator(X, space.dim)
    Y, dA, dB = to_bipartite(X, idx, space)
    R = Y.reshape(dA, dB, dA, dB).transpose(0, 2, 1, 3).reshape(dA * dA, dB * dB)
    u, s, vh = np.linalg.svd(R, full_matrices=False)
    keep = s > tol * s[0] if s[0] > 0 else np.zeros_like(s, dtype=bool)
    A = u[:, keep].T.reshape(-1, dA, dA)
    B = vh[keep].reshape(-1, dB, dB)
    return s[keep], A, B


def schmidt_span(X: np.ndarray, part, space: HilbertSpace, tol: float | None = None) -> OperatorSubspace:
    """Span of the ``part``-side operator-Schmidt factors of ``X``, as a subspace of ``B(H_part)``.

    For Hermitian ``X`` the span is closed under adjoints and is returned
    with a Hermitian basis.
    """
    idx = check_index_set(part, space.n_factors)
    _, A, _ = operator_schmidt(X, idx, space, tol)
    local = space.subsystem(idx)
    if len(A) == 0:
        raise ValueError("X is numerically zero")
    X = np.asarray(X)
    if np.allclose(X, X.conj().T, atol=get_tolerances().herm):
        return hermitian_span(A, local)
    return orthonormalize(A, local)


# --------------------------------------------------------------------------
# modular maps and distorted algebras

def modular_map(rho: np.ndarray, lam: float, X: np.ndarray, support: bool = False) -> np.ndarray:
    """``rho^lam X rho^-lam``; with ``support=True`` negative powers are taken on the support only."""
    return psd_power(rho, lam, support) @ X @ psd_power(rho, -lam, support)


@dataclass
class DistortedAlgebra:
    """A ``rho``-distorted algebra ``A = rho^{1/2} a rho^{1/2}``.

    ``subspace`` holds ``A``; ``undistorted`` holds the unital ``*``-algebra
    ``a`` on the support of ``rho`` (its unit is the support projector).
    """

    subspace: OperatorSubspace
    undistorted: OperatorSubspace
    rho: np.ndarray
    flags: dict = field(default_factory=dict)

    @property
    def space(self) -> HilbertSpace:
        return self.subspace.space

    @property
    def dim(self) -> int:
        return self.subspace.dim

    @property
    def full_rank(self) -> bool:
        return bool(np.linalg.eigvalsh(self.rho)[0] > get_tolerances().floor)

    def contains(self, X, tol: float | None = None) -> bool:
        return self.subspace.contains(X, tol)

    def check(self, max_pairs: int = 400, seed: int = CENTER_SEED) -> dict:
        """Recompute the closure flags numerically and store their residuals."""
        A = self.subspace
        B = A.basis
        rho_inv = psd_power(self.rho, -1, support=True)
        dag = max(A.residual(X.conj().T) for X in B)
        rng = np.random.default_rng(seed)
        pairs = [(i, j) for i in range(len(B)) for j in range(len(B))]
        if len(pairs) > max_pairs:
            pairs = [pairs[k] for k in rng.choice(len(pairs), max_pairs, replace=False)]
        prod = max((A.residual(B[i] @ rho_inv @ B[j]) for i, j in pairs), default=0.0)
        mod = max(A.residual(modular_map(self.rho, 0.5, X, support=True)) for X in B)
        tol = 1e3 * get_tolerances().orth
        self.flags = {
            "dagger_closed": dag < tol,
            "rho_product_closed": prod < tol,
            "modular_invariant": mod < tol,
            "residuals": {"dagger": dag, "rho_product": prod, "modular": mod},
        }
        return self.flags


class _Distortion:
    """``X <-> rho^{-1/2} X rho^{-1/2}`` with pseudo-powers on the support of ``rho``."""

    def __init__(self, rho: np.ndarray, support: bool):
        tol = get_tolerances()
        self.rho = rho
        self.half = psd_power(rho, 0.5)
        w = np.linalg.eigvalsh(rho)
        if w[0] <= tol.floor and not support:
            from .exceptions import NotPositiveDefiniteError
            raise NotPositiveDefiniteError(
                f"rho is not full rank (min eigenvalue {w[0]:.3e}); pass support=True to work on its support"
            )
        self.ihalf = psd_power(rho, -0.5, support=True)
        self.unit = self.ihalf @ rho @ self.ihalf

    def undistort(self, X):
        return self.ihalf @ X @ self.ihalf

    def distort(self, x):
        return self.half @ x @ self.half


def _generated_algebra(gens: np.ndarray, unit: np.ndarray, space: HilbertSpace) -> OperatorSubspace:
    """Unital ``*``-algebra generated by ``gens``, as the span of all words."""
    d = space.dim
    gens = np.concatenate([gens, gens.conj().transpose(0, 2, 1)])
    span = orthonormalize(np.concatenate([unit[None], gens]), space)
    for _ in range(d * d + 1):
        B = span.basis
        words = np.einsum("gab,kbc->gkac", gens, B).reshape(-1, d, d)
        nxt = orthonormalize(np.concatenate([B, words]), space)
        if nxt.dim == span.dim:
            return span
        span = nxt
    raise ConvergenceError("word closure did not stabilize")


def _as_algebra(a: OperatorSubspace, dist: _Distortion, space: HilbertSpace) -> DistortedAlgebra:
    a = hermitian_span(a.basis, space)
    A = hermitian_span(np.array([dist.distort(x) for x in a.basis]), space)
    return DistortedAlgebra(A, a, dist.rho)


def distorted_closure(rho: np.ndarray, W, space: HilbertSpace | None = None,
                      support: bool = False) -> DistortedAlgebra:
    """Smallest set containing ``W`` and ``rho`` closed under adjoints and ``X rho^-1 Y``.

    ``W`` is an :class:`OperatorSubspace` or a stack of operators. With
    ``support=True`` a rank-deficient ``rho`` is allowed and everything lives
    on its support.
    """
    rho = check_density_matrix(rho)
    if space is None:
        space = W.space if isinstance(W, OperatorSubspace) else HilbertSpace.unstructured(rho.shape[0])
    ops = W.basis if isinstance(W, OperatorSubspace) else np.asarray(W, dtype=complex).reshape(-1, *rho.shape)
    dist = _Distortion(rho, support)
    gens = np.array([dist.undistort(X) for X in ops])
    a = _generated_algebra(gens, dist.unit, space)
    return _as_algebra(a, dist, space)


def minimal_fixed_point_set(rho: np.ndarray, W, space: HilbertSpace | None = None,
                            support: bool = False, return_trace: bool = False):
    """Smallest modular-invariant distorted algebra containing ``W`` and ``rho``.

    Alternates the distorted closure with ``M_{rho,1/2}`` until the dimension
    stops growing (at most ``d^2`` rounds). ``return_trace=True`` also returns
    the dimension after each round.
    """
    rho = check_density_matrix(rho)
    if space is None:
        space = W.space if isinstance(W, OperatorSubspace) else HilbertSpace.unstructured(rho.shape[0])
    ops = W.basis if isinstance(W, OperatorSubspace) else np.asarray(W, dtype=complex).reshape(-1, *rho.shape)
    dist = _Distortion(rho, support)
    # undistorted picture of M_{rho,1/2}: x -> rho^{1/2} x rho^{-1/2}
    left, right = dist.half, dist.ihalf
    a = _generated_algebra(np.array([dist.undistort(X) for X in ops]), dist.unit, space)
    dims = [a.dim]
    for _ in range(space.dim ** 2):
        moved = np.array([left @ x @ right for x in a.basis])
        nxt = _generated_algebra(np.concatenate([a.basis, moved]), dist.unit, space)
        dims.append(nxt.dim)
        if nxt.dim == a.dim:
            break
        a = nxt
    else:
        raise ConvergenceError(f"minimal fixed-point set did not stabilize within {space.dim ** 2} rounds")
    alg = _as_algebra(a, dist, space)
    alg.flags = {"modular_invariant": True, "dagger_closed": True, "rho_product_closed": True}
    return (alg, dims) if return_trace else alg


# --------------------------------------------------------------------------
# block structure

@dataclass(frozen=True)
class Block:
    isometry: np.ndarray      # d x (s*f), columns ordered (i_S, k_F) with F fastest
    s: int
    f: int
    tau_F: np.ndarray
    weight: float
    rho_S: np.ndarray


@dataclass
class BlockDecomposition:
    """``A = (+)_l V_l (B(H_S) (x) tau_F) V_l^H`` with ``rho = (+)_l p_l rho_S (x) tau_F``."""

    space: HilbertSpace
    blocks: list
    remainder: np.ndarray
    rho: np.ndarray
    residuals: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return sum(b.s * b.s for b in self.blocks)

    @property
    def has_remainder(self) -> bool:
        return bool(np.trace(self.remainder).real > 0.5)

    def algebra(self) -> OperatorSubspace:
        """Reassemble the distorted algebra from the blocks."""
        gens = []
        for b in self.blocks:
            for i in range(b.s):
                for j in range(b.s):
                    e = np.zeros((b.s, b.s), dtype=complex)
                    e[i, j] = 1.0
                    gens.append(b.isometry @ np.kron(e, b.tau_F) @ b.isometry.conj().T)
        return hermitian_span(np.array(gens), self.space)

    def to_dict(self) -> dict:
        return {
            "blocks": [
                {"s": b.s, "f": b.f, "weight": b.weight,
                 "tau_F_eigenvalues": np.linalg.eigvalsh(b.tau_F)[::-1].tolist()}
                for b in self.blocks
            ],
            "remainder_dim": int(round(np.trace(self.remainder).real)),
            "residuals": self.residuals,
        }


def _clusters(w: np.ndarray, tol: float) -> list[np.ndarray]:
    """Group sorted eigenvalues whose consecutive gaps are below ``tol``."""
    groups, start = [], 0
    for k in range(1, len(w) + 1):
        if k == len(w) or w[k] - w[k - 1] > tol:
            groups.append(np.arange(start, k))
            start = k
    return groups


def _commutant(elements: np.ndarray, r: int, tol: float) -> np.ndarray:
    eye = np.eye(r)
    rows = [np.kron(eye, x) - np.kron(x.T, eye) for x in elements]
    _, s, vh = np.linalg.svd(np.vstack(rows))
    null = np.ones(r * r, dtype=bool)
    null[: len(s)] = s <= tol * max(1.0, s[0])
    return np.array([unvec(v, r) for v in vh.conj()[null]])


def _random_hermitian_element(basis: np.ndarray, rng) -> np.ndarray:
    c = rng.standard_normal(len(basis)) + 1j * rng.standard_normal(len(basis))
    x = np.tensordot(c, basis, axes=1)
    return 0.5 * (x + x.conj().T)


def block_decompose(A: DistortedAlgebra, seed: int = CENTER_SEED, tol: float = 1e-7) -> BlockDecomposition:
    """Wedderburn blocks of a distorted algebra and the factorization of ``rho`` they induce.

    The undistorted algebra is restricted to the support of ``rho``; its
    center is found as the intersection with the commutant of a few generic
    elements, and central projections come from a generic central element.
    Two independent samples must agree on the block count.
    """
    rho = A.rho
    space = A.space
    U = support_isometry(rho)
    r = U.shape[1]
    sub = HilbertSpace.unstructured(r)
    a = np.array([U.conj().T @ x @ U for x in A.undistorted.basis])
    a_sub = hermitian_span(a, sub)
    basis = a_sub.basis
    rng = np.random.default_rng(seed)

    def central_projections():
        probes = np.array([_random_hermitian_element(basis, rng) for _ in range(3)])
        comm = _commutant(probes, r, tol)
        center = subspace_intersect(a_sub, orthonormalize(comm, sub), tol=1e-6)
        z = _random_hermitian_element(center.basis, rng)
        w, v = np.linalg.eigh(z)
        scale = max(1.0, float(np.abs(w).max()))
        return [v[:, g] for g in _clusters(w, 1e-6 * scale)], center.dim

    first, zdim = central_projections()
    second, zdim2 = central_projections()
    if len(first) != len(second) or zdim != zdim2 or len(first) != zdim:
        raise DecompositionError(
            f"center extraction is unstable: {len(first)} vs {len(second)} blocks, center dims {zdim}/{zdim2}"
        )

    blocks = []
    worst = 0.0
    for Q in first:
        m = Q.shape[1]
        local = np.array([Q.conj().T @ x @ Q for x in basis])
        h = _random_hermitian_element(local, rng)
        w, v = np.linalg.eigh(h)
        groups = _clusters(w, 1e-6 * max(1.0, float(np.abs(w).max())))
        s = len(groups)
        f = m // s
        if any(len(g) != f for g in groups) or s * f != m:
            raise DecompositionError(f"block of size {m} does not split as B(C^s) (x) I_f")
        E = [v[:, g] for g in groups]
        g_el = np.tensordot(rng.standard_normal(len(local)) + 1j * rng.standard_normal(len(local)), local, axes=1)
        cols = [E[0]]
        for i in range(1, s):
            X = E[i] @ (E[i].conj().T @ g_el @ E[0])
            Y = X.conj().T @ X
            nrm = math.sqrt(max(np.trace(Y).real / f, 0.0))
            if nrm < 1e-8:
                raise DecompositionError("matrix units could not be built from a generic element")
            cols.append(X / nrm)
        V = Q @ np.hstack(cols)  # columns (i, k) with k fastest
        iso = U @ V
        blk = iso.conj().T @ rho @ iso
        p = float(np.trace(blk).real)
        T = blk.reshape(s, f, s, f)
        tau = np.einsum("iaib->ab", T) / p
        # fix the free unitary on F by diagonalizing tau_F, largest weight first
        tw, tv = np.linalg.eigh(0.5 * (tau + tau.conj().T))
        tv = tv[:, ::-1]
        iso = iso @ np.kron(np.eye(s), tv)
        blk = iso.conj().T @ rho @ iso
        T = blk.reshape(s, f, s, f)
        tau = np.diag(tw[::-1]).astype(complex)
        rho_S = np.einsum("iaja->ij", T) / p
        worst = max(worst, float(np.linalg.norm(blk - p * np.kron(rho_S, tau))))
        blocks.append(Block(iso, s, f, tau, p, rho_S))

    # rho must not couple different blocks
    cross = 0.0
    for i, bi in enumerate(blocks):
        for bj in blocks[i + 1:]:
            cross = max(cross, float(np.linalg.norm(bi.isometry.conj().T @ rho @ bj.isometry)))
    remainder = np.eye(space.dim) - U @ U.conj().T
    residuals = {"factorization": worst, "cross_block": cross}
    if worst > 1e-6 or cross > 1e-6:
        raise DecompositionError(f"rho does not factor over the blocks: residuals {residuals}")
    return BlockDecomposition(space, blocks, remainder, rho, residuals)


# --------------------------------------------------------------------------
# channels restricted to a support

def restrict_channel(E: Channel, U: np.ndarray) -> Channel:
    """``Y -> U^H E(U Y U^H) U`` for an isometry ``U`` whose range ``E`` leaves invariant."""
    kraus = np.array([U.conj().T @ M @ U for M in E.kraus])
    return Channel(kraus, HilbertSpace.unstructured(U.shape[1]), f"restricted({E.label})", check=False)


def fix_from_dual(E: Channel) -> OperatorSubspace:
    """``rho^{1/2} (fix(E~^dag) (+) 0) rho^{1/2}`` with ``rho`` a maximal-rank fixed state.

    ``E~`` is ``E`` restricted to the support of ``rho``. The result equals
    ``fix(E)``; with full-rank ``rho`` it reduces to ``rho^{1/2} fix(E^dag) rho^{1/2}``.
    """
    rho = max_rank_fixed_state(E)
    U = support_isometry(rho)
    Er = restrict_channel(E, U)
    fd = fixed_point_space(dual(Er))
    rho_r = U.conj().T @ rho @ U
    half = psd_power(rho_r, 0.5)
    ops = np.array([U @ half @ y @ half @ U.conj().T for y in fd.basis])
    return hermitian_span(ops, E.space)


def dual_fixed_space_distance(E: Channel) -> float:
    return subspace_distance(fixed_point_space(E), fix_from_dual(E))

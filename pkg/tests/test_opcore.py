import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qstab.exceptions import DimensionError, NotPositiveDefiniteError
from qstab.opcore import (
    HilbertSpace,
    InnerMode,
    full_operator_space,
    inner,
    ket,
    orthonormalize,
    partial_trace,
    permute_factors,
    psd_power,
    subspace_angle,
    subspace_distance,
    subspace_intersect,
    support_isometry,
    tensor_embed,
    trace_distance,
    trace_distance_to_set,
    unvec,
    vec,
)
from qstab.sampling import random_density_matrix, random_hermitian

from planted import haar

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]])
Z = np.diag([1.0, -1.0]).astype(complex)

seeds = st.integers(0, 2**32 - 1)


# ---------------------------------------------------------------- spaces

def test_hilbert_space_dims():
    sp = HilbertSpace((2, 3, 2))
    assert sp.dim == 12
    assert sp.subsystem([0, 2]).factor_dims == (2, 2)
    assert sp.complement([1]) == (0, 2)


def test_dimension_cap(monkeypatch):
    monkeypatch.setenv("QSTAB_DIM_CAP", "8")
    with pytest.raises(DimensionError):
        HilbertSpace.qubits(4)
    HilbertSpace.qubits(3)


def test_vec_is_column_major():
    A = np.arange(4).reshape(2, 2)
    assert list(vec(A)) == [0, 2, 1, 3]
    assert np.array_equal(unvec(vec(A), 2), A)


def test_ket():
    assert np.argmax(np.abs(ket("0110"))) == 0b0110
    assert np.argmax(np.abs(ket([1, 2], dims=[2, 3]))) == 5


# ---------------------------------------------------------------- trace distance

def test_trace_distance_identical_is_zero(rng):
    rho = random_density_matrix(3, rng)
    assert trace_distance(rho, rho) == pytest.approx(0.0, abs=1e-14)


def test_trace_distance_orthogonal_pure_states():
    assert trace_distance(np.diag([1.0, 0.0]), np.diag([0.0, 1.0])) == pytest.approx(2.0)


def test_trace_distance_qubit_bloch_oracle(rng):
    # ||rho - tau||_1 = |r - s| for Bloch vectors r, s
    for _ in range(10):
        r, s = rng.normal(size=3), rng.normal(size=3)
        r *= rng.random() / np.linalg.norm(r)
        s *= rng.random() / np.linalg.norm(s)
        rho = 0.5 * (I2 + r[0] * X + r[1] * Y + r[2] * Z)
        tau = 0.5 * (I2 + s[0] * X + s[1] * Y + s[2] * Z)
        assert trace_distance(rho, tau) == pytest.approx(np.linalg.norm(r - s), abs=1e-12)


def test_trace_distance_non_hermitian_uses_singular_values():
    A = np.array([[0, 1], [0, 0]], dtype=complex)
    assert trace_distance(A, np.zeros((2, 2))) == pytest.approx(1.0)


def test_trace_distance_to_set_with_map():
    dephase = lambda r: np.diag(np.diag(r))
    plus = np.full((2, 2), 0.5)
    assert trace_distance_to_set(plus, dephase) == pytest.approx(1.0)


@given(seeds, st.integers(2, 5))
def test_trace_distance_range(seed, d):
    rng = np.random.default_rng(seed)
    a, b = random_density_matrix(d, rng), random_density_matrix(d, rng)
    assert -1e-12 <= trace_distance(a, b) <= 2 + 1e-12


# ---------------------------------------------------------------- powers and supports

def test_psd_power_singular_needs_support_flag():
    rho = np.diag([1.0, 0.0])
    with pytest.raises(NotPositiveDefiniteError):
        psd_power(rho, -0.5)
    assert np.allclose(psd_power(rho, -0.5, support=True), rho)


def test_support_isometry_descending():
    U = support_isometry(np.diag([0.2, 0.0, 0.8]))
    assert U.shape == (3, 2)
    assert abs(U[2, 0]) == pytest.approx(1.0)


# ---------------------------------------------------------------- tensor structure

def test_tensor_embed_matches_kron():
    sp = HilbertSpace.qubits(3)
    assert np.allclose(tensor_embed(X, [1], sp), np.kron(np.kron(I2, X), I2))
    assert np.allclose(tensor_embed(np.kron(X, Z), [0, 2], sp), np.kron(np.kron(X, I2), Z))


def test_tensor_embed_unordered_factors():
    sp = HilbertSpace((2, 3))
    A = np.arange(9).reshape(3, 3).astype(complex)
    assert np.allclose(tensor_embed(A, [1], sp), np.kron(I2, A))
    swapped = permute_factors(np.kron(A, X), [1, 0], sp)
    assert np.allclose(swapped, np.kron(X, A))


def test_partial_trace_of_product(rng):
    sp = HilbertSpace((2, 3, 2))
    a, b, c = (random_density_matrix(k, rng) for k in (2, 3, 2))
    rho = np.kron(np.kron(a, b), c)
    assert np.allclose(partial_trace(rho, [1], sp), b)
    assert np.allclose(partial_trace(rho, [0, 2], sp), np.kron(a, c))


@given(seeds)
def test_partial_trace_preserves_trace_and_positivity(seed):
    rng = np.random.default_rng(seed)
    sp = HilbertSpace((2, 2, 3))
    rho = random_density_matrix(sp.dim, rng)
    keep = [k for k in range(3) if rng.random() < 0.5] or [2]
    red = partial_trace(rho, keep, sp)
    assert np.trace(red).real == pytest.approx(1.0, abs=1e-12)
    assert np.linalg.eigvalsh(red)[0] > -1e-12


# ---------------------------------------------------------------- inner products

def test_inner_xi_identity_reduces_to_trace(rng):
    A, B = random_hermitian(3, rng), random_hermitian(3, rng)
    assert inner(A, B, InnerMode.XI, np.eye(3)) == pytest.approx(np.trace(A @ B))


def test_inner_xi_pauli_z():
    xi = np.linalg.inv(np.diag([2.0, 1.0]) / 3)  # diag(3/2, 3)
    assert inner(Z, Z, InnerMode.XI, xi).real == pytest.approx(4.5)


def test_inner_modes_agree_when_xi_commutes(rng):
    xi = np.diag([0.5, 2.0, 1.0])
    Y_ = np.diag(rng.normal(size=3)).astype(complex)
    A = random_hermitian(3, rng)
    assert inner(A, Y_, InnerMode.XI, xi) == pytest.approx(inner(A, Y_, InnerMode.XI_SYM, xi))


def test_inner_rejects_indefinite_weight():
    with pytest.raises(NotPositiveDefiniteError):
        inner(Z, Z, InnerMode.XI, np.diag([1.0, -1.0]))


@given(seeds, st.sampled_from([InnerMode.HS, InnerMode.XI, InnerMode.XI_SYM]))
def test_inner_is_inner_product_on_hermitian(seed, mode):
    rng = np.random.default_rng(seed)
    xi = np.linalg.inv(random_density_matrix(3, rng)) if mode is not InnerMode.HS else None
    A, B = random_hermitian(3, rng), random_hermitian(3, rng)
    ab, ba = inner(A, B, mode, xi), inner(B, A, mode, xi)
    assert ab == pytest.approx(np.conj(ba), abs=1e-9 * (1 + abs(ab)))
    assert inner(A, A, mode, xi).real > 0
    assert abs(inner(A, A, mode, xi).imag) < 1e-9 * inner(A, A, mode, xi).real


# ---------------------------------------------------------------- subspaces

def test_orthonormalize_drops_dependent():
    S = orthonormalize([np.eye(2), 2 * np.eye(2)], HilbertSpace.unstructured(2))
    assert S.dim == 1


def test_orthonormalize_paulis():
    S = orthonormalize([I2, X, Y, Z], HilbertSpace.unstructured(2))
    assert S.dim == 4
    assert np.allclose(S.gram(), np.eye(4))


def test_orthonormalize_rank_matches_svd(rng):
    gens = rng.normal(size=(3, 4, 4)) + 1j * rng.normal(size=(3, 4, 4))
    gens = np.concatenate([gens, [gens[0] + 2 * gens[1], gens[2] - gens[1]]])
    rank = np.linalg.matrix_rank(np.array([vec(g) for g in gens]))
    assert rank == 3
    assert orthonormalize(gens, HilbertSpace.qubits(2)).dim == rank


def test_orthonormalize_all_zero_raises():
    with pytest.raises(ValueError):
        orthonormalize([np.zeros((2, 2))], HilbertSpace.unstructured(2))


def test_intersect_self():
    sp = HilbertSpace.unstructured(2)
    A = orthonormalize([I2, Z], sp)
    assert subspace_distance(subspace_intersect(A, A), A) < 1e-12


def test_intersect_pauli_spans():
    sp = HilbertSpace.unstructured(2)
    C = subspace_intersect(orthonormalize([I2, Z], sp), orthonormalize([I2, X], sp))
    assert C.dim == 1
    assert C.contains(I2)


def _planted_pair(rng, d=4, k_common=2, k_extra=4, angle=None):
    """Two subspaces of C^{d x d} with a planted ``k_common``-dim intersection."""
    Q = np.linalg.qr(rng.normal(size=(d * d, d * d)) + 1j * rng.normal(size=(d * d, d * d)))[0]
    common = Q[:, :k_common]
    a = Q[:, k_common:k_common + k_extra]
    b = Q[:, k_common + k_extra:k_common + 2 * k_extra]
    if angle is not None:
        b = np.cos(angle) * a + np.sin(angle) * b
    else:
        b = 0.6 * a + 0.8 * b @ np.linalg.qr(rng.normal(size=(k_extra, k_extra)))[0]
    ops = lambda M: np.array([unvec(M[:, j], d) for j in range(M.shape[1])])
    sp = HilbertSpace.qubits(2)
    A = orthonormalize(ops(np.hstack([common, a])), sp)
    B = orthonormalize(ops(np.hstack([common, b])), sp)
    return A, B, ops(common)


def test_intersect_planted_common_part(rng):
    A, B, common = _planted_pair(rng)
    C = subspace_intersect(A, B)
    assert C.dim == 2
    assert all(C.contains(c) for c in common)


def test_intersect_mode_mismatch_raises(rng):
    sp = HilbertSpace.unstructured(2)
    A = orthonormalize([I2], sp)
    B = orthonormalize([I2], sp, InnerMode.XI, np.diag([2.0, 0.5]))
    with pytest.raises(ValueError):
        subspace_intersect(A, B)


def test_angle_orthogonal_and_equal():
    sp = HilbertSpace.unstructured(2)
    A, B = orthonormalize([Z], sp), orthonormalize([X], sp)
    c, theta = subspace_angle(A, B)
    assert c == pytest.approx(0.0, abs=1e-12) and theta == pytest.approx(math.pi / 2)
    assert subspace_angle(A, A)[0] == pytest.approx(0.0, abs=1e-12)


def test_angle_between_lines():
    sp = HilbertSpace.unstructured(2)
    t = math.pi / 6
    A = orthonormalize([Z], sp)
    B = orthonormalize([math.cos(t) * Z + math.sin(t) * X], sp)
    c, theta = subspace_angle(A, B)
    assert c == pytest.approx(math.cos(math.pi / 6), abs=1e-12)
    assert theta == pytest.approx(math.pi / 6, abs=1e-12)


@given(seeds)
def test_angle_properties(seed):
    rng = np.random.default_rng(seed)
    A, B, _ = _planted_pair(rng, k_common=int(rng.integers(0, 3)), k_extra=3)
    c_ab, _ = subspace_angle(A, B)
    c_ba, _ = subspace_angle(B, A)
    assert -1e-12 <= c_ab <= 1 + 1e-12
    assert c_ab == pytest.approx(c_ba, abs=1e-9)
    PA, PB = A.projector(), B.projector()
    Pc = subspace_intersect(A, B).projector()
    n = PA.shape[0]
    assert c_ab == pytest.approx(np.linalg.norm(PA @ PB - Pc, 2), abs=1e-9)
    assert c_ab == pytest.approx(np.linalg.norm(PA @ PB @ (np.eye(n) - Pc), 2), abs=1e-9)


def test_xi_geometry_orthonormal_in_weighted_product(rng):
    rho = random_density_matrix(2, rng)
    xi = np.linalg.inv(rho)
    S = orthonormalize([I2, X, Z], HilbertSpace.unstructured(2), InnerMode.XI, xi)
    B = S.basis
    G = np.array([[inner(a, b, InnerMode.XI, xi) for b in B] for a in B])
    assert np.allclose(G, np.eye(3), atol=1e-10)


def test_full_operator_space_contains_everything(rng):
    S = full_operator_space(HilbertSpace.unstructured(3))
    assert S.dim == 9
    M = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    assert S.residual(M) < 1e-12


def test_haar_frame_invariance_of_distance(rng):
    U = haar(3, rng)
    a, b = random_density_matrix(3, rng), random_density_matrix(3, rng)
    rot = lambda r: U @ r @ U.conj().T
    assert trace_distance(rot(a), rot(b)) == pytest.approx(trace_distance(a, b), abs=1e-12)

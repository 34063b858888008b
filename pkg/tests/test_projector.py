import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qstab.channels import Channel, apply, dephasing, validate
from qstab.exceptions import DecompositionError, NotProjectorError
from qstab.fixpoint import block_decompose, distorted_closure, fixed_point_space
from qstab.opcore import HilbertSpace, InnerMode, orthonormalize, subspace_distance
from qstab.projector import (
    Method,
    check_self_adjoint,
    composed_projection,
    cptp_projection,
    direct_projection,
    hs_orthogonal_projection,
    reset_map,
)
from qstab.sampling import random_density_matrix

from planted import haar, hs_basis, planted_channel, random_state

seeds = st.integers(0, 2**32 - 1)
Z = np.diag([1.0, -1.0]).astype(complex)


def image_space(E):
    d = E.dim
    return orthonormalize(np.array([apply(E, B) for B in hs_basis(d)]), HilbertSpace.unstructured(d))


def planted_algebra(rng, tau):
    """B(C^2) (x) tau inside two qubits, in a random frame, with its full-rank state."""
    U = haar(4, rng)
    rho_S = random_state(2, rng)
    rho = U @ np.kron(rho_S, tau) @ U.conj().T
    gens = [U @ np.kron(E, tau) @ U.conj().T for E in hs_basis(2)]
    return distorted_closure(rho, gens), rho


# ---------------------------------------------------------------- reset maps

def test_reset_identity_projector():
    E = reset_map(np.eye(3))
    assert np.allclose(E.superoperator, np.eye(9))


def test_reset_rank_one(rng):
    E = reset_map(np.diag([1.0, 0.0]))
    X = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    assert np.allclose(apply(E, X), np.trace(X) * np.diag([1.0, 0.0]))


def test_reset_two_dim_projector(rng):
    U = haar(4, rng)
    E = reset_map(U[:, :2] @ U[:, :2].conj().T)
    r = validate(E)
    assert r.tp_residual < 1e-12 and r.idempotency_residual < 1e-12
    assert fixed_point_space(E).dim == 4
    assert E.method is Method.RESET and E.target_dim == 4


def test_reset_formula(rng):
    U = haar(3, rng)
    P = U[:, :2] @ U[:, :2].conj().T
    X = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    want = P @ X @ P + P * np.trace((np.eye(3) - P) @ X) / 2
    assert np.allclose(apply(reset_map(P), X), want)


def test_reset_rejects_non_projector():
    with pytest.raises(NotProjectorError):
        reset_map(np.diag([1.0, 0.5]))


# ---------------------------------------------------------------- damped projections

def test_cptp_projection_of_idempotent():
    D = dephasing(2)
    P = cptp_projection(D)
    assert np.allclose(P.superoperator, D.superoperator)


def test_cptp_projection_z_unitary():
    P = cptp_projection(Channel.unitary(Z))
    assert np.max(np.abs(P.superoperator - dephasing(2).superoperator)) < 1e-9
    assert validate(P).is_projection()


@settings(max_examples=8)
@given(seeds, st.sampled_from([[(2, 2)], [(1, 2), (1, 2)], [(2, 1), (1, 2)]]))
def test_cptp_projection_image_is_planted_algebra(seed, layout):
    rng = np.random.default_rng(seed)
    pc = planted_channel(rng, layout)
    P = cptp_projection(pc.channel)
    assert subspace_distance(image_space(P), pc.fixed_space()) < 1e-8
    assert validate(P).is_projection()


# ---------------------------------------------------------------- direct formula

def test_direct_single_full_block(rng):
    rho = random_density_matrix(3, rng)
    E = direct_projection(distorted_closure(rho, hs_basis(3)))
    assert np.allclose(E.superoperator, np.eye(9), atol=1e-10)


@pytest.mark.parametrize("p", [0.2, 0.5, 0.85])
def test_direct_diagonal_is_dephasing(p):
    rho = np.diag([p, 1 - p])
    A = distorted_closure(rho, [np.diag([1.0, 0.0]), np.diag([0.0, 1.0])])
    E = direct_projection(A)
    assert np.allclose(E.superoperator, dephasing(2).superoperator, atol=1e-10)


def test_direct_vs_damped(rng):
    for _ in range(3):
        pc = planted_channel(rng, [(2, 2)])
        A = distorted_closure(pc.rho, pc.fixed_generators())
        D = direct_projection(A)
        P = cptp_projection(pc.channel)
        assert np.linalg.norm(D.superoperator - P.superoperator) < 1e-8


def test_direct_rejects_remainder(rng):
    U = haar(4, rng)
    rho = U[:, :3] @ np.diag([0.5, 0.3, 0.2]) @ U[:, :3].conj().T
    gens = [U[:, :3] @ E @ U[:, :3].conj().T for E in hs_basis(3)]
    A = distorted_closure(rho, gens, support=True)
    with pytest.raises(DecompositionError):
        direct_projection(A)


# ---------------------------------------------------------------- composed maps

def test_composed_full_subspace_is_reset(rng):
    U = haar(4, rng)
    V = U[:, :2]
    rho = V @ random_state(2, rng) @ V.conj().T
    A = distorted_closure(rho, [V @ E @ V.conj().T for E in hs_basis(2)], support=True)
    E = composed_projection(A)
    assert np.allclose(E.superoperator, reset_map(V @ V.conj().T).superoperator, atol=1e-10)


def test_composed_pure_support(rng):
    v = haar(3, rng)[:, 0]
    rho = np.outer(v, v.conj())
    E = composed_projection(distorted_closure(rho, [rho], support=True))
    X = random_density_matrix(3, rng)
    assert np.allclose(apply(E, X), rho, atol=1e-10)


def test_composed_diagonal_on_subspace(rng):
    U = haar(4, rng)
    rho = U[:, :2] @ np.diag([0.6, 0.4]) @ U[:, :2].conj().T
    gens = [np.outer(U[:, k], U[:, k].conj()) for k in range(2)]
    E = composed_projection(distorted_closure(rho, gens, support=True))
    r = validate(E)
    assert r.is_projection()
    assert image_space(E).dim == 2
    assert E.method is Method.COMPOSED


# ---------------------------------------------------------------- orthogonality

def test_self_adjoint_identity(rng):
    Id = Channel.identity(HilbertSpace.unstructured(3))
    rho = random_density_matrix(3, rng)
    assert check_self_adjoint(Id, rho, InnerMode.XI) < 1e-12
    assert check_self_adjoint(Id, mode=InnerMode.HS) < 1e-12


@settings(max_examples=8)
@given(seeds, st.sampled_from([[(2, 2)], [(1, 2), (1, 2)], [(2, 1), (1, 2)], [(1, 3), (1, 1)]]))
def test_direct_is_self_adjoint_in_rho_inverse(seed, layout):
    rng = np.random.default_rng(seed)
    pc = planted_channel(rng, layout)
    E = direct_projection(distorted_closure(pc.rho, pc.fixed_generators()))
    assert check_self_adjoint(E, pc.rho, InnerMode.XI) < 1e-9
    assert check_self_adjoint(E, pc.rho, InnerMode.XI_SYM) < 1e-9


def test_direct_not_hs_orthogonal(rng):
    A, rho = planted_algebra(rng, np.diag([0.7, 0.3]))
    E = direct_projection(A)
    assert check_self_adjoint(E, mode=InnerMode.HS) > 1e-2


def test_hs_dichotomy(rng):
    # equal to the HS-orthogonal projection exactly when tau_F is maximally mixed
    A, _ = planted_algebra(rng, np.eye(2) / 2)
    E = direct_projection(A)
    assert np.linalg.norm(E.superoperator - hs_orthogonal_projection(A.subspace)) < 1e-9
    A, _ = planted_algebra(rng, np.diag([0.7, 0.3]))
    E = direct_projection(A)
    assert np.linalg.norm(E.superoperator - hs_orthogonal_projection(A.subspace)) > 1e-2


# ---------------------------------------------------------------- invariants

@settings(max_examples=8)
@given(seeds)
def test_image_and_identity_on_target(seed):
    rng = np.random.default_rng(seed)
    pc = planted_channel(rng, [(2, 1), (1, 2)])
    E = direct_projection(distorted_closure(pc.rho, pc.fixed_generators()))
    target = E.target_subspace()
    X = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    assert target.residual(apply(E, X)) < 1e-9
    for B in target.basis:
        assert np.allclose(apply(E, B), B, atol=1e-10)
    r = validate(E)
    assert r.is_projection()


def test_metadata(rng):
    pc = planted_channel(rng, [(2, 2)])
    E = direct_projection(block_decompose(distorted_closure(pc.rho, pc.fixed_generators())))
    assert E.metadata() == {"method": "DIRECT", "target_dim": 4}

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qstab.channels import (
    Channel,
    amplitude_damping,
    apply,
    apply_superoperator,
    choi_to_kraus,
    compose,
    damped_power,
    dephasing,
    depolarizing,
    dual,
    embed_neighborhood,
    mixture,
    superoperator_to_choi,
    transpose_map,
    validate,
)
from qstab.exceptions import DimensionError, NotCPTPError
from qstab.opcore import HilbertSpace, inner, partial_trace, tensor_embed, trace_distance
from qstab.projector import reset_map
from qstab.sampling import random_density_matrix, random_kraus

from planted import haar

seeds = st.integers(0, 2**32 - 1)
Zu = np.diag([1.0, -1.0]).astype(complex)


def random_channel(d, n, rng, space=None):
    return Channel(random_kraus(d, n, rng), space)


# ---------------------------------------------------------------- apply

def test_identity_channel(rng):
    X = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    assert np.allclose(apply(Channel.identity(HilbertSpace.unstructured(3)), X), X)


def test_completely_depolarizing(rng):
    rho = random_density_matrix(2, rng)
    assert np.allclose(apply(depolarizing(1.0), rho), np.eye(2) / 2)


def test_amplitude_damping_excited_state():
    out = apply(amplitude_damping(0.3), np.diag([0.0, 1.0]))
    assert np.allclose(out, np.diag([0.3, 0.7]))


def test_apply_agrees_with_superoperator(rng):
    E = random_channel(3, 4, rng)
    X = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    assert np.allclose(apply(E, X), apply_superoperator(E, X))


def test_apply_dimension_mismatch(rng):
    with pytest.raises(DimensionError):
        apply(depolarizing(0.5), np.eye(3))


def test_non_tp_kraus_rejected():
    with pytest.raises(NotCPTPError):
        Channel([0.5 * np.eye(2)])


# ---------------------------------------------------------------- compose

def test_compose_with_identity(rng):
    E = random_channel(2, 3, rng)
    Id = Channel.identity(E.space)
    assert np.allclose(compose(E, Id).superoperator, E.superoperator)


def test_compose_unitaries(rng):
    U, V = haar(2, rng), haar(2, rng)
    C = compose(Channel.unitary(V), Channel.unitary(U))
    assert np.allclose(C.superoperator, Channel.unitary(V @ U).superoperator)


def test_compose_depolarizing():
    p, q = 0.3, 0.45
    C = compose(depolarizing(p), depolarizing(q))
    assert np.allclose(C.superoperator, depolarizing(p + q - p * q).superoperator)


def test_compose_matches_superoperator_product(rng):
    A, B = random_channel(3, 3, rng), random_channel(3, 2, rng)
    assert np.allclose((A @ B).superoperator, A.superoperator @ B.superoperator)


def test_compose_reextracts_kraus_beyond_cap(rng):
    A, B = random_channel(2, 4, rng), random_channel(2, 4, rng)
    C = compose(A, B, max_kraus=4)
    assert len(C.kraus) <= 4
    assert np.allclose(C.superoperator, A.superoperator @ B.superoperator)


def test_choi_round_trip(rng):
    E = random_channel(3, 2, rng)
    K = choi_to_kraus(superoperator_to_choi(E.superoperator))
    assert len(K) == 2
    assert np.allclose(Channel(K).superoperator, E.superoperator)


# ---------------------------------------------------------------- dual

def test_dual_of_unitary(rng):
    U = haar(3, rng)
    X = rng.normal(size=(3, 3))
    assert np.allclose(apply(dual(Channel.unitary(U)), X), U.conj().T @ X @ U)


@given(seeds)
def test_dual_is_unital_and_adjoint(seed):
    rng = np.random.default_rng(seed)
    E = random_channel(3, int(rng.integers(1, 5)), rng)
    D = dual(E)
    assert np.allclose(apply(D, np.eye(3)), np.eye(3))
    X = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    Y = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    assert inner(apply(D, X), Y) == pytest.approx(inner(X, apply(E, Y)))


# ---------------------------------------------------------------- validate

def test_validate_identity():
    r = validate(Channel.identity(HilbertSpace.unstructured(2)))
    assert r.tp_residual == pytest.approx(0, abs=1e-14)
    assert r.idempotency_residual == pytest.approx(0, abs=1e-14)
    assert r.choi_deficit == 0


def test_validate_reset_family(rng):
    U = haar(4, rng)
    P = U[:, :2] @ U[:, :2].conj().T
    r = validate(reset_map(P))
    assert r.tp_residual < 1e-12 and r.idempotency_residual < 1e-12 and r.choi_deficit < 1e-12


def test_validate_non_tp():
    r = validate(Channel([0.5 * np.eye(2)], check=False))
    assert r.tp_residual == pytest.approx(0.75)


def test_validate_flags_transpose():
    r = validate(transpose_map(2))
    assert r.min_choi_eigenvalue == pytest.approx(-1.0)
    assert not r.is_cptp()


# ---------------------------------------------------------------- embedding

def test_embed_identity():
    sp = HilbertSpace.qubits(3)
    E = embed_neighborhood(Channel.identity(HilbertSpace.qubits(2)), [0, 2], sp)
    assert np.allclose(E.superoperator, np.eye(64))


def test_embed_locality(rng):
    sp = HilbertSpace.qubits(3)
    R = embed_neighborhood(reset_map(np.diag([1.0, 0.0])), [1], sp)
    a, b, c = (random_density_matrix(2, rng) for _ in range(3))
    out = apply(R, np.kron(np.kron(a, b), c))
    assert np.allclose(partial_trace(out, [0, 2], sp), np.kron(a, c))
    assert np.allclose(partial_trace(out, [1], sp), np.diag([1.0, 0.0]))


def test_embed_disjoint_commute(rng):
    sp = HilbertSpace.qubits(3)
    A = embed_neighborhood(random_channel(4, 3, rng, HilbertSpace.qubits(2)), [0, 2], sp)
    B = embed_neighborhood(random_channel(2, 2, rng), [1], sp)
    S, T = A.superoperator, B.superoperator
    assert np.linalg.norm(S @ T - T @ S) < 1e-12


def test_embed_dimension_mismatch(rng):
    with pytest.raises(DimensionError):
        embed_neighborhood(random_channel(2, 2, rng), [0, 1], HilbertSpace.qubits(3))


def test_embed_kraus_are_tensor_embedded(rng):
    sp = HilbertSpace((2, 3))
    E = random_channel(3, 2, rng)
    G = embed_neighborhood(E, [1], sp)
    assert np.allclose(G.kraus[0], tensor_embed(E.kraus[0], [1], sp))


# ---------------------------------------------------------------- damping

def test_damped_identity():
    Id = Channel.identity(HilbertSpace.unstructured(2))
    for n in (1, 5, 20):
        assert np.allclose(damped_power(Id, 0.5, n).superoperator, np.eye(4))


def test_damped_z_unitary_is_dephasing():
    D = damped_power(Channel.unitary(Zu), 0.5, 60)
    assert np.max(np.abs(D.superoperator - dephasing(2).superoperator)) < 1e-9


def test_damped_limit_without_n():
    D = damped_power(Channel.unitary(Zu))
    assert np.max(np.abs(D.superoperator - dephasing(2).superoperator)) < 1e-9


def test_damped_rejects_bad_lambda():
    with pytest.raises(ValueError):
        damped_power(depolarizing(0.2), 1.5, 3)


def test_damped_step_residual_decreases(rng):
    # the damped map is CPTP, hence a trace-norm contraction on Hermitian operators
    for _ in range(5):
        E = random_channel(3, 2, rng)
        D = 0.5 * E.superoperator + 0.5 * np.eye(9)
        H = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        x = (H + H.conj().T).reshape(-1, order="F")
        res = []
        for _ in range(200):
            y = D @ x
            res.append(np.abs(np.linalg.eigvalsh((y - x).reshape(3, 3, order="F"))).sum())
            x = y
        assert all(b <= a + 1e-12 for a, b in zip(res, res[1:]))


def test_damped_doubling_residual_vanishes(rng):
    for _ in range(5):
        E = random_channel(3, 2, rng)
        a = damped_power(E, 0.5, 4096).superoperator
        b = damped_power(E, 0.5, 8192).superoperator
        assert np.linalg.norm(a - b) < 1e-9


def test_mixture(rng):
    A, B = random_channel(2, 2, rng), random_channel(2, 3, rng)
    M = mixture([A, B], [0.25, 0.75])
    assert np.allclose(M.superoperator, 0.25 * A.superoperator + 0.75 * B.superoperator)


# ---------------------------------------------------------------- invariants

@given(seeds, st.integers(2, 4), st.integers(1, 4))
def test_trace_preservation(seed, d, n):
    rng = np.random.default_rng(seed)
    E = random_channel(d, n, rng)
    X = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    assert np.trace(apply(E, X)) == pytest.approx(np.trace(X), abs=1e-10)


@given(seeds, st.integers(2, 4), st.integers(1, 4))
def test_trace_norm_contraction(seed, d, n):
    rng = np.random.default_rng(seed)
    E = random_channel(d, n, rng)
    a, b = random_density_matrix(d, rng), random_density_matrix(d, rng)
    assert trace_distance(apply(E, a), apply(E, b)) <= trace_distance(a, b) + 1e-12


@given(seeds)
def test_random_channels_are_cptp(seed):
    rng = np.random.default_rng(seed)
    r = validate(random_channel(3, 3, rng))
    assert r.is_cptp()

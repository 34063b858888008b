"""Seeded random generators, Haar states and random channels for experiments and tests."""
from __future__ import annotations

import numpy as np
from scipy.stats import unitary_group

DEFAULT_SEED = 20240611


def trial_rng(seed: int, trial: int = 0) -> np.random.Generator:
    """Counter-based generator for one trial; independent streams for distinct ``(seed, trial)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(int(trial),))))


def as_rng(rng=None) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return trial_rng(DEFAULT_SEED if rng is None else rng)


def haar_unitary(d: int, rng=None) -> np.ndarray:
    return unitary_group.rvs(d, random_state=as_rng(rng)) if d > 1 else np.ones((1, 1), dtype=complex)


def haar_vector(d: int, rng=None) -> np.ndarray:
    rng = as_rng(rng)
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return v / np.linalg.norm(v)


def haar_pure_state(d: int, rng=None) -> np.ndarray:
    v = haar_vector(d, rng)
    return np.outer(v, v.conj())


def random_density_matrix(d: int, rng=None, rank: int | None = None) -> np.ndarray:
    """Induced-measure random state ``G G^H / Tr`` with ``G`` a ``d x rank`` Ginibre matrix."""
    rng = as_rng(rng)
    k = d if rank is None else rank
    G = rng.standard_normal((d, k)) + 1j * rng.standard_normal((d, k))
    rho = G @ G.conj().T
    return rho / np.trace(rho).real


def random_hermitian(d: int, rng=None) -> np.ndarray:
    rng = as_rng(rng)
    G = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return 0.5 * (G + G.conj().T)


def random_kraus(d: int, n_kraus: int, rng=None) -> np.ndarray:
    """Kraus operators of a random channel, from a random isometry ``C^d -> C^d (x) C^n``."""
    rng = as_rng(rng)
    G = rng.standard_normal((n_kraus * d, d)) + 1j * rng.standard_normal((n_kraus * d, d))
    Q, _ = np.linalg.qr(G)
    return Q.reshape(n_kraus, d, d)

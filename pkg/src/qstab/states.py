"""Benchmark multipartite states: GHZ, Dicke, W, graph states, commuting Gibbs states."""
from __future__ import annotations

import itertools
from typing import Iterable, Sequence

import numpy as np

from .config import get_tolerances
from .opcore import HilbertSpace, ket, tensor_embed


def _dm(v: np.ndarray) -> np.ndarray:
    v = v / np.linalg.norm(v)
    return np.outer(v, v.conj())


def ghz_vector(n: int) -> np.ndarray:
    return (ket("0" * n) + ket("1" * n)) / np.sqrt(2)


def dicke_vector(n: int, k: int) -> np.ndarray:
    """Equal superposition of all ``n``-bit strings of Hamming weight ``k``."""
    if not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got n={n}, k={k}")
    v = np.zeros(2 ** n, dtype=complex)
    for ones in itertools.combinations(range(n), k):
        v[sum(1 << (n - 1 - a) for a in ones)] = 1.0
    return v / np.linalg.norm(v)


def graph_vector(n: int, edges: Iterable[Sequence[int]]) -> np.ndarray:
    """``prod_{(a,b) in edges} CZ_ab |+>^n``; vertices are 0-based."""
    v = np.full(2 ** n, 2 ** (-n / 2), dtype=complex)
    bits = (np.arange(2 ** n)[:, None] >> (n - 1 - np.arange(n))) & 1
    for a, b in edges:
        a, b = int(a), int(b)
        if a == b or not (0 <= a < n and 0 <= b < n):
            raise ValueError(f"invalid edge ({a}, {b}) for {n} vertices")
        v = v * np.where(bits[:, a] & bits[:, b], -1.0, 1.0)
    return v


def ghz(n: int) -> np.ndarray:
    return _dm(ghz_vector(n))


def dicke(n: int, k: int) -> np.ndarray:
    return _dm(dicke_vector(n, k))


def w_state(n: int) -> np.ndarray:
    return dicke(n, 1)


def graph_state(n: int, edges: Iterable[Sequence[int]]) -> np.ndarray:
    return _dm(graph_vector(n, edges))


def path_edges(n: int) -> list[tuple[int, int]]:
    return [(a, a + 1) for a in range(n - 1)]


def closed_neighborhoods(n: int, edges: Iterable[Sequence[int]]) -> list[tuple[int, ...]]:
    """``{v} | N(v)`` for every vertex ``v``."""
    nb = [{v} for v in range(n)]
    for a, b in edges:
        nb[a].add(b)
        nb[b].add(a)
    return [tuple(sorted(s)) for s in nb]


def product_state(local_states: Sequence[np.ndarray]) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for r in local_states:
        out = np.kron(out, r)
    return out


def rho_eps(eps: float, n: int = 4) -> np.ndarray:
    """``(1 - eps) |D^n_{n/2}><.| + eps |GHZ^n><.|``."""
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    return (1 - eps) * dicke(n, n // 2) + eps * ghz(n)


def gibbs_commuting(terms: Sequence[tuple[np.ndarray, Sequence[int]]], beta: float,
                    space: HilbertSpace) -> np.ndarray:
    """``exp(-beta H) / Tr`` for ``H = sum_k h_k`` given as ``(local operator, positions)`` pairs.

    The embedded terms must commute pairwise; otherwise ``ValueError``
    lists the offending pairs and their commutator norms.
    """
    H_terms = [tensor_embed(h, pos, space) for h, pos in terms]
    tol = 1e3 * get_tolerances().herm
    bad = []
    for (i, A), (j, B) in itertools.combinations(enumerate(H_terms), 2):
        c = float(np.linalg.norm(A @ B - B @ A, 2))
        if c > tol:
            bad.append((i, j, c))
    if bad:
        report = ", ".join(f"terms {i},{j}: ||[h_i,h_j]|| = {c:.3e}" for i, j, c in bad)
        raise ValueError(f"Hamiltonian terms do not commute ({report})")
    H = sum(H_terms) if H_terms else np.zeros((space.dim, space.dim), dtype=complex)
    w, v = np.linalg.eigh(0.5 * (H + H.conj().T))
    p = np.exp(-beta * (w - w.min()))
    rho = (v * p) @ v.conj().T
    return rho / np.trace(rho).real


PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def ising_chain_terms(n: int, J: float = 1.0, h: float = 0.5) -> list[tuple[np.ndarray, tuple[int, ...]]]:
    """Nearest-neighbour terms ``-J Z_a Z_{a+1} - h (Z_a + Z_{a+1}) / 2`` (fields split between bonds)."""
    Z, I = PAULI["Z"], PAULI["I"]
    out = []
    for a in range(n - 1):
        w_a = 1.0 if a == 0 else 0.5
        w_b = 1.0 if a + 1 == n - 1 else 0.5
        term = -J * np.kron(Z, Z) - h * (w_a * np.kron(Z, I) + w_b * np.kron(I, Z))
        out.append((term, (a, a + 1)))
    return out


def cluster_chain_terms(n: int, J: float = 1.0) -> list[tuple[np.ndarray, tuple[int, ...]]]:
    """Commuting, non-diagonal terms ``-J Z_{a-1} X_a Z_{a+1}`` (open chain, boundary terms shortened)."""
    X, Z = PAULI["X"], PAULI["Z"]
    out = []
    for a in range(n):
        ops, pos = [], []
        if a > 0:
            ops.append(Z)
            pos.append(a - 1)
        ops.append(X)
        pos.append(a)
        if a < n - 1:
            ops.append(Z)
            pos.append(a + 1)
        term = ops[0]
        for o in ops[1:]:
            term = np.kron(term, o)
        out.append((-J * term, tuple(pos)))
    return out


def gibbs_chain(n: int, beta: float = 1.0, J: float = 1.0, h: float = 0.5, kind: str = "ising") -> np.ndarray:
    """Gibbs state of a commuting nearest-neighbour qubit chain."""
    space = HilbertSpace.qubits(n)
    terms = ising_chain_terms(n, J, h) if kind == "ising" else cluster_chain_terms(n, J)
    return gibbs_commuting(terms, beta, space)


def make_state(kind: str, params: dict | None = None) -> tuple[np.ndarray, HilbertSpace]:
    """Factory used by scenarios: returns the state and its qubit space."""
    p = dict(params or {})
    kind = kind.lower()
    if kind == "ghz":
        n = int(p["n"])
        return ghz(n), HilbertSpace.qubits(n)
    if kind == "dicke":
        n = int(p["n"])
        return dicke(n, int(p["k"])), HilbertSpace.qubits(n)
    if kind == "w":
        n = int(p["n"])
        return w_state(n), HilbertSpace.qubits(n)
    if kind == "graph":
        n = int(p["n"])
        edges = p.get("edges")
        edges = path_edges(n) if edges is None else [tuple(e) for e in edges]
        return graph_state(n, edges), HilbertSpace.qubits(n)
    if kind in ("gibbs", "gibbs_chain"):
        n = int(p["n"])
        return gibbs_chain(n, float(p.get("beta", 1.0)), float(p.get("J", 1.0)), float(p.get("h", 0.5)),
                           p.get("model", "ising")), HilbertSpace.qubits(n)
    if kind == "rho_eps":
        n = int(p.get("n", 4))
        return rho_eps(float(p["eps"]), n), HilbertSpace.qubits(n)
    if kind == "product":
        bits = str(p.get("bits", "0" * int(p.get("n", 1))))
        return _dm(ket(bits)), HilbertSpace.qubits(len(bits))
    if kind == "maximally_mixed":
        n = int(p["n"])
        return np.eye(2 ** n, dtype=complex) / 2 ** n, HilbertSpace.qubits(n)
    raise ValueError(f"unknown state kind {kind!r}")

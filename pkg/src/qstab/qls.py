"""Quasi-local stabilizability: neighborhood structures, decisions and stabilizing maps.

Three decision paths are available:

* pure targets: intersect the Hilbert subspaces ``supp(rho_N) (x) H_rest``;
* full-rank targets: intersect the minimal fixed-point sets
  ``F_N (x) B(H_rest)`` built from Schmidt spans;
* other targets: the same sets built on the supports of the reduced
  states, plus the requirement that the supports intersect exactly in
  ``supp(rho)`` (a sufficient condition).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channels import Channel, apply, embed_neighborhood
from .config import get_tolerances
from .exceptions import NotPositiveDefiniteError, NotQLSError
from .fixpoint import DistortedAlgebra, hermitian_span, minimal_fixed_point_set, schmidt_span
from .opcore import (
    HilbertSpace,
    OperatorSubspace,
    intersect_all,
    partial_trace,
    permute_factors,
    range_intersection,
    support_isometry,
    support_projector,
    tensor_embed,
    trace_distance,
)
from .projector import ProjectionChannel, composed_projection, direct_projection, reset_map
from .validation import check_density_matrix, check_index_set


@dataclass(frozen=True)
class NeighborhoodStructure:
    """Subsets ``N_j`` of the ``n`` subsystems (0-based).

    Every neighborhood must be a nonempty proper subset unless
    ``allow_full`` is set, in which case a full-system neighborhood only
    triggers a warning. A warning is also issued when the union misses a
    subsystem.
    """

    n: int
    neighborhoods: tuple
    allow_full: bool = False

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need at least one subsystem")
        if len(self.neighborhoods) == 0:
            raise ValueError("the neighborhood list is empty")
        cleaned = tuple(check_index_set(N, self.n, f"neighborhood {j}") for j, N in enumerate(self.neighborhoods))
        object.__setattr__(self, "neighborhoods", cleaned)
        full = [j for j, N in enumerate(cleaned) if len(N) == self.n]
        if full and not self.allow_full:
            raise ValueError(f"neighborhoods {full} cover the whole system; they must be proper subsets")
        if full:
            warnings.warn(f"neighborhoods {full} cover the whole system; QLS is then trivial", stacklevel=2)
        covered = set().union(*cleaned)
        if covered != set(range(self.n)):
            warnings.warn(f"neighborhoods do not cover subsystems {sorted(set(range(self.n)) - covered)}",
                          stacklevel=2)

    @classmethod
    def from_one_based(cls, n: int, neighborhoods, allow_full: bool = False) -> "NeighborhoodStructure":
        return cls(n, tuple(tuple(a - 1 for a in N) for N in neighborhoods), allow_full)

    def __len__(self) -> int:
        return len(self.neighborhoods)

    def __iter__(self):
        return iter(self.neighborhoods)

    def complement(self, j: int) -> tuple[int, ...]:
        return tuple(a for a in range(self.n) if a not in self.neighborhoods[j])

    def is_full(self, j: int) -> bool:
        return len(self.neighborhoods[j]) == self.n

    def refines_into(self, other: "NeighborhoodStructure") -> bool:
        """True when every neighborhood here lies inside some neighborhood of ``other``."""
        return all(any(set(N) <= set(M) for M in other.neighborhoods) for N in self.neighborhoods)

    def to_list(self) -> list[list[int]]:
        return [list(N) for N in self.neighborhoods]


def enlarged_neighborhoods(base: NeighborhoodStructure, seeds: Sequence[Sequence[int]] | None = None,
                           allow_full: bool = True) -> NeighborhoodStructure:
    """``N0_j = union of the base neighborhoods N_k with N_k & N_j nonempty``.

    ``seeds`` defaults to the base neighborhoods themselves; passing single
    sites (``[[0], [1], ...]``) enlarges around each subsystem instead.
    Duplicates are dropped, order kept.
    """
    seeds = base.neighborhoods if seeds is None else [tuple(s) for s in seeds]
    out = []
    for S in seeds:
        grown = set()
        for N in base.neighborhoods:
            if set(N) & set(S):
                grown |= set(N)
        t = tuple(sorted(grown | set(S)))
        if t not in out:
            out.append(t)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return NeighborhoodStructure(base.n, tuple(out), allow_full=allow_full)


# --------------------------------------------------------------------------
# reports

@dataclass
class QlsReport:
    decision: bool
    intersection_dim: int
    support_dims: list
    kind: str
    witness: np.ndarray | None = None
    local_dims: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "decision": bool(self.decision),
            "kind": self.kind,
            "intersection_dim": int(self.intersection_dim),
            "support_dims": [int(x) for x in self.support_dims],
            "local_dims": [int(x) for x in self.local_dims],
            "details": self.details,
            "witness": None,
        }
        if self.witness is not None:
            w = np.asarray(self.witness)
            out["witness"] = [[[float(z.real), float(z.imag)] for z in row] for row in w]
        return out


def _space_for(rho: np.ndarray, N: NeighborhoodStructure, space: HilbertSpace | None) -> HilbertSpace:
    if space is None:
        d = rho.shape[0]
        per = round(d ** (1.0 / N.n))
        if per ** N.n != d:
            raise ValueError(f"cannot infer equal factor dims for dimension {d} and n={N.n}; pass space")
        space = HilbertSpace((per,) * N.n)
    if space.n_factors != N.n:
        raise ValueError(f"space has {space.n_factors} factors but the neighborhoods assume {N.n}")
    return space


def _rank(rho: np.ndarray) -> int:
    return support_isometry(rho).shape[1]


def neighborhood_support(rho: np.ndarray, positions, space: HilbertSpace) -> np.ndarray:
    """Projector onto ``supp(rho_N) (x) H_rest``."""
    idx = check_index_set(positions, space.n_factors)
    local = partial_trace(rho, idx, space)
    return tensor_embed(support_projector(local), idx, space)


def is_qls_pure(rho: np.ndarray, N: NeighborhoodStructure, space: HilbertSpace | None = None) -> QlsReport:
    """Decide QLS for a pure target: the subspaces ``supp(rho_N) (x) H_rest`` must meet in one ray."""
    rho = check_density_matrix(rho)
    space = _space_for(rho, N, space)
    if _rank(rho) != 1:
        raise ValueError("target is not pure")
    psi = support_isometry(rho)[:, 0]
    projs = [neighborhood_support(rho, Nj, space) for Nj in N]
    common = range_intersection(projs)
    dims = [int(round(np.trace(P).real)) for P in projs]
    k = common.shape[1]
    witness = None
    if k > 1:
        rest = common - np.outer(psi, psi.conj() @ common)
        u, s, _ = np.linalg.svd(rest, full_matrices=False)
        w = u[:, 0]
        witness = np.outer(w, w.conj())
    contains = float(np.linalg.norm(common.conj().T @ psi)) > 1 - 1e-8
    return QlsReport(k == 1 and contains, k, dims, "pure", witness)


def parent_hamiltonian(rho: np.ndarray, N: NeighborhoodStructure, space: HilbertSpace | None = None) -> dict:
    """Terms ``H_k = I - P_k`` with ``P_k`` projecting onto ``supp(rho_{N_k}) (x) H_rest``.

    Returns the terms, ``H = sum H_k``, the joint kernel dimension, the
    ground-space dimension, and the flags ``frustration_free`` (joint
    kernel equals the ground space of ``H``) and ``unique`` (that space is
    the span of the target).
    """
    rho = check_density_matrix(rho)
    space = _space_for(rho, N, space)
    d = space.dim
    terms = [np.eye(d) - neighborhood_support(rho, Nj, space) for Nj in N]
    H = sum(terms)
    w, v = np.linalg.eigh(0.5 * (H + H.conj().T))
    tol = 1e-8
    ground = v[:, w < w[0] + tol]
    kernel = range_intersection([np.eye(d) - T for T in terms])
    ff = abs(w[0]) < tol and ground.shape[1] == kernel.shape[1]
    psi_energy = float(np.real(np.vdot(rho, H)))
    unique = ff and kernel.shape[1] == 1 and abs(psi_energy) < tol
    gap = float(w[ground.shape[1]] - w[0]) if ground.shape[1] < d else 0.0
    return {
        "terms": terms,
        "H": H,
        "ground_energy": float(w[0]),
        "target_energy": psi_energy,
        "kernel_dim": int(kernel.shape[1]),
        "ground_dim": int(ground.shape[1]),
        "gap": gap,
        "frustration_free": bool(ff),
        "unique": bool(unique),
    }


# --------------------------------------------------------------------------
# mixed targets

@dataclass
class NeighborhoodSet:
    """Minimal fixed-point set on one neighborhood and its extension ``F (x) B(H_rest)``."""

    positions: tuple
    local: DistortedAlgebra
    extended: OperatorSubspace
    local_space: HilbertSpace


def _extend(local_basis: np.ndarray, positions, space: HilbertSpace) -> OperatorSubspace:
    idx = check_index_set(positions, space.n_factors)
    rest = [a for a in range(space.n_factors) if a not in idx]
    dr = math.prod(space.factor_dims[a] for a in rest)
    gens = []
    for A in local_basis:
        for i in range(dr):
            for j in range(dr):
                E = np.zeros((dr, dr), dtype=complex)
                E[i, j] = 1.0
                gens.append(permute_factors(np.kron(A, E), list(idx) + rest, space))
    return hermitian_span(np.array(gens), space)


def minimal_neighborhood_sets(rho: np.ndarray, N: NeighborhoodStructure, space: HilbertSpace | None = None,
                              support: bool = False) -> list[NeighborhoodSet]:
    """``F_j = F_{rho_Nj}(Sigma_Nj(rho)) (x) B(H_rest)`` for every neighborhood.

    Without ``support`` the target must be full rank.
    """
    rho = check_density_matrix(rho)
    space = _space_for(rho, N, space)
    if not support:
        lo = float(np.linalg.eigvalsh(rho)[0])
        if lo <= get_tolerances().floor:
            raise NotPositiveDefiniteError(f"target is not full rank (min eigenvalue {lo:.3e})")
    out = []
    for j, Nj in enumerate(N):
        local_space = space.subsystem(Nj)
        if N.is_full(j):
            rho_N = rho
            W = np.array([rho])
        else:
            rho_N = partial_trace(rho, Nj, space)
            W = schmidt_span(rho, Nj, space).basis
        F = minimal_fixed_point_set(rho_N, W, local_space, support=support)
        ext = F.subspace if N.is_full(j) else _extend(F.subspace.basis, Nj, space)
        out.append(NeighborhoodSet(Nj, F, ext, local_space))
    return out


def _state_witness(rho: np.ndarray, common: OperatorSubspace) -> np.ndarray | None:
    """A state in ``common`` other than ``rho``, built as ``rho + t X`` with ``X`` orthogonal to ``rho``."""
    r = rho / np.linalg.norm(rho)
    cands = [X - np.vdot(r, X) * r for X in common.basis]
    X = max(cands, key=np.linalg.norm)
    if np.linalg.norm(X) < 1e-8:
        return None
    X = 0.5 * (X + X.conj().T)
    X /= np.linalg.norm(X, 2)
    U = support_isometry(rho)
    lo = float(np.linalg.eigvalsh(U.conj().T @ rho @ U)[0])
    sigma = rho + 0.5 * lo * X
    return sigma / np.trace(sigma).real


def is_qls_full_rank(rho: np.ndarray, N: NeighborhoodStructure, space: HilbertSpace | None = None,
                     sets: list[NeighborhoodSet] | None = None) -> QlsReport:
    """Decide QLS for a full-rank target: the sets ``F_j`` must intersect in ``span(rho)``."""
    rho = check_density_matrix(rho)
    space = _space_for(rho, N, space)
    sets = minimal_neighborhood_sets(rho, N, space) if sets is None else sets
    common = intersect_all([s.extended for s in sets], tol=1e-7)
    k = common.dim
    decision = k == 1 and common.contains(rho, 1e-7)
    witness = None if decision else _state_witness(rho, common)
    return QlsReport(decision, k, [d * d for d in [space.dim] * len(sets)], "full_rank", witness,
                     [s.local.dim for s in sets], {"extended_dims": [s.extended.dim for s in sets]})


def _cycle_certificate(maps: Sequence[Channel], tol: float = 1e-9) -> tuple[int, float]:
    """Number of unit-modulus eigenvalues of one sweep and its spectral gap."""
    from .engine import cycle_channel
    lam = np.sort(np.abs(np.linalg.eigvals(cycle_channel(maps).superoperator)))[::-1]
    peripheral = int(np.sum(lam > 1 - tol))
    gap = float(1 - lam[peripheral]) if peripheral < len(lam) else 0.0
    return peripheral, gap


def is_qls_general(rho: np.ndarray, N: NeighborhoodStructure, space: HilbertSpace | None = None,
                   sets: list[NeighborhoodSet] | None = None) -> QlsReport:
    """QLS test for targets that are neither pure nor full rank.

    The sets ``F_j (x) B(H_rest)`` are built on the supports of the reduced
    states and must intersect in ``span(rho)``. Convergence of the composed
    neighborhood maps is then certified either by the support condition
    (``supp(rho_N) (x) H_rest`` intersect exactly in ``supp(rho)``) or,
    failing that, by the spectrum of one cyclic sweep: ``rho`` must span its
    only unit-modulus eigenspace. Both are sufficient conditions.
    """
    rho = check_density_matrix(rho)
    space = _space_for(rho, N, space)
    sets = minimal_neighborhood_sets(rho, N, space, support=True) if sets is None else sets
    common = intersect_all([s.extended for s in sets], tol=1e-7)
    projs = [neighborhood_support(rho, Nj, space) for Nj in N]
    sup = range_intersection(projs)
    r = _rank(rho)
    supp_ok = bool(sup.shape[1] == r and np.allclose(sup @ sup.conj().T, support_projector(rho), atol=1e-8))
    k = common.dim
    algebraic = bool(k == 1 and common.contains(rho, 1e-7))
    details = {"support_intersection_dim": int(sup.shape[1]), "target_rank": r, "supports_match": supp_ok}
    decision = algebraic and supp_ok
    if algebraic and not supp_ok:
        maps = [_embed(composed_projection(s.local), s.positions, space, s.extended) for s in sets]
        peripheral, gap = _cycle_certificate(maps)
        details.update({"cycle_peripheral_dim": peripheral, "cycle_spectral_gap": gap})
        decision = peripheral == 1 and gap > 1e-9
    witness = None if k == 1 else _state_witness(rho, common)
    return QlsReport(decision, k, [int(round(np.trace(P).real)) for P in projs], "general", witness,
                     [s.local.dim for s in sets], details)


def check_qls(rho: np.ndarray, N: NeighborhoodStructure, space: HilbertSpace | None = None) -> QlsReport:
    """Dispatch on the rank of the target."""
    rho = check_density_matrix(rho)
    space = _space_for(rho, N, space)
    r = _rank(rho)
    if r == 1:
        return is_qls_pure(rho, N, space)
    if r == space.dim and np.linalg.eigvalsh(rho)[0] > get_tolerances().floor:
        return is_qls_full_rank(rho, N, space)
    return is_qls_general(rho, N, space)


def stabilizing_maps(rho: np.ndarray, N: NeighborhoodStructure, space: HilbertSpace | None = None,
                     override: bool = False, report: QlsReport | None = None) -> list[ProjectionChannel]:
    """Neighborhood CPTP projections that leave ``rho`` invariant.

    Pure targets get resets onto ``supp(rho_N)``; full-rank targets get
    block projections onto ``F_N``; other targets get the composed maps.
    Raises :class:`NotQLSError` when the QLS check fails, unless ``override``.
    """
    rho = check_density_matrix(rho)
    space = _space_for(rho, N, space)
    report = check_qls(rho, N, space) if report is None else report
    if not report.decision and not override:
        raise NotQLSError(f"target is not QLS for these neighborhoods (intersection dim {report.intersection_dim})")
    maps = []
    if report.kind == "pure":
        for j, Nj in enumerate(N):
            local = partial_trace(rho, Nj, space)
            E = reset_map(support_projector(local), space.subsystem(Nj), label=f"reset{list(Nj)}")
            maps.append(_embed(E, Nj, space, neighborhood_support(rho, Nj, space)))
        return maps
    support = report.kind != "full_rank"
    sets = minimal_neighborhood_sets(rho, N, space, support=support)
    for s in sets:
        E = composed_projection(s.local) if support else direct_projection(s.local)
        maps.append(_embed(E, s.positions, space, s.extended))
    return maps


def _embed(E: ProjectionChannel, positions, space: HilbertSpace, target) -> ProjectionChannel:
    G = embed_neighborhood(E, positions, space)
    return ProjectionChannel.wrap(G, target, E.method, f"{E.label}@{list(positions)}")


def invariance_residual(maps: Sequence[Channel], rho: np.ndarray) -> float:
    """Largest ``||E_j(rho) - rho||_1``."""
    return max(trace_distance(apply(E, rho), rho) for E in maps)

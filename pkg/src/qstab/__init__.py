"""Alternating CPTP projections and quasi-local stabilization of multipartite quantum states."""

__version__ = "0.1.0"

from .channels import Channel, apply, compose, damped_power, dual, embed_neighborhood, validate
from .config import Tolerances, get_tolerances, set_tolerances, tolerances
from .engine import Schedule, Trajectory, contraction_coefficient, lyapunov, pure_contraction, randomized_trials, run
from .fixpoint import (
    BlockDecomposition,
    DistortedAlgebra,
    block_decompose,
    distorted_closure,
    fixed_point_space,
    max_rank_fixed_state,
    minimal_fixed_point_set,
    modular_map,
    schmidt_span,
)
from .opcore import (
    HilbertSpace,
    InnerMode,
    OperatorSubspace,
    inner,
    orthonormalize,
    partial_trace,
    subspace_angle,
    subspace_intersect,
    tensor_embed,
    trace_distance,
    trace_distance_to_set,
)
from .projector import (
    ProjectionChannel,
    check_self_adjoint,
    composed_projection,
    cptp_projection,
    direct_projection,
    reset_map,
)
from .qls import (
    NeighborhoodStructure,
    QlsReport,
    check_qls,
    is_qls_full_rank,
    is_qls_pure,
    minimal_neighborhood_sets,
    neighborhood_support,
    parent_hamiltonian,
    stabilizing_maps,
)

__all__ = [
    "BlockDecomposition", "Channel", "DistortedAlgebra", "HilbertSpace", "InnerMode", "NeighborhoodStructure",
    "OperatorSubspace", "ProjectionChannel", "QlsReport", "Schedule", "Tolerances", "Trajectory", "apply",
    "block_decompose", "check_qls", "check_self_adjoint", "compose", "composed_projection",
    "contraction_coefficient", "cptp_projection", "damped_power", "direct_projection", "distorted_closure",
    "dual", "embed_neighborhood", "fixed_point_space", "get_tolerances", "inner", "is_qls_full_rank",
    "is_qls_pure", "lyapunov", "max_rank_fixed_state", "minimal_fixed_point_set", "minimal_neighborhood_sets",
    "modular_map", "neighborhood_support", "orthonormalize", "parent_hamiltonian", "partial_trace",
    "pure_contraction", "randomized_trials", "reset_map", "run", "schmidt_span", "set_tolerances",
    "stabilizing_maps", "subspace_angle", "subspace_intersect", "tensor_embed", "tolerances", "trace_distance",
    "trace_distance_to_set", "validate",
]

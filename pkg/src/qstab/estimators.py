"""scikit-learn style wrappers around the stabilization pipeline.

``QuasiLocalStabilizer`` is fitted on a target state and transforms a
batch of initial states into the states reached by the cyclic dynamics.
``CPTPProjector`` is fitted on a channel and projects states onto its fixed
set.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .channels import Channel, apply
from .engine import Schedule, run
from .opcore import HilbertSpace, trace_distance
from .projector import cptp_projection
from .qls import NeighborhoodStructure, check_qls, stabilizing_maps
from .validation import check_density_matrix


def check_state_batch(X, dim: int | None = None) -> np.ndarray:
    """Return ``X`` as an ``(m, d, d)`` complex array; a single matrix becomes a batch of one."""
    X = np.asarray(X, dtype=complex)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[1] != X.shape[2]:
        raise ValueError(f"expected states of shape (m, d, d), got {X.shape}")
    if dim is not None and X.shape[1] != dim:
        raise ValueError(f"states have dimension {X.shape[1]}, the estimator was fitted on {dim}")
    for k, rho in enumerate(X):
        check_density_matrix(rho, name=f"X[{k}]")
    return X


class QuasiLocalStabilizer(TransformerMixin, BaseEstimator):
    """Synthesize neighborhood maps for a target state and run them.

    Parameters
    ----------
    neighborhoods : list of index lists (0-based)
    factor_dims : tensor factor dimensions; defaults to qubits
    max_steps, dist_tol : stopping rule for each trajectory
    override : build maps even when the QLS check fails
    allow_full : accept a neighborhood covering the whole system
    """

    def __init__(self, neighborhoods=None, factor_dims=None, max_steps: int = 2000, dist_tol: float = 1e-10,
                 override: bool = False, allow_full: bool = False):
        self.neighborhoods = neighborhoods
        self.factor_dims = factor_dims
        self.max_steps = max_steps
        self.dist_tol = dist_tol
        self.override = override
        self.allow_full = allow_full

    def fit(self, X, y=None):
        rho = check_density_matrix(np.asarray(X))
        d = rho.shape[0]
        if self.neighborhoods is None:
            raise ValueError("neighborhoods must be given")
        dims = self.factor_dims
        if dims is None:
            n = int(round(np.log2(d)))
            if 2 ** n != d:
                raise ValueError("factor_dims is required for non-qubit systems")
            dims = (2,) * n
        self.space_ = HilbertSpace(tuple(dims))
        self.structure_ = NeighborhoodStructure(self.space_.n_factors, tuple(map(tuple, self.neighborhoods)),
                                                self.allow_full)
        self.target_ = rho
        self.report_ = check_qls(rho, self.structure_, self.space_)
        self.maps_ = stabilizing_maps(rho, self.structure_, self.space_, override=self.override,
                                      report=self.report_)
        self.n_features_in_ = d
        return self

    def transform(self, X):
        check_is_fitted(self, "maps_")
        X = check_state_batch(X, self.n_features_in_)
        sched = Schedule.uniform_cyclic(len(self.maps_))
        out = np.empty_like(X)
        self.trajectories_ = []
        for k, rho in enumerate(X):
            tr = run(self.maps_, sched, rho, target=self.target_, max_steps=self.max_steps, dist_tol=self.dist_tol,
                     thin=0)
            self.trajectories_.append(tr)
            out[k] = tr.final_state
        return out

    def score(self, X, y=None) -> float:
        """Negative mean trace distance to the target after the dynamics."""
        final = self.transform(X)
        return -float(np.mean([trace_distance(r, self.target_) for r in final]))


class CPTPProjector(TransformerMixin, BaseEstimator):
    """Projection onto the fixed set of a channel, by damped iteration."""

    def __init__(self, lam: float = 0.5):
        self.lam = lam

    def fit(self, X, y=None):
        E = X if isinstance(X, Channel) else Channel(np.asarray(X, dtype=complex))
        self.projection_ = cptp_projection(E, self.lam)
        self.n_features_in_ = E.dim
        return self

    def transform(self, X):
        check_is_fitted(self, "projection_")
        X = check_state_batch(X, self.n_features_in_)
        return np.array([apply(self.projection_, rho) for rho in X])

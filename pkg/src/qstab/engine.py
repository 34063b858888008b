"""Alternating-projection dynamics: schedules, trajectories and convergence diagnostics."""
from __future__ import annotations

import csv
import enum
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channels import Channel, apply, compose, dual
from .exceptions import DimensionError
from .opcore import (
    OperatorSubspace,
    intersect_all,
    subspace_angle,
    subspace_intersect,
    support_isometry,
    trace_distance,
)
from .sampling import haar_pure_state, trial_rng
from .validation import check_probabilities

MONOTONE_TOL = 1e-12


class ScheduleKind(str, enum.Enum):
    CYCLIC = "CYCLIC"
    RANDOM = "RANDOM"


@dataclass(frozen=True)
class Schedule:
    """Which map acts at each step.

    ``CYCLIC`` repeats ``order``. ``RANDOM`` draws index ``j`` with
    probability ``probs[j]`` (or ``probs(t)[j]`` when ``probs`` is callable),
    every entry at least ``floor > 0``.
    """

    kind: ScheduleKind
    order: tuple = ()
    probs: object = None
    floor: float = 0.0
    seed: int = 0

    @classmethod
    def cyclic(cls, order: Sequence[int]) -> "Schedule":
        order = tuple(int(j) for j in order)
        if not order:
            raise ValueError("cyclic order must be nonempty")
        return cls(ScheduleKind.CYCLIC, order=order)

    @classmethod
    def uniform_cyclic(cls, n_maps: int) -> "Schedule":
        return cls.cyclic(range(n_maps))

    @classmethod
    def random(cls, probs, floor: float | None = None, seed: int = 0) -> "Schedule":
        if not callable(probs):
            probs = tuple(float(q) for q in probs)
            floor = min(probs) if floor is None else floor
            check_probabilities(probs, floor)
        if floor is None or floor <= 0:
            raise ValueError("a random schedule needs a positive probability floor")
        return cls(ScheduleKind.RANDOM, probs=probs, floor=float(floor), seed=int(seed))

    @classmethod
    def uniform_random(cls, n_maps: int, seed: int = 0) -> "Schedule":
        return cls.random([1.0 / n_maps] * n_maps, seed=seed)

    @property
    def cycle_length(self) -> int:
        return len(self.order) if self.kind is ScheduleKind.CYCLIC else 1

    def validate(self, n_maps: int) -> None:
        if self.kind is ScheduleKind.CYCLIC:
            bad = [j for j in self.order if not 0 <= j < n_maps]
            if bad:
                raise DimensionError(f"schedule refers to maps {bad}, only {n_maps} given")
            missing = sorted(set(range(n_maps)) - set(self.order))
            if missing:
                raise ValueError(f"cyclic order never applies maps {missing}")
        elif not callable(self.probs) and len(self.probs) != n_maps:
            raise DimensionError(f"{len(self.probs)} probabilities for {n_maps} maps")

    def indices(self, trial: int = 0):
        """Infinite iterator of map indices; random draws use the stream ``(seed, trial)``."""
        if self.kind is ScheduleKind.CYCLIC:
            t = 0
            while True:
                yield self.order[t % len(self.order)]
                t += 1
        rng = trial_rng(self.seed, trial)
        if not callable(self.probs):
            # batched draws consume the same uniform stream as single ones
            q = check_probabilities(self.probs, self.floor)
            while True:
                yield from rng.choice(len(q), size=256, p=q).tolist()
        t = 0
        while True:
            q = check_probabilities(self.probs(t), self.floor)
            yield int(rng.choice(len(q), p=q))
            t += 1


def lyapunov(rho: np.ndarray, P: np.ndarray) -> float:
    """``V = 1 - Tr(P rho)``: zero exactly when ``rho`` lives inside ``range(P)``."""
    return float(1.0 - np.real(np.vdot(P, rho)))


@dataclass
class Trajectory:
    """Per-step metrics of one run plus states thinned every ``thin`` steps."""

    steps: list = field(default_factory=list)
    map_index: list = field(default_factory=list)
    trace_dist: list = field(default_factory=list)
    lyapunov: list = field(default_factory=list)
    states: dict = field(default_factory=dict)
    final_state: np.ndarray | None = None
    converged: bool = False
    initial_dist: float = float("nan")
    c_estimate: float | None = None

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    @property
    def final_dist(self) -> float:
        return self.trace_dist[-1] if self.trace_dist else self.initial_dist

    def monotonicity_violations(self, tol: float = MONOTONE_TOL) -> list[int]:
        """Steps at which the distance to the target grew by more than ``tol``."""
        d = [self.initial_dist] + list(self.trace_dist)
        return [self.steps[k] for k in range(len(self.steps)) if d[k + 1] > d[k] + tol]

    def max_increase(self) -> float:
        d = np.array([self.initial_dist] + list(self.trace_dist))
        return float(np.max(np.diff(d), initial=-np.inf)) if len(d) > 1 else 0.0

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "map_index", "trace_dist", "lyapunov"])
        for row in zip(self.steps, self.map_index, self.trace_dist, self.lyapunov):
            w.writerow([row[0], row[1], _fmt(row[2]), _fmt(row[3])])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text

    def summary(self) -> dict:
        return {
            "converged": bool(self.converged),
            "steps": self.n_steps,
            "final_dist": float(self.final_dist),
            "c_estimate": None if self.c_estimate is None else float(self.c_estimate),
        }


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return format(float(x), ".17g")


def _distance_fn(target):
    if target is None:
        return lambda rho: float("nan")
    if callable(target):
        return lambda rho: trace_distance(rho, target(rho))
    target = np.asarray(target, dtype=complex)
    return lambda rho: trace_distance(rho, target)


def run(maps: Sequence[Channel], schedule: Schedule, rho0: np.ndarray, target=None,
        max_steps: int = 1000, dist_tol: float | None = None, lyapunov_projector: np.ndarray | None = None,
        thin: int = 10, trial: int = 0) -> Trajectory:
    """Iterate ``rho_{t+1} = E_{j(t)}(rho_t)``.

    ``target`` is a state or a map onto the target set (e.g. the projection
    onto the intersection); distances are trace norms to it. The run stops
    once the distance drops below ``dist_tol`` or after ``max_steps``.
    """
    if not maps:
        raise ValueError("at least one map is required")
    d = maps[0].dim
    if any(E.dim != d for E in maps):
        raise DimensionError("maps act on different spaces")
    schedule.validate(len(maps))
    dist = _distance_fn(target)
    rho = np.asarray(rho0, dtype=complex)
    traj = Trajectory(initial_dist=dist(rho))
    traj.states[0] = rho
    if dist_tol is not None and traj.initial_dist < dist_tol:
        traj.converged = True
        traj.final_state = rho
        return traj
    idx = schedule.indices(trial)
    for t in range(1, max_steps + 1):
        j = next(idx)
        rho = apply(maps[j], rho)
        dt = dist(rho)
        traj.steps.append(t)
        traj.map_index.append(j)
        traj.trace_dist.append(dt)
        traj.lyapunov.append(lyapunov(rho, lyapunov_projector) if lyapunov_projector is not None else float("nan"))
        if thin and t % thin == 0:
            traj.states[t] = rho
        if dist_tol is not None and dt < dist_tol:
            traj.converged = True
            break
    traj.states[traj.steps[-1] if traj.steps else 0] = rho
    traj.final_state = rho
    return traj


def cycle_channel(maps: Sequence[Channel], order: Sequence[int] | None = None) -> Channel:
    """One sweep ``E_{order[-1]} o ... o E_{order[0]}``."""
    order = range(len(maps)) if order is None else order
    out = None
    for j in order:
        out = maps[j] if out is None else compose(maps[j], out)
    return out


# --------------------------------------------------------------------------
# subspace rates

def contraction_coefficient(subspaces: Sequence[OperatorSubspace]) -> tuple[float, list[float]]:
    """``c = 1 - prod_i sin^2 theta_i`` with ``theta_i`` the angle between ``M_i`` and ``M_{i+1} & ... & M_r``."""
    r = len(subspaces)
    if r < 2:
        return 0.0, []
    angles = []
    for i in range(r - 1):
        tail = intersect_all(subspaces[i + 1:])
        angles.append(subspace_angle(subspaces[i], tail)[1])
    c = 1.0 - math.prod(math.sin(a) ** 2 for a in angles)
    return max(0.0, c), angles


def cycle_errors(subspaces: Sequence[OperatorSubspace], x: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Errors ``||(P_r...P_1)^k x - P_cap x||`` for ``k = 1..n`` and the bounds ``c^{k/2} ||x - P_cap x||``.

    ``x`` is given in the whitened coordinates shared by the subspaces.
    """
    Ps = [S.projector() for S in subspaces]
    Pc = intersect_all(subspaces).projector()
    c, _ = contraction_coefficient(subspaces)
    x = np.asarray(x, dtype=complex)
    lim = Pc @ x
    x0 = np.linalg.norm(x - lim)
    errs, bounds = [], []
    y = x
    for k in range(1, n + 1):
        for P in Ps:
            y = P @ y
        errs.append(np.linalg.norm(y - lim))
        bounds.append(c ** (k / 2) * x0)
    return np.array(errs), np.array(bounds)


def two_subspace_rate(M1: OperatorSubspace, M2: OperatorSubspace, n: int) -> tuple[float, float]:
    """``(||(P_2 P_1)^n - P_{M1&M2}||, c(M1, M2)^{2n-1})``."""
    P1, P2 = M1.projector(), M2.projector()
    Pc = subspace_intersect(M1, M2).projector()
    lhs = float(np.linalg.norm(np.linalg.matrix_power(P2 @ P1, n) - Pc, 2))
    c, _ = subspace_angle(M1, M2)
    return lhs, c ** (2 * n - 1)


# --------------------------------------------------------------------------
# pure-state contraction

@dataclass(frozen=True)
class ContractionEstimate:
    estimate: float
    exact: float
    n_samples: int
    refine_steps: int
    seed: int


def pure_contraction(maps: Sequence[Channel], psi: np.ndarray, n_samples: int = 10_000,
                     refine_steps: int = 50, seed: int = 0, order: Sequence[int] | None = None) -> ContractionEstimate:
    """Worst one-cycle change of ``V = 1 - <psi|tau|psi>`` over states orthogonal to ``psi``.

    ``Delta V(tau) = -Tr(E^dag(|psi><psi|) tau)`` is linear in ``tau``, so it
    is maximized on pure states. The estimate samples Haar vectors in the
    orthogonal complement and refines the best one by projected gradient
    ascent on the unit sphere. ``exact`` is the top eigenvalue of
    ``-Q E^dag(|psi><psi|) Q`` on that complement, reported alongside.
    """
    rho = np.asarray(psi, dtype=complex)
    if rho.ndim == 1:
        rho = np.outer(rho, rho.conj())
    d = rho.shape[0]
    E = cycle_channel(maps, order)
    G = apply(dual(E), rho)
    Q = support_isometry(np.eye(d) - rho, 0.5)
    if Q.shape[1] == 0:
        return ContractionEstimate(0.0, 0.0, 0, 0, seed)
    H = -(Q.conj().T @ G @ Q)
    H = 0.5 * (H + H.conj().T)
    exact = float(np.linalg.eigvalsh(H)[-1])
    rng = trial_rng(seed)
    k = Q.shape[1]
    V = rng.standard_normal((k, n_samples)) + 1j * rng.standard_normal((k, n_samples))
    V /= np.linalg.norm(V, axis=0)
    vals = np.real(np.einsum("ia,ij,ja->a", V.conj(), H, V))
    best = int(np.argmax(vals))
    v, val = V[:, best], float(vals[best])
    # ascend along the shifted (positive semidefinite) operator so a step never cancels v
    shift = float(np.linalg.norm(H, 2))
    step = 1.0 / max(1e-12, shift)
    for _ in range(refine_steps):
        w = v + step * (H @ v + shift * v)
        w /= np.linalg.norm(w)
        wval = float(np.real(np.vdot(w, H @ w)))
        if wval < val:
            break
        v, val = w, wval
    return ContractionEstimate(val, exact, n_samples, refine_steps, seed)


# --------------------------------------------------------------------------
# randomized trials

@dataclass
class TrialsReport:
    checkpoints: list
    fraction_below: list
    mean_lyapunov: np.ndarray
    monotone_lyapunov: list
    max_dist_increase: list
    mean_states: dict
    trials: int
    gamma: float
    seed: int

    def fraction_at(self, step: int) -> float:
        return self.fraction_below[self.checkpoints.index(step)]

    @property
    def all_monotone(self) -> bool:
        return all(self.monotone_lyapunov)

    def summary(self) -> dict:
        return {
            "trials": self.trials,
            "gamma": self.gamma,
            "seed": self.seed,
            "checkpoints": [int(c) for c in self.checkpoints],
            "fraction_below_gamma": [float(f) for f in self.fraction_below],
            "all_monotone": self.all_monotone,
            "max_dist_increase": float(max(self.max_dist_increase)),
        }


def _one_trial(args):
    (supers, d, schedule, trial, steps, P, target, checkpoints, rho0, keep_states) = args
    rng = trial_rng(schedule.seed, 1_000_003 + trial)
    rho = haar_pure_state(d, rng) if rho0 is None else (rho0(rng) if callable(rho0) else np.asarray(rho0))
    idx = schedule.indices(trial)
    V = np.empty(steps + 1)
    V[0] = lyapunov(rho, P)
    dists = np.empty(steps + 1)
    dists[0] = trace_distance(rho, target) if target is not None else np.nan
    states = {}
    cp = set(checkpoints)
    vec = rho.reshape(-1, order="F")
    for t in range(1, steps + 1):
        vec = supers[next(idx)] @ vec
        rho = vec.reshape(d, d, order="F")
        V[t] = lyapunov(rho, P)
        if target is not None:
            dists[t] = np.abs(np.linalg.eigvalsh(rho - target)).sum()
        if keep_states and t in cp:
            states[t] = rho.copy()
    return V, dists, states


def randomized_trials(maps: Sequence[Channel], schedule: Schedule, target: np.ndarray, gamma: float = 1e-6,
                      trials: int = 200, steps: int = 500, checkpoints: Sequence[int] | None = None,
                      rho0=None, jobs: int = 1, keep_states: bool = False) -> TrialsReport:
    """Run independent seeded trajectories under a random schedule.

    ``target`` is the target state; ``V`` uses the projector onto its
    support. ``rho0`` is a state, a callable ``rng -> state``, or ``None``
    for Haar-random pure initial states. Trial ``k`` draws its schedule
    and its initial state from streams keyed by ``(seed, k)``, so results
    do not depend on ``jobs``.
    """
    if schedule.kind is not ScheduleKind.RANDOM:
        raise ValueError("randomized_trials needs a RANDOM schedule")
    schedule.validate(len(maps))
    d = maps[0].dim
    target = np.asarray(target, dtype=complex)
    U = support_isometry(target)
    P = U @ U.conj().T
    checkpoints = sorted(set(checkpoints or [1, 10, 50, 100, 200, steps]) & set(range(1, steps + 1)))
    supers = [E.superoperator for E in maps]
    args = [(supers, d, schedule, k, steps, P, target, checkpoints, rho0, keep_states) for k in range(trials)]
    if jobs > 1 and not callable(rho0) and not callable(schedule.probs):
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_one_trial, args, chunksize=max(1, trials // (4 * jobs))))
    else:
        results = [_one_trial(a) for a in args]
    Vs = np.array([r[0] for r in results])
    Ds = np.array([r[1] for r in results])
    frac = [float(np.mean(Vs[:, c] < gamma)) for c in checkpoints]
    monotone = [bool(np.all(np.diff(v) <= MONOTONE_TOL)) for v in Vs]
    incr = [float(np.max(np.diff(dd))) if target is not None else float("nan") for dd in Ds]
    mean_states = {}
    if keep_states:
        for c in checkpoints:
            mean_states[c] = np.mean([r[2][c] for r in results], axis=0)
    return TrialsReport(checkpoints, frac, Vs.mean(axis=0), monotone, incr, mean_states, trials, gamma,
                        schedule.seed)

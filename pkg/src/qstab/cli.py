"""Scenario runner: ``qstab run scenario.json`` and ``qstab explain scenario.json``.

Exit codes: 0 when the task completed, 2 when the scenario is invalid, 3 when
a mandatory distance tolerance was not reached.
"""
from __future__ import annotations

import argparse
import datetime
import logging
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .channels import validate
from .engine import (
    Schedule,
    ScheduleKind,
    contraction_coefficient,
    cycle_channel,
    pure_contraction,
    randomized_trials,
    run,
)
from .exceptions import ConvergenceError, DimensionError, NotQLSError, QstabError, ScenarioError
from .opcore import HilbertSpace, InnerMode, psd_power, subspace_angle, support_projector
from .projector import ProjectionChannel
from .qls import (
    NeighborhoodStructure,
    check_qls,
    enlarged_neighborhoods,
    minimal_neighborhood_sets,
    neighborhood_support,
    parent_hamiltonian,
    stabilizing_maps,
)
from .sampling import haar_pure_state, trial_rng
from .serialization import channel_from_dict, load_json, matrix_from_json, write_json
from .states import make_state
from .validation import check_density_matrix

log = logging.getLogger("qstab")

TASKS = ("QLS_CHECK", "STABILIZE_CYCLIC", "STABILIZE_RANDOM", "RATE_ANALYSIS")
SCHEMA_VERSION = "1.0"
EXIT_OK, EXIT_INVALID, EXIT_NOT_CONVERGED = 0, 2, 3


@dataclass
class Scenario:
    name: str
    base_dir: Path
    space: HilbertSpace
    target: np.ndarray
    target_spec: dict
    task: str
    neighborhoods: NeighborhoodStructure | None
    base_neighborhoods: NeighborhoodStructure | None
    maps: list | None
    schedule: dict
    stop: dict
    initial: dict
    trials: dict
    seed: int
    override: bool
    outputs: dict = field(default_factory=dict)


def _require(data: dict, key: str, where: str = "scenario"):
    if key not in data:
        raise ScenarioError(f"{where}: missing required field {key!r}")
    return data[key]


def _load_state(spec, base_dir: Path, space: HilbertSpace, where: str) -> np.ndarray:
    if not isinstance(spec, dict):
        raise ScenarioError(f"{where}: expected an object")
    if "kind" in spec:
        try:
            rho, sp = make_state(spec["kind"], spec.get("params", {}))
        except (KeyError, ValueError) as exc:
            raise ScenarioError(f"{where}: {exc}") from exc
        if sp.dim != space.dim:
            raise ScenarioError(f"{where}: state has dimension {sp.dim}, system has {space.dim}")
    elif "matrix" in spec:
        rho = matrix_from_json(spec["matrix"], where)
    elif "file" in spec:
        path = base_dir / spec["file"]
        if not path.exists():
            raise ScenarioError(f"{where}: file {str(path)!r} does not exist")
        if path.suffix == ".npy":
            rho = np.load(path).astype(complex)
        else:
            data = load_json(path)
            rho = matrix_from_json(data["matrix"] if isinstance(data, dict) else data, str(path))
    else:
        raise ScenarioError(f"{where}: give one of 'kind', 'matrix' or 'file'")
    try:
        return check_density_matrix(rho, space.dim, where)
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc


def _load_neighborhoods(spec, n: int, allow_full: bool):
    if isinstance(spec, list):
        if not spec:
            raise ScenarioError("neighborhoods: the list is empty")
        return NeighborhoodStructure(n, tuple(tuple(N) for N in spec), allow_full), None
    if isinstance(spec, dict):
        base_list = _require(spec, "base", "neighborhoods")
        if not base_list:
            raise ScenarioError("neighborhoods.base: the list is empty")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            base = NeighborhoodStructure(n, tuple(tuple(N) for N in base_list), True)
        seeds = spec.get("seeds", "base")
        seed_sets = [[a] for a in range(n)] if seeds == "sites" else None
        if spec.get("enlarge", True):
            return enlarged_neighborhoods(base, seed_sets, allow_full=allow_full), base
        return NeighborhoodStructure(n, base.neighborhoods, allow_full), None
    raise ScenarioError("neighborhoods: expected a list of index lists or an object with 'base'")


def load_scenario(path, seed: int | None = None, out: str | None = None) -> Scenario:
    """Parse and validate a scenario file; every problem raises :class:`ScenarioError`."""
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"scenario file {str(path)!r} does not exist")
    data = load_json(path)
    if not isinstance(data, dict):
        raise ScenarioError("scenario: top level must be an object")
    base_dir = path.parent
    task = str(_require(data, "task")).upper()
    if task not in TASKS:
        raise ScenarioError(f"task must be one of {TASKS}, got {task!r}")
    try:
        system = _require(data, "system")
        space = HilbertSpace(tuple(int(d) for d in _require(system, "factor_dims", "system")))
        target = _load_state(_require(data, "target"), base_dir, space, "target")
        allow_full = bool(data.get("allow_full_neighborhoods", False))
        nbh, base = (None, None)
        if "neighborhoods" in data:
            nbh, base = _load_neighborhoods(data["neighborhoods"], space.n_factors, allow_full)
        maps = None
        if "maps" in data:
            raw = data["maps"]
            if not isinstance(raw, list) or not raw:
                raise ScenarioError("maps: expected a nonempty list of channels")
            maps = []
            for i, m in enumerate(raw):
                if isinstance(m, str):
                    m = load_json(base_dir / m)
                E = channel_from_dict(m)
                if E.dim != space.dim:
                    raise ScenarioError(f"maps[{i}]: dimension {E.dim} does not match the system ({space.dim})")
                maps.append(E)
        if nbh is None and maps is None and task != "QLS_CHECK":
            raise ScenarioError("either 'neighborhoods' or 'maps' is required")
        if nbh is None and task == "QLS_CHECK":
            raise ScenarioError("QLS_CHECK needs 'neighborhoods'")
    except (DimensionError, NotImplementedError) as exc:
        raise ScenarioError(str(exc)) from exc
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(str(exc)) from exc
    sc_seed = int(data.get("seed", 0)) if seed is None else int(seed)
    stop = {"max_steps": 1000, "dist_tol": 1e-8, "mandatory": False}
    stop.update(data.get("stop", {}))
    if int(stop["max_steps"]) < 1:
        raise ScenarioError("stop.max_steps must be positive")
    initial = dict(data.get("initial", {}))
    if not {"kind", "matrix", "file"} & set(initial):
        initial = {"kind": "haar", "count": 20, **initial}
    trials = {"trials": 200, "steps": 500, "gamma": 1e-6, "min_fraction": 0.99}
    trials.update(data.get("trials", {}))
    outputs = {"dir": ".", "summary": "summary.json", "trajectory": "trajectory.csv"}
    outputs.update(data.get("outputs", {}))
    outputs["dir"] = str(Path(out)) if out is not None else str(base_dir / outputs["dir"])
    return Scenario(
        name=str(data.get("name", path.stem)),
        base_dir=base_dir,
        space=space,
        target=target,
        target_spec=data["target"] if "kind" in data["target"] else {"kind": "explicit"},
        task=task,
        neighborhoods=nbh,
        base_neighborhoods=base,
        maps=maps,
        schedule=dict(data.get("schedule", {})),
        stop=stop,
        initial=initial,
        trials=trials,
        seed=sc_seed,
        override=bool(data.get("override", False)),
        outputs=outputs,
    )


# --------------------------------------------------------------------------
# task execution

def _build_maps(sc: Scenario, report=None) -> list:
    if sc.maps is not None:
        return sc.maps
    return stabilizing_maps(sc.target, sc.neighborhoods, sc.space, override=sc.override, report=report)


def _map_table(maps) -> list:
    rows = []
    for j, E in enumerate(maps):
        r = validate(E)
        row = {"index": j, "label": E.label, "n_kraus": int(len(E.kraus)), "tp_residual": r.tp_residual,
               "min_choi_eigenvalue": r.min_choi_eigenvalue, "idempotency_residual": r.idempotency_residual}
        if isinstance(E, ProjectionChannel):
            row.update(E.metadata())
        rows.append(row)
    return rows


def _schedule(sc: Scenario, n_maps: int, kind: ScheduleKind) -> Schedule:
    spec = sc.schedule
    if kind is ScheduleKind.CYCLIC:
        return Schedule.cyclic(spec.get("order", list(range(n_maps))))
    probs = spec.get("probs", [1.0 / n_maps] * n_maps)
    return Schedule.random(probs, spec.get("floor"), int(spec.get("seed", sc.seed)))


def _initial_states(sc: Scenario) -> list:
    spec = sc.initial
    if spec.get("kind") == "haar":
        count = int(spec.get("count", 20))
        return [haar_pure_state(sc.space.dim, trial_rng(sc.seed, k)) for k in range(count)]
    return [_load_state(spec, sc.base_dir, sc.space, "initial")]


def _rank_kind(rho: np.ndarray) -> str:
    w = np.linalg.eigvalsh(rho)
    r = int(np.sum(w > 1e-10 * w[-1]))
    if r == 1:
        return "pure"
    return "full_rank" if r == len(w) else "general"


def rate_analysis(sc: Scenario, maps: list, n_samples: int = 10_000) -> dict:
    """Angles between the maps' fixed sets, the contraction coefficient and the sweep spectrum."""
    kind = _rank_kind(sc.target)
    out = {"target_kind": kind}
    lam = np.sort(np.abs(np.linalg.eigvals(cycle_channel(maps).superoperator)))[::-1]
    peripheral = int(np.sum(lam > 1 - 1e-9))
    out["sweep_second_modulus"] = float(lam[peripheral]) if peripheral < len(lam) else 0.0
    out["sweep_peripheral_dim"] = peripheral
    if kind == "pure":
        est = pure_contraction(maps, sc.target, n_samples=n_samples, seed=sc.seed)
        out.update({"c_estimate": est.estimate, "c_exact": est.exact, "n_samples": est.n_samples,
                    "refine_steps": est.refine_steps})
        return out
    subs = [E.target_subspace() for E in maps if isinstance(E, ProjectionChannel)]
    if len(subs) != len(maps):
        out["c_estimate"] = None
        return out
    if kind == "full_rank":
        xi = psd_power(sc.target, -1)
        subs = [S.with_mode(InnerMode.XI, xi) for S in subs]
        out["inner_product"] = "XI(rho^-1)"
    else:
        out["inner_product"] = "HS"
    c, angles = contraction_coefficient(subs)
    pairs = []
    for i in range(len(subs)):
        for j in range(i + 1, len(subs)):
            cos, ang = subspace_angle(subs[i], subs[j])
            pairs.append({"i": i, "j": j, "cosine": cos, "angle": ang})
    out.update({"c_estimate": c if kind == "full_rank" else None, "c_angles": c,
                "angles": [{"i": i, "theta": a, "sin2": float(np.sin(a) ** 2)} for i, a in enumerate(angles)],
                "pairwise": pairs})
    return out


def _c_estimate(sc: Scenario, maps: list) -> float | None:
    try:
        return rate_analysis(sc, maps).get("c_estimate")
    except (QstabError, np.linalg.LinAlgError, ValueError) as exc:
        log.warning("contraction estimate unavailable: %s", exc)
        return None


def _summary(sc: Scenario) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "scenario": sc.name,
        "task": sc.task,
        "seed": sc.seed,
        "system": {"factor_dims": list(sc.space.factor_dims)},
        "target": sc.target_spec,
        "neighborhoods": sc.neighborhoods.to_list() if sc.neighborhoods else None,
        "base_neighborhoods": sc.base_neighborhoods.to_list() if sc.base_neighborhoods else None,
        "qls": None,
        "parent_hamiltonian": None,
        "maps": [],
        "convergence": None,
        "randomized": None,
        "rates": None,
        "exit_code": EXIT_OK,
    }


def execute(sc: Scenario, jobs: int = 1) -> tuple[int, dict, object]:
    """Run the scenario's task. Returns ``(exit_code, summary, trajectory_or_None)``."""
    summary = _summary(sc)
    code = EXIT_OK
    traj = None
    report = None
    if sc.neighborhoods is not None:
        report = check_qls(sc.target, sc.neighborhoods, sc.space)
        summary["qls"] = report.to_dict()
        if report.kind == "pure":
            ph = parent_hamiltonian(sc.target, sc.neighborhoods, sc.space)
            summary["parent_hamiltonian"] = {k: ph[k] for k in
                                             ("frustration_free", "unique", "kernel_dim", "ground_dim", "gap")}
    if sc.task == "QLS_CHECK":
        summary["exit_code"] = code
        return code, summary, None
    try:
        maps = _build_maps(sc, report)
    except NotQLSError as exc:
        summary["convergence"] = {"converged": False, "steps": 0, "final_dist": None, "c_estimate": None,
                                  "note": str(exc)}
        code = EXIT_NOT_CONVERGED if sc.stop.get("mandatory") else EXIT_OK
        summary["exit_code"] = code
        return code, summary, None
    summary["maps"] = _map_table(maps)
    P = support_projector(sc.target)

    if sc.task == "STABILIZE_CYCLIC":
        sched = _schedule(sc, len(maps), ScheduleKind.CYCLIC)
        runs = []
        for k, rho0 in enumerate(_initial_states(sc)):
            tr = run(maps, sched, rho0, target=sc.target, max_steps=int(sc.stop["max_steps"]),
                     dist_tol=sc.stop.get("dist_tol"), lyapunov_projector=P)
            if traj is None:
                traj = tr
            runs.append({"run": k, "converged": tr.converged, "steps": tr.n_steps, "final_dist": tr.final_dist,
                         "max_dist_increase": tr.max_increase()})
        conv = {
            "converged": all(r["converged"] for r in runs),
            "steps": max(r["steps"] for r in runs),
            "final_dist": max(r["final_dist"] for r in runs),
            "c_estimate": _c_estimate(sc, maps),
            "runs": runs,
            "max_dist_increase": max(r["max_dist_increase"] for r in runs),
        }
        summary["convergence"] = conv
        if sc.stop.get("mandatory") and not conv["converged"]:
            code = EXIT_NOT_CONVERGED
    elif sc.task == "STABILIZE_RANDOM":
        sched = _schedule(sc, len(maps), ScheduleKind.RANDOM)
        t = sc.trials
        rep = randomized_trials(maps, sched, sc.target, gamma=float(t["gamma"]), trials=int(t["trials"]),
                                steps=int(t["steps"]), checkpoints=t.get("checkpoints"), jobs=jobs)
        summary["randomized"] = rep.summary()
        rng = trial_rng(sched.seed, 1_000_003)
        traj = run(maps, sched, haar_pure_state(sc.space.dim, rng), target=sc.target, max_steps=int(t["steps"]),
                   lyapunov_projector=P)
        final_fraction = rep.fraction_below[-1]
        conv = {
            "converged": bool(final_fraction >= float(t["min_fraction"])),
            "steps": int(t["steps"]),
            "final_dist": traj.final_dist,
            "c_estimate": _c_estimate(sc, maps),
        }
        summary["convergence"] = conv
        if sc.stop.get("mandatory") and not conv["converged"]:
            code = EXIT_NOT_CONVERGED
    elif sc.task == "RATE_ANALYSIS":
        summary["rates"] = rate_analysis(sc, maps)
    summary["exit_code"] = code
    return code, summary, traj


def run_scenario(path, jobs: int = 1, seed: int | None = None, out: str | None = None) -> tuple[int, dict | None]:
    """Load, execute and write outputs. Returns the exit code and the summary (``None`` if invalid)."""
    try:
        sc = load_scenario(path, seed, out)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID, None
    try:
        code, summary, traj = execute(sc, jobs)
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED, None
    except (ScenarioError, DimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID, None
    summary["metadata"] = {
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "version": __version__,
        "jobs": jobs,
    }
    out_dir = Path(sc.outputs["dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json(summary, out_dir / sc.outputs["summary"])
    if traj is not None:
        traj.to_csv(out_dir / sc.outputs["trajectory"])
    return code, summary


def explain_scenario(path, seed: int | None = None) -> tuple[int, str]:
    """Describe what ``run`` would build, without running any dynamics."""
    try:
        sc = load_scenario(path, seed)
    except ScenarioError as exc:
        return EXIT_INVALID, f"error: {exc}"
    lines = [
        f"scenario: {sc.name}",
        f"task: {sc.task}",
        f"system: factor dims {list(sc.space.factor_dims)} (d = {sc.space.dim})",
        f"target: {sc.target_spec.get('kind')} {sc.target_spec.get('params', {})}, "
        f"rank {int(np.sum(np.linalg.eigvalsh(sc.target) > 1e-10))}",
        f"seed: {sc.seed}",
    ]
    report = None
    if sc.neighborhoods is not None:
        if sc.base_neighborhoods is not None:
            lines.append(f"base neighborhoods: {sc.base_neighborhoods.to_list()}")
            lines.append(f"enlarged neighborhoods N0_j: {sc.neighborhoods.to_list()}")
        else:
            lines.append(f"neighborhoods: {sc.neighborhoods.to_list()}")
        report = check_qls(sc.target, sc.neighborhoods, sc.space)
        if report.kind == "pure":
            dims = [int(round(np.trace(neighborhood_support(sc.target, N, sc.space)).real))
                    for N in sc.neighborhoods]
            lines.append(f"neighborhood support dims: {dims}")
        else:
            sets = minimal_neighborhood_sets(sc.target, sc.neighborhoods, sc.space,
                                             support=report.kind != "full_rank")
            lines.append(f"local fixed-set dims: {[s.local.dim for s in sets]}")
            lines.append(f"F_k dims: {[s.extended.dim for s in sets]}")
        lines.append(f"intersection dim: {report.intersection_dim}")
        lines.append(f"QLS decision ({report.kind}): {report.decision}")
    if sc.task != "QLS_CHECK":
        try:
            maps = _build_maps(sc, report)
        except NotQLSError as exc:
            lines.append(f"maps: none ({exc})")
            return EXIT_OK, "\n".join(lines)
        n = len(maps)
        if sc.task == "STABILIZE_RANDOM":
            sched = _schedule(sc, n, ScheduleKind.RANDOM)
            lines.append(f"plan: random schedule over {n} map(s), probabilities {list(sched.probs)}")
        else:
            sched = _schedule(sc, n, ScheduleKind.CYCLIC)
            lines.append(f"plan: {len(sched.order)} map(s) per cycle, order {list(sched.order)}")
        lines.append(f"map count: {n}")
        c = _c_estimate(sc, maps)
        lines.append(f"c estimate: {'n/a' if c is None else format(c, '.6g')}")
    return EXIT_OK, "\n".join(lines)


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--jobs", type=int, default=1, help="worker processes for randomized trials")
    common.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    common.add_argument("--out", default=None, help="output directory (default: from the scenario)")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="qstab", description="Quasi-local stabilization scenarios",
                                     parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", parents=[common], help="execute a scenario and write its reports")
    p_run.add_argument("scenario")
    p_exp = sub.add_parser("explain", parents=[common], help="print the derived plan without running dynamics")
    p_exp.add_argument("scenario")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_INVALID
    if args.command == "run":
        code, summary = run_scenario(args.scenario, args.jobs, args.seed, args.out)
        if summary is not None:
            conv = summary.get("convergence") or {}
            qls = summary.get("qls") or {}
            parts = [f"task={summary['task']}"]
            if qls:
                parts.append(f"qls={qls['decision']}")
            if conv:
                parts.append(f"converged={conv.get('converged')}")
            parts.append(f"exit={code}")
            print(" ".join(parts))
        return code
    code, text = explain_scenario(args.scenario, args.seed)
    print(text, file=sys.stdout if code == EXIT_OK else sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())

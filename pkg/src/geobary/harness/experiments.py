"""Experiment drivers: interpolation grids, consistency sweeps and bound reports.

Every random draw comes from a generator derived from the master seed and the
work unit's coordinates, so results do not depend on how work is scheduled.
"""

import csv
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
import yaml

from .. import __version__
from ..barycenter import (
    BarycenterProblem,
    grid_barycenter,
    solve_barycenter,
    stability_bounds,
    stability_gap,
    theorem_rhs,
)
from ..errors import ContractError, GraphDisconnectedError
from ..geometry import (
    derived_rng,
    fixed_points,
    geodesic_matrix,
    graph_costs,
    sample_manifold,
)
from . import plotting

PROP1_SLACK = 1e-8
THREADS_ENV = "GEOBARY_THREADS"


class Prop1Violation(AssertionError):
    """An objective gap exceeded the cost-perturbation bound."""


@dataclass(frozen=True)
class SweepRecord:
    N: int
    trial: int
    attempt: int
    h_N: float
    bary_gap_sq: float
    obj_gap: float
    prop1_bound: float
    thm1_rhs: float
    thm1_rhs_inv: float
    log_thm1_rhs: float
    cost_err_inf: float
    wall_time: float

    def __post_init__(self):
        if not self.bary_gap_sq >= 0:
            raise Prop1Violation(f"negative squared gap {self.bary_gap_sq}")
        check_prop1(self.obj_gap, self.prop1_bound, f"N={self.N} trial={self.trial}")


# wall time is kept out of the record file so reruns stay byte-identical
RECORD_COLUMNS = tuple(f.name for f in fields(SweepRecord) if f.name != "wall_time")
SUMMARY_COLUMNS = (
    "N", "trials", "resampled", "status", "mean_bary_gap_sq", "std_bary_gap_sq",
    "median_bary_gap_sq", "p90_bary_gap_sq", "mean_obj_gap", "mean_cost_err_inf",
)
BOUND_COLUMNS = (
    "shape", "epsilon", "delta", "trial", "obj_gap", "prop1_bound", "prop1_ratio", "prop1_pass",
    "bary_gap_sq", "gap_per_bound", "thm1_rhs", "thm1_rhs_inv", "log_thm1_rhs", "thm1_ratio",
)


def check_prop1(obj_gap, bound, where=""):
    if obj_gap > bound + PROP1_SLACK:
        raise Prop1Violation(f"objective gap {obj_gap!r} exceeds bound {bound!r} ({where})")


def worker_count(requested=None, tasks=None):
    """Workers to use: ``requested``, else ``$GEOBARY_THREADS`` (0 = one per CPU)."""
    if requested is None:
        requested = int(os.environ.get(THREADS_ENV, "0") or 0)
    if requested < 0:
        raise ContractError(f"{THREADS_ENV} must be nonnegative")
    count = requested or os.cpu_count() or 1
    return max(1, min(count, tasks)) if tasks else count


def _ordered_map(func, tasks, workers):
    # results come back in task order whatever the completion order
    if workers <= 1 or len(tasks) <= 1:
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def write_weights(path, weights):
    np.savetxt(path, np.asarray(weights, dtype=float), fmt="%.17g")


# ---------------------------------------------------------------- problem setup


@dataclass(frozen=True)
class Layout:
    """Deterministic points and marginals shared by every trial."""

    x: np.ndarray
    ys: tuple
    marginals: tuple
    costs: tuple


def _centers(config, spec):
    if config.centers is not None:
        return np.asarray(config.centers, dtype=float)
    if spec.kind == "hemisphere" and config.S == 4:
        # four corners of a square patch around the pole, low above the equator
        az = np.pi / 4 + np.pi / 2 * np.array([2, 3, 1, 0])
        el = np.full(4, 0.35)
        return np.column_stack([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])
    if spec.kind == "square" and config.S == 4:
        return np.array([[0.15, 0.15], [0.85, 0.15], [0.15, 0.85], [0.85, 0.85]])
    return fixed_points(spec, config.S, offset=0.5)


def bump(spec, points, center, bandwidth):
    """Truncated Gaussian weights ``exp(-d^2 / 2 sigma^2)`` for ``d <= 3 sigma``."""
    sigma = bandwidth * spec.diameter
    d = geodesic_matrix(spec, points, center)[:, 0]
    w = np.where(d <= 3 * sigma, np.exp(-(d**2) / (2 * sigma**2)), 0.0)
    if w.sum() == 0:
        w[np.argmin(d)] = 1.0
    return w / w.sum()


def make_layout(config):
    spec = config.spec()
    if config.support is not None:
        x = np.asarray(config.support, dtype=float)
    else:
        x = fixed_points(spec, config.n)
    if config.shared_support:
        ys = [x] * config.S
    else:
        turn = 2 * np.pi if spec.kind != "square" else 1.0
        ys = [fixed_points(spec, config.m, offset=turn * (s + 1) / (config.S + 1)) for s in range(config.S)]
    centers = _centers(config, spec)
    if len(centers) != config.S:
        raise ContractError(f"need {config.S} centers, got {len(centers)}")
    marginals = tuple(bump(spec, y, c[None, :], config.bandwidth) for y, c in zip(ys, centers))
    costs = tuple(geodesic_matrix(spec, x, y) ** config.p for y in ys)
    return Layout(x, tuple(ys), marginals, costs)


def _problem(layout, lambdas, epsilon, costs=None):
    return BarycenterProblem(lambdas, layout.marginals, layout.costs if costs is None else costs, epsilon)


def sample_costs(config, layout, N, *keys):
    """Graph-estimated costs for ``N`` random points drawn from stream ``keys``."""
    spec = config.spec()
    h = spec.radius(N, config.radius_c)
    z = sample_manifold(spec, N, derived_rng(config.seed, *keys))
    _, costs = graph_costs(layout.x, layout.ys, z, h, config.p)
    return h, [c.entries for c in costs]


def _manifest(config, out, files, extra=None):
    info = {
        "version": __version__,
        "config_sha256": config.digest(),
        "seed": config.seed,
        "manifold": config.spec().describe(),
        "config": config.to_dict(),
        "files": sorted(files),
    }
    if config.spec().has_boundary:
        info["regime"] = "boundary"
    info.update(extra or {})
    with open(Path(out) / "manifest.yaml", "w") as fh:
        yaml.safe_dump(info, fh, sort_keys=True)


# ---------------------------------------------------------------- interpolation


@dataclass(frozen=True)
class InterpolationResult:
    lambdas: list
    true: list
    graph: list
    h: float
    files: list


def run_interpolation(config, write=True):
    """Barycenters over the weight grid, with true and with graph-estimated costs.

    The graph uses the largest ``N`` of the ladder. A disconnected graph
    aborts with :class:`~geobary.errors.GraphDisconnectedError`.
    """
    layout = make_layout(config)
    grid = config.lambda_grid()
    h, estimated = sample_costs(config, layout, config.N[-1], config.N[-1], 0)
    true, graph = [], []
    for lam in grid:
        true.append(solve_barycenter(_problem(layout, lam, config.epsilon), config.tol, config.max_iter).a.weights)
        graph.append(
            solve_barycenter(_problem(layout, lam, config.epsilon, estimated), config.tol, config.max_iter).a.weights
        )
    files = []
    if write:
        out = Path(config.output)
        out.mkdir(parents=True, exist_ok=True)
        for k, (at, ag) in enumerate(zip(true, graph)):
            for source, a in (("true", at), ("graph", ag)):
                name = f"weights_{k:02d}_{source}.txt"
                write_weights(out / name, a)
                files.append(name)
        write_csv(
            out / "lambdas.csv",
            ["index"] + [f"lambda_{s}" for s in range(config.S)],
            [{"index": k, **{f"lambda_{s}": float(v) for s, v in enumerate(lam)}} for k, lam in enumerate(grid)],
        )
        np.savetxt(out / "support.txt", layout.x, fmt="%.17g")
        files += ["lambdas.csv", "support.txt"]
        files += plotting.emit_interpolation(out, layout.x, grid, true, graph, config.figures)
        _manifest(config, out, files, {"radius": h, "N": config.N[-1]})
    return InterpolationResult(grid, true, graph, h, files)


# ---------------------------------------------------------------- consistency sweep


def _sweep_task(task):
    config, layout, base, N, trial = task
    start = time.perf_counter()
    true_problem = _problem(layout, config.lambda_grid()[0], config.epsilon)
    failures = []
    for attempt in range(2):
        if config.bypass:
            h, estimated = config.spec().radius(N, config.radius_c), [c for c in layout.costs]
        else:
            try:
                h, estimated = sample_costs(config, layout, N, N, trial, attempt)
            except GraphDisconnectedError as err:
                failures.append(str(err))
                continue
        perturbed = true_problem.with_costs(estimated)
        sol = solve_barycenter(perturbed, config.tol, config.max_iter)
        gap = stability_gap(true_problem, perturbed, solutions=(base, sol))
        return SweepRecord(
            N=N,
            trial=trial,
            attempt=attempt,
            h_N=h,
            bary_gap_sq=gap.bary_gap_sq,
            obj_gap=gap.obj_gap,
            prop1_bound=gap.obj_bound,
            thm1_rhs=gap.thm1_rhs,
            thm1_rhs_inv=gap.thm1_rhs_inv,
            log_thm1_rhs=gap.log_thm1_rhs,
            cost_err_inf=gap.cost_err,
            wall_time=time.perf_counter() - start,
        )
    return failures


def summarize(records, ladder, aborted):
    rows = []
    for N in ladder:
        sub = [r for r in records if r.N == N]
        gaps = np.array([r.bary_gap_sq for r in sub])
        row = {"N": N, "trials": len(sub), "resampled": sum(r.attempt for r in sub)}
        if N in aborted or not sub:
            row.update(status="aborted", **{c: float("nan") for c in SUMMARY_COLUMNS[4:]})
        else:
            row.update(
                status="ok",
                mean_bary_gap_sq=gaps.mean(),
                std_bary_gap_sq=gaps.std(ddof=1) if len(gaps) > 1 else 0.0,
                median_bary_gap_sq=np.median(gaps),
                p90_bary_gap_sq=np.quantile(gaps, 0.9),
                mean_obj_gap=np.mean([r.obj_gap for r in sub]),
                mean_cost_err_inf=np.mean([r.cost_err_inf for r in sub]),
            )
        rows.append(row)
    return rows


@dataclass(frozen=True)
class SweepResult:
    records: list
    summary: list
    aborted: dict
    files: list


def run_consistency_sweep(config, workers=None, write=True):
    """Graph-estimated versus true-cost barycenters along the ``N`` ladder.

    For every ``(N, trial)`` the random points are resampled once if the graph
    is disconnected; a second failure aborts that ``N`` (its records are
    dropped and the reason kept in ``aborted``). Every record is checked
    against the objective-gap bound when it is created.
    """
    layout = make_layout(config)
    if len(config.lambda_grid()) != 1:
        raise ContractError("the sweep takes a single weight vector")
    base = solve_barycenter(_problem(layout, config.lambda_grid()[0], config.epsilon), config.tol, config.max_iter)
    tasks = [(config, layout, base, N, t) for N in config.N for t in range(config.trials)]
    results = _ordered_map(_sweep_task, tasks, worker_count(workers, len(tasks)))
    aborted = {}
    for (_, _, _, N, trial), res in zip(tasks, results):
        if not isinstance(res, SweepRecord) and N not in aborted:
            aborted[N] = f"trial {trial}: " + " | ".join(res)
    records = [r for r in results if isinstance(r, SweepRecord) and r.N not in aborted]
    summary = summarize(records, config.N, aborted)
    files = []
    if write:
        out = Path(config.output)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "records.csv", RECORD_COLUMNS, [r.__dict__ for r in records])
        write_csv(out / "summary.csv", SUMMARY_COLUMNS, summary)
        write_csv(out / "timings.csv", ("N", "trial", "wall_time"), [r.__dict__ for r in records])
        files = ["records.csv", "summary.csv", "timings.csv"]
        files += plotting.emit_sweep(out, summary, config.figures)
        _manifest(config, out, files, {"aborted": {int(k): v for k, v in aborted.items()}})
    return SweepResult(records, summary, aborted, files)


# ---------------------------------------------------------------- bound report


def random_problem(rng, S, n, m, epsilon):
    """Uniform weights and marginals on the simplex, costs uniform in ``[0, 1]``."""
    lambdas = rng.dirichlet(np.ones(S))
    marginals = [rng.dirichlet(np.ones(m)) for _ in range(S)]
    costs = [rng.random((n, m)) for _ in range(S)]
    return BarycenterProblem(lambdas, marginals, costs, epsilon)


def noise_pattern(shape, rng, sizes):
    """Unit-amplitude perturbation per cost matrix."""
    out = []
    for size in sizes:
        if shape == "uniform":
            out.append(rng.random(size))
        elif shape == "spike":
            z = np.zeros(size)
            z[tuple(rng.integers(0, d) for d in size)] = 1.0
            out.append(z)
        elif shape == "shift":
            out.append(np.ones(size))
        else:
            raise ContractError(f"unknown perturbation shape {shape!r}")
    return out


def _bound_task(task):
    config, epsilon, trial = task
    problem = random_problem(derived_rng(config.seed, trial), config.S, config.bound_n, config.bound_n, epsilon)
    exact = epsilon == 0
    if exact and config.bound_n > 6:
        raise ContractError("exact-transport bounds use a grid search and need bound_n <= 6")

    def solve(p):
        if exact:
            value, a = grid_barycenter(p, 0.05)
            return value, a
        sol = solve_barycenter(p, config.tol, config.max_iter)
        return sol.objective, sol.a.weights

    base = solve(problem)
    rows = []
    for k, shape in enumerate(config.shapes):
        pattern = noise_pattern(shape, derived_rng(config.seed, trial, k + 1), [c.shape for c in problem.costs])
        for delta in config.deltas:
            perturbed = problem.with_costs(c.entries + delta * z for c, z in zip(problem.costs, pattern))
            value, a = solve(perturbed)
            weighted = stability_bounds(problem, perturbed)[0]
            gap = abs(base[0] - value)
            gap_sq = float(np.sum((base[1] - a) ** 2))
            rhs, rhs_inv, log_rhs = theorem_rhs(problem, perturbed)
            with np.errstate(divide="ignore", invalid="ignore"):
                rows.append(
                    {
                        "shape": shape,
                        "epsilon": float(epsilon),
                        "delta": float(delta),
                        "trial": trial,
                        "obj_gap": gap,
                        "prop1_bound": weighted,
                        "prop1_ratio": gap / weighted if weighted > 0 else float("nan"),
                        "prop1_pass": gap <= weighted + PROP1_SLACK,
                        "bary_gap_sq": gap_sq,
                        "gap_per_bound": gap_sq / weighted if weighted > 0 else float("nan"),
                        "thm1_rhs": rhs,
                        "thm1_rhs_inv": rhs_inv,
                        "log_thm1_rhs": log_rhs,
                        "thm1_ratio": gap_sq / rhs if rhs > 0 else float("nan"),
                    }
                )
    return rows


@dataclass(frozen=True)
class BoundReport:
    rows: list
    files: list

    @property
    def prop1_pass_rate(self):
        return float(np.mean([r["prop1_pass"] for r in self.rows])) if self.rows else 1.0


def run_bound_report(config, workers=None, write=True):
    """Objective and barycenter gaps under synthetic cost perturbations.

    For every ``(epsilon, trial)`` one random problem is drawn; each
    perturbation shape fixes one unit pattern ``Z`` that is scaled by every
    ``delta`` of the ladder, so rows of one trial form a ladder. ``epsilon = 0``
    uses the grid search over the simplex (step 0.05).
    """
    tasks = [(config, eps, t) for eps in config.epsilons for t in range(config.trials)]
    rows = [r for chunk in _ordered_map(_bound_task, tasks, worker_count(workers, len(tasks))) for r in chunk]
    rows.sort(key=lambda r: (config.shapes.index(r["shape"]), r["epsilon"], r["delta"], r["trial"]))
    files = []
    if write:
        out = Path(config.output)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "bounds.csv", BOUND_COLUMNS, rows)
        files = ["bounds.csv"] + plotting.emit_bounds(out, rows, config.figures)
        _manifest(config, out, files)
    report = BoundReport(rows, files)
    failed = [r for r in rows if not r["prop1_pass"]]
    if failed:
        r = failed[0]
        raise Prop1Violation(
            f"{len(failed)} bound violations, e.g. gap {r['obj_gap']!r} > {r['prop1_bound']!r} "
            f"(shape={r['shape']} epsilon={r['epsilon']} delta={r['delta']} trial={r['trial']})"
        )
    return report

"""End-to-end acceptance checks, one test per criterion, each at its stated tolerance."""

import filecmp
import time

import numpy as np
from scipy.stats import spearmanr

from geobary.barycenter import (
    grid_barycenter,
    solve_barycenter,
    stability_bounds,
    stability_gap,
    verify_first_order,
    verify_lemma1,
)
from geobary.core_ot import exact_ot, sinkhorn
from geobary.geometry import (
    ManifoldSpec,
    build_graph,
    derived_rng,
    fixed_points,
    geodesic_matrix,
    hop_distances,
    sample_manifold,
)
from geobary.harness.config import ExperimentConfig
from geobary.harness.experiments import run_bound_report, run_consistency_sweep

from acceptance_log import record
from oracles import transportation_vertex_min
from problems import random_problem

UNITS = 10**9


def random_cost_perturbation(rng, problem):
    """Uniform noise of log-uniform amplitude in [1e-3, 1] with a random sign pattern."""
    amp = 10 ** rng.uniform(-3, 0)
    costs = []
    for c in problem.costs:
        noisy = c.entries + amp * rng.uniform(-1, 1, c.shape)
        costs.append(np.maximum(noisy, 0.0))
    return problem.with_costs(costs)


def test_sinkhorn_correctness():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst_residual = worst_gap_ratio = 0.0
    for _ in range(100):
        a, b = rng.dirichlet(np.ones(20)), rng.dirichlet(np.ones(20))
        c = rng.random((20, 20))
        res = sinkhorn(a, b, c, 0.1, tol=1e-9)
        residual = max(np.max(np.abs(res.plan.sum(1) - a)), np.max(np.abs(res.plan.sum(0) - b)))
        exact, _ = exact_ot(a, b, c)
        worst_residual = max(worst_residual, residual)
        worst_gap_ratio = max(worst_gap_ratio, abs(res.value - exact) / (0.1 * np.log(400)))
    elapsed = time.perf_counter() - start
    ok = worst_residual <= 1e-9 and worst_gap_ratio <= 1 and elapsed < 30
    record(1, ok, f"max residual {worst_residual:.2e}, max |W^eps-W^0|/(eps log 400) {worst_gap_ratio:.3f}, {elapsed:.1f}s")
    assert ok


def test_oracle_equivalence():
    rng = np.random.default_rng(2)
    start = time.perf_counter()
    worst = 0.0
    for n in (4, 5):
        for _ in range(20):
            a = rng.multinomial(UNITS, rng.dirichlet(np.ones(n)))
            b = rng.multinomial(UNITS, rng.dirichlet(np.ones(n)))
            c = rng.random((n, n))
            expected, _ = transportation_vertex_min(a, b, c)
            value, _ = exact_ot(a / UNITS, b / UNITS, c)
            worst = max(worst, abs(value - expected / UNITS))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and elapsed < 10
    record(2, ok, f"40 instances (20 of 4x4, 20 of 5x5), max deviation {worst:.2e}, {elapsed:.1f}s")
    assert ok


def test_objective_bound():
    rng = np.random.default_rng(3)
    start = time.perf_counter()
    passes, total, worst = 0, 0, -np.inf
    for eps in (0.01, 0.1, 1.0):
        for _ in range(100):
            p = random_problem(rng, S=3, n=10, m=10, eps=eps)
            q = random_cost_perturbation(rng, p)
            gap = stability_gap(p, q)
            passes += gap.obj_gap <= gap.obj_bound + 1e-8
            total += 1
            worst = max(worst, gap.obj_gap - gap.obj_bound)
    exact_pass = 0
    for _ in range(20):
        p = random_problem(rng, S=3, n=4, m=4, eps=0.0)
        q = random_cost_perturbation(rng, p)
        bound, _, c_max = stability_bounds(p, q)
        gap = abs(grid_barycenter(p, 0.05)[0] - grid_barycenter(q, 0.05)[0])
        exact_pass += gap <= bound + 0.05 * c_max
        worst = max(worst, gap - bound)
    elapsed = time.perf_counter() - start
    ok = passes == total and exact_pass == 20 and elapsed < 300
    record(
        3, ok,
        f"eps>0 {passes}/{total}, eps=0 {exact_pass}/20, max (gap - bound) {worst:.2e}, {elapsed:.1f}s",
    )
    assert ok


def test_first_order_and_potential_bounds():
    rng = np.random.default_rng(4)
    start = time.perf_counter()
    worst, inside = 0.0, 0
    for _ in range(20):
        S = int(rng.integers(2, 4))
        n, m = (int(v) for v in rng.integers(5, 16, size=2))
        eps = float(rng.choice([0.05, 0.1, 0.5]))
        p = random_problem(rng, S=S, n=n, m=m, eps=eps)
        sol = solve_barycenter(p)
        worst = max(worst, verify_first_order(sol, p).max_violation)
        report = verify_lemma1(sol, p)
        inside += report.passed
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-7 and inside == 20 and elapsed < 60
    record(4, ok, f"max first-order violation {worst:.2e}, bracket held {inside}/20, {elapsed:.1f}s")
    assert ok


def test_barycenter_gap_ladder():
    start = time.perf_counter()
    config = ExperimentConfig(
        S=2, bound_n=10, trials=10, epsilons=[0.1], deltas=[1e-3, 1e-2, 1e-1], shapes=["uniform"], seed=5,
    )
    rows = run_bound_report(config, workers=1, write=False).rows
    monotone, spreads = 0, []
    for t in range(10):
        ladder = sorted((r for r in rows if r["trial"] == t), key=lambda r: r["delta"])
        gaps = [r["bary_gap_sq"] for r in ladder]
        ratios = [r["gap_per_bound"] for r in ladder]
        monotone += all(x <= y for x, y in zip(gaps, gaps[1:]))
        spreads.append(max(ratios) / min(ratios))
    elapsed = time.perf_counter() - start
    ok_monotone = monotone >= 9
    ok_ratio = max(spreads) <= 50
    ok = ok_monotone and ok_ratio and elapsed < 180
    record(
        5, ok,
        f"nondecreasing ladders {monotone}/10; ratio spread max {max(spreads):.1f}, "
        f"min {min(spreads):.1f} (limit 50), {elapsed:.1f}s",
    )
    assert ok_monotone
    assert ok_ratio, f"gap/bound spread across the ladder reaches {max(spreads):.1f}"


def test_shift_invariance():
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(10):
        p = random_problem(rng, S=3, n=10, m=10, eps=0.1)
        q = p.with_costs(c.entries + 1.0 for c in p.costs)
        worst = max(worst, np.max(np.abs(solve_barycenter(p).a.weights - solve_barycenter(q).a.weights)))
    ok = worst <= 1e-7
    record(6, ok, f"max |a - a~| {worst:.2e}")
    assert ok


def test_geodesic_estimation_trend():
    spec = ManifoldSpec.sphere(3)
    x = fixed_points(spec, 10)
    y = fixed_points(spec, 10, offset=np.pi)
    exact = geodesic_matrix(spec, x, y)
    ladder = (250, 500, 1000, 2000, 4000)
    start = time.perf_counter()
    errors = np.zeros((len(ladder), 10))
    for a, N in enumerate(ladder):
        h = spec.radius(N)
        for seed in range(10):
            z = sample_manifold(spec, N, derived_rng(seed, N))
            g = build_graph(np.vstack([x, y]), z, h)
            hops = hop_distances(g, np.arange(10), np.arange(10, 20))
            assert np.all(hops >= 0)
            errors[a, seed] = np.median(np.abs(h * hops - exact))
    elapsed = time.perf_counter() - start
    rho_mean = spearmanr(ladder, errors.mean(axis=1))[0]
    rho_pooled = spearmanr(np.repeat(ladder, 10), errors.ravel())[0]
    ok = rho_mean <= -0.8 and elapsed < 120
    record(
        7, ok,
        f"Spearman of seed-mean median error vs N {rho_mean:.2f} (pooled over seeds {rho_pooled:.2f}), "
        f"errors {np.round(errors.mean(axis=1), 3).tolist()}, {elapsed:.1f}s",
    )
    assert ok


def test_sweep_trend(tmp_path):
    config = ExperimentConfig(
        manifold="sphere", S=2, n=8, m=8, epsilon=0.05, N=[250, 1000, 4000], trials=30, seed=0,
        figures=False, output=str(tmp_path),
    )
    start = time.perf_counter()
    result = run_consistency_sweep(config)
    elapsed = time.perf_counter() - start
    means = {row["N"]: row["mean_bary_gap_sq"] for row in result.summary}
    ok = not result.aborted and means[4000] <= 0.5 * means[250] and elapsed < 600
    record(
        8, ok,
        f"mean squared gap N=250 {means[250]:.4g}, N=1000 {means[1000]:.4g}, N=4000 {means[4000]:.4g} "
        f"(ratio {means[4000] / means[250]:.3f}), {elapsed:.1f}s",
    )
    assert ok


def test_sweep_determinism(tmp_path):
    kw = dict(S=2, n=6, m=6, epsilon=0.05, N=[250, 500], trials=4, seed=11, figures=False)
    outputs = []
    for name, workers in (("a", 1), ("b", 1), ("c", 2), ("d", 3)):
        run_consistency_sweep(ExperimentConfig(output=str(tmp_path / name), **kw), workers=workers)
        outputs.append(tmp_path / name)
    same = all(
        filecmp.cmp(outputs[0] / f, other / f, shallow=False)
        for other in outputs[1:]
        for f in ("records.csv", "summary.csv")
    )
    record(9, same, "records.csv and summary.csv byte-identical over 2 runs and 1, 2, 3 workers")
    assert same

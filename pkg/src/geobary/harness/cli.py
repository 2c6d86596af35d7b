"""Command line entry point: ``geobary <command> [--config FILE] [--key value ...]``.

Exit codes: 0 success, 1 failed check or solver error, 2 usage error.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from ..barycenter import solve_barycenter, verify_first_order, verify_lemma1
from ..core_ot import entropic_ot_value
from ..errors import ContractError, GeobaryError
from ..geometry import build_graph, derived_rng, fixed_points, sample_manifold, write_coordinates, write_edge_list
from .config import KEYS, load_config, parse_overrides
from .experiments import random_problem, run_bound_report, run_consistency_sweep, run_interpolation

EXPERIMENTS = ("interp", "sweep", "bounds", "graph")


def _parser():
    parser = argparse.ArgumentParser(
        prog="geobary",
        description="Entropic barycenters with graph-estimated geodesic costs.",
        epilog="Any config key can be overridden with --key value; keys: " + ", ".join(KEYS),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("interp", "barycenters over a weight grid, true and graph costs"),
        ("sweep", "graph-estimated versus true barycenters along the N ladder"),
        ("bounds", "objective and barycenter gaps under synthetic cost perturbations"),
        ("graph", "build one random geometric graph and export it"),
    ):
        p = sub.add_parser(name, help=text, description=text)
        p.add_argument("--config", type=Path, help="YAML key-value file")
        p.add_argument("--workers", type=int, help="worker processes (default $GEOBARY_THREADS, 0 = auto)")
    ot = sub.add_parser("ot", help="solve one transport problem")
    ot.add_argument("--n", type=int, default=2, help="size of the demo instance")
    ot.add_argument("--demo", action="store_true", help="uniform marginals, zero-diagonal cost")
    ot.add_argument("--a", type=Path, help="file with one weight per line")
    ot.add_argument("--b", type=Path, help="file with one weight per line")
    ot.add_argument("--cost", type=Path, help="whitespace-separated cost matrix")
    ot.add_argument("--epsilon", type=float, default=0.0, help="0 for exact transport")
    check = sub.add_parser("selfcheck", help="run the optimality verifiers on a canned problem")
    check.add_argument("--seed", type=int, default=2024)
    return parser


def _ot(args):
    if args.demo:
        if args.n < 1:
            raise ContractError("--n must be positive")
        a = b = np.full(args.n, 1.0 / args.n)
        cost = 1.0 - np.eye(args.n)
    elif args.a and args.b and args.cost:
        for path in (args.a, args.b, args.cost):
            if not path.is_file():
                raise FileNotFoundError(f"input file not found: {path}")
        a, b = np.loadtxt(args.a, ndmin=1), np.loadtxt(args.b, ndmin=1)
        cost = np.loadtxt(args.cost, ndmin=2)
    else:
        raise ContractError("ot needs --demo or all of --a, --b and --cost")
    print(repr(entropic_ot_value(a, b, cost, args.epsilon)))
    return 0


def _selfcheck(args):
    problem = random_problem(derived_rng(args.seed), 2, 10, 10, 0.1)
    sol = solve_barycenter(problem)
    first = verify_first_order(sol, problem)
    lemma = verify_lemma1(sol, problem)
    rows = sol.row_marginals(problem)
    spread = max(np.max(np.abs(r - sol.a.weights)) for r in rows)
    checks = [
        ("column marginals", first.column, first.column <= 10 * first.tol),
        ("shared row marginal", first.nu, first.nu <= 10 * first.tol),
        ("weighted potentials sum", first.constraint, first.constraint <= 10 * first.tol),
        ("potential bracket", max(v - hi for v, hi in zip(lemma.log_sums, lemma.log_upper)), lemma.passed),
        ("row marginal recovery", spread, spread <= 1e-6),
    ]
    for name, value, ok in checks:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {value:.3e}")
    return 0 if all(ok for _, _, ok in checks) else 1


def _graph(config):
    spec = config.spec()
    N = config.N[-1]
    h = spec.radius(N, config.radius_c)
    graph = build_graph(fixed_points(spec, config.n), sample_manifold(spec, N, derived_rng(config.seed, N, 0)), h)
    out = Path(config.output)
    out.mkdir(parents=True, exist_ok=True)
    write_edge_list(graph, out / "edges.txt")
    write_coordinates(graph.points, out / "points.txt")
    print(f"{graph.n_vertices} vertices, {len(graph.edges)} edges, radius {h:.6g} -> {out}")
    return 0


def main(argv=None):
    parser = _parser()
    try:
        args, rest = parser.parse_known_args(argv)
        if args.command not in EXPERIMENTS and rest:
            parser.error(f"unrecognized arguments: {' '.join(rest)}")
    except SystemExit as exit_:
        # argparse exits with 2 on usage errors and 0 after --help
        return exit_.code
    try:
        if args.command == "ot":
            return _ot(args)
        if args.command == "selfcheck":
            return _selfcheck(args)
        config = load_config(args.config, parse_overrides(rest))
    except FileNotFoundError as err:
        print(f"geobary: error: {err}", file=sys.stderr)
        return 2
    except ContractError as err:
        parser.print_usage(sys.stderr)
        print(f"geobary: error: {err}", file=sys.stderr)
        return 2
    try:
        if args.command == "graph":
            return _graph(config)
        if args.command == "interp":
            result = run_interpolation(config)
            print(f"{len(result.lambdas)} weight vectors, radius {result.h:.6g} -> {config.output}")
        elif args.command == "sweep":
            result = run_consistency_sweep(config, args.workers)
            for row in result.summary:
                print(f"N={row['N']} {row['status']} mean gap {row['mean_bary_gap_sq']:.4g}")
            for N, why in result.aborted.items():
                print(f"N={N} aborted: {why}", file=sys.stderr)
            if result.aborted:
                return 1
        elif args.command == "bounds":
            report = run_bound_report(config, args.workers)
            print(f"{len(report.rows)} rows, bound pass rate {report.prop1_pass_rate:.0%} -> {config.output}")
    except AssertionError as err:
        print(f"geobary: check failed: {err}", file=sys.stderr)
        return 1
    except GeobaryError as err:
        print(f"geobary: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

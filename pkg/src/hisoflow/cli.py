"""
Command-line entry point.

Exit codes: 0 when every checked assertion holds, 1 when at least one fails,
2 on a configuration error (bad flags, bad or missing config file, invalid
graph).
"""

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import central, experiments
from .experiments import ConfigError
from .graph import GraphError, build_graph, matrices, named_graph
from .io import load_config, parse_edges, write_report

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _global_flags(p, suppress):
    default = argparse.SUPPRESS if suppress else None
    p.add_argument("--seed", type=int, default=default, help="override the config seed")
    p.add_argument("--out", default=default, help="output directory for traces and summary")
    p.add_argument("--step", type=float, default=default,
                   help="Euler stepsize (central runs: fixes the step, skipping the grid)")
    p.add_argument("--horizon", type=float, default=default, help="simulated time horizon")
    p.add_argument("--epsilon", type=float, default=default,
                   help="boundary-layer width for the sign function (0 = exact sign)")
    p.add_argument("--no-plot", action="store_true", default=default, help="skip the SVG plot")


def build_parser():
    # argparse exits with 2 on usage errors, which matches EXIT_CONFIG
    parser = argparse.ArgumentParser(prog="hisoflow", description=__doc__.strip().splitlines()[0])
    _global_flags(parser, suppress=False)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)

    p = sub.add_parser("lemma1", parents=[common],
                       help="property suites for the inverse-sum inequality and rate dominance")
    p.add_argument("--instances", type=int, default=1000, help="random SPD ensembles")
    p.add_argument("--points", type=int, default=200, help="random (ensemble, point) pairs")
    p.add_argument("--tol", type=float, default=1e-9)

    sub.add_parser("quartic", parents=[common],
                   help="centralized GD / NR / HISO comparison on scalar quartics")
    sub.add_parser("logreg", parents=[common],
                   help="distributed HISO vs DGD2 on logistic regression")

    p = sub.add_parser("run", parents=[common], help="run an experiment from a config file")
    p.add_argument("--config", required=True, type=Path)

    p = sub.add_parser("graph", parents=[common], help="inspect graph matrices")
    p.add_argument("--name", default="fig1")
    p.add_argument("--nodes", type=int, help="node count for --edges")
    p.add_argument("--edges", help='explicit edge list such as "1-2,2-3"')
    p.add_argument("--print", action="store_true", dest="print_matrices",
                   help="print Laplacian, incidence matrix and spectrum")
    return parser


def _overrides(args, cfg):
    kw = {}
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.horizon is not None:
        kw["horizon"] = args.horizon
    if args.epsilon is not None:
        kw["epsilon"] = args.epsilon
    if args.step is not None:
        kw["step"] = args.step
        kw["step_policy"] = "fixed"
    if args.out is not None:
        kw["out"] = args.out
    return replace(cfg, **kw).validate()


def _finish(report, args):
    for line in report.summary_lines():
        print(line)
    out = report.config.out or str(Path("runs") / report.config.name)
    files = write_report(report, out, plot=not args.no_plot)
    print(f"wrote {len(files)} files to {out}")
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_lemma1(args):
    seed = 0 if args.seed is None else args.seed
    l1 = central.inverse_sum_suite(args.instances, seed=seed, tol=args.tol)
    rd = central.rate_dominance_suite(args.points, seed=seed, tol=args.tol)
    ok1, ok2 = l1["failures"] == 0, rd["failures"] == 0
    print(f"inverse-sum inequality: {l1['instances']} instances, "
          f"min eigenvalue {l1['min_eigenvalue']:.6g}, failures {l1['failures']} "
          f"(tol {args.tol:g}) [{'PASS' if ok1 else 'FAIL'}]")
    print(f"rate dominance: {rd['instances']} points, min margin {rd['min_margin']:.6g}, "
          f"failures {rd['failures']} (tol {args.tol:g}) [{'PASS' if ok2 else 'FAIL'}]")
    return EXIT_OK if ok1 and ok2 else EXIT_FAIL


def cmd_quartic(args):
    return _finish(experiments.run_quartic(_overrides(args, experiments.quartic_config())), args)


def cmd_logreg(args):
    return _finish(experiments.run_logreg(_overrides(args, experiments.logreg_config())), args)


def cmd_run(args):
    cfg = _overrides(args, load_config(args.config))
    return _finish(experiments.run_experiment(cfg), args)


def cmd_graph(args):
    if args.edges:
        edges = parse_edges(args.edges)
        g = build_graph(args.nodes or max(max(e) for e in edges), edges)
    else:
        g = named_graph(args.name)
    m = matrices(g)
    print(f"graph: {g.n_nodes} nodes, {g.n_edges} edges {list(g.edges)}")
    print(f"lambda_2 = {m.lambda2:.6g}, lambda_N = {m.lambdaN:.6g}, "
          f"lambda_bar = {m.lambda_bar:.6g}, max degree = {g.max_degree}")
    if args.print_matrices:
        with np.printoptions(precision=6, suppress=True, floatmode="maxprec"):
            print("Laplacian:")
            print(m.laplacian.astype(int) if np.allclose(m.laplacian, m.laplacian.round())
                  else m.laplacian)
            print("incidence:")
            print(m.incidence.astype(int))
            print("eigenvalues:", m.eigenvalues)
    return EXIT_OK


COMMANDS = {"lemma1": cmd_lemma1, "quartic": cmd_quartic, "logreg": cmd_logreg,
            "run": cmd_run, "graph": cmd_graph}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, GraphError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

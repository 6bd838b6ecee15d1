"""
Command-line interface

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
Node labels on the command line are 1-based.
"""
import argparse
import json
import logging
import os
import sys

import numpy as np
import pandas as pd

from config import ALPHA, BOOTSTRAP_DRAWS, CI_LEVEL, RESULTS_DIR
from data_utils import ensure_dir, load_data_matrix, write_json
from errors import ConfigError, NumericalError, ScoreInfError
from estimators import (DEBIASED, GROUP_L, THREE_STEP, confidence_interval, debiased_edge,
                        default_lambda, p_values, split_halves, three_step_edge, three_step_edge_groupL)
from harness import PRESETS, ExperimentConfig, analyze_dataset, emit_histogram, preset, run_experiment
from inference import diff_test, isolated_node_test, simultaneous_test, support_recovery, xia_test
from models import Family, ModelSpec, edge_index_map
from samplers import sample

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


# =============================================================================
# Parser
# =============================================================================

def _add_experiment_flags(parser):
    parser.add_argument("--config", help="JSON experiment config")
    parser.add_argument("--preset", choices=sorted(PRESETS), help="Preset scenario")
    parser.add_argument("--scale", choices=("full", "desk"), help="Preset scale")
    parser.add_argument("--family", help="Model family")
    parser.add_argument("--n", type=int, help="Sample size")
    parser.add_argument("--p", type=int, help="Node count")
    parser.add_argument("--reps", type=int, help="Replications R")
    parser.add_argument("--alpha", type=float, help="Test level")
    parser.add_argument("--b-boot", type=int, dest="B", help="Bootstrap draws")
    parser.add_argument("--lambda1-c", type=float, help="Step-1 penalty constant c")
    parser.add_argument("--lambda2-c", type=float, help="Step-2 penalty constant c")
    parser.add_argument("--seed", type=int, help="Master seed")
    parser.add_argument("--method", choices=(THREE_STEP, DEBIASED, GROUP_L), help="Edge estimator")
    parser.add_argument("--workers", type=int, dest="n_workers", help="Worker processes")
    parser.add_argument("--no-cache", action="store_true", help="Do not read or write the dataset cache")
    parser.add_argument("--out", help="Output directory")


def _add_data_flags(parser, node=False, edge=False):
    parser.add_argument("--data", required=True, help="CSV data matrix, one sample per row")
    parser.add_argument("--family", required=True, choices=[f.value for f in Family], help="Model family")
    parser.add_argument("--header", action="store_true", help="First CSV row holds node names")
    parser.add_argument("--weight-fn", help="Weight function for non-negative families")
    parser.add_argument("--lambda1-c", type=float, help="Step-1 penalty constant c")
    parser.add_argument("--lambda2-c", type=float, help="Step-2 penalty constant c")
    parser.add_argument("--out", help="Write the JSON result here")
    if node:
        parser.add_argument("--node", type=int, required=True, help="Node (1-based)")
    if edge:
        parser.add_argument("--edge", type=int, nargs=2, required=True, metavar=("A", "B"),
                            help="Edge (1-based)")


def build_parser():
    parser = argparse.ArgumentParser(prog="scoreinf", description="Score-matching inference for graphical models")
    parser.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Sample a data matrix to CSV")
    _add_experiment_flags(p)
    p.add_argument("--csv", required=True, help="Output CSV path")

    for name, helptext in (("estimate", "Edge estimate"), ("ci", "Confidence interval for one edge")):
        p = sub.add_parser(name, help=helptext)
        _add_data_flags(p, edge=True)
        p.add_argument("--method", choices=(THREE_STEP, DEBIASED, GROUP_L), default=None)
        p.add_argument("--level", type=float, default=CI_LEVEL)

    for name, helptext in (("simtest", "Simultaneous test of a node's edges"),
                           ("isotest", "Test that a node is isolated")):
        p = sub.add_parser(name, help=helptext)
        _add_data_flags(p, node=True)
        p.add_argument("--alpha", type=float, default=ALPHA)
        p.add_argument("--b-boot", type=int, dest="B", default=BOOTSTRAP_DRAWS)
        p.add_argument("--seed", type=int, default=0)
        if name == "simtest":
            p.add_argument("--null", help="JSON list of p null values (one per node) or {node: value}")
            p.add_argument("--one-sided", action="store_true", help="Decide on the one-sided statistic")

    p = sub.add_parser("support", help="Recover a node's neighborhood")
    _add_data_flags(p, node=True)

    p = sub.add_parser("difftest", help="Two-sample differential network test")
    _add_data_flags(p)
    p.add_argument("--data2", required=True, help="Second group CSV")
    p.add_argument("--alpha", type=float, default=ALPHA)
    p.add_argument("--b-boot", type=int, dest="B", default=BOOTSTRAP_DRAWS)
    p.add_argument("--seed", type=int, default=0)

    for name in ("coverage", "type1", "diagnostics"):
        p = sub.add_parser(name, help=f"Run a {name} experiment")
        _add_experiment_flags(p)

    p = sub.add_parser("analyze", help="Edge p-values and thresholded graph of a dataset")
    _add_data_flags(p)
    p.add_argument("--threshold", type=float, default=0.01)

    p = sub.add_parser("hist", help="Histogram of estimates from a coverage run")
    p.add_argument("--records", required=True, help="records.csv of a coverage run")
    p.add_argument("--edge", required=True, help='Edge label, e.g. "(1,2)"')
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--out", required=True, help="Output CSV path")
    return parser


# =============================================================================
# Commands
# =============================================================================

def _experiment_config(args, kind=None):
    if args.config:
        cfg = ExperimentConfig.from_json(args.config)
    elif args.preset:
        cfg = preset(args.preset, args.scale or "full")
    else:
        cfg = ExperimentConfig(kind=kind or "coverage")
    overrides = dict(family=args.family, n=args.n, p=args.p, reps=args.reps, alpha=args.alpha, B=args.B,
                     lambda1_c=args.lambda1_c, lambda2_c=args.lambda2_c, seed=args.seed,
                     method=args.method, n_workers=args.n_workers, out=args.out)
    if args.no_cache:
        overrides["use_cache"] = False
    if kind is not None:
        overrides["kind"] = kind
    return cfg.with_overrides(**overrides)


def _load(args, path=None):
    try:
        dm = load_data_matrix(path or args.data, args.family, header=args.header)
    except FileNotFoundError as e:
        raise ConfigError(str(e)) from e
    try:
        spec = ModelSpec.template(args.family, dm.p, args.weight_fn)
    except ValueError as e:
        raise ConfigError(f"invalid model settings: {e}") from e
    return dm, spec


def _node(value, p):
    if not 1 <= value <= p:
        raise ConfigError(f"node {value} is out of range 1..{p}")
    return value - 1


def _penalties(args, spec, n):
    dim = edge_index_map(spec, 0, 1).dim
    lam1 = None if args.lambda1_c is None else default_lambda(spec, n, dim, args.lambda1_c)
    lam2 = None if args.lambda2_c is None else default_lambda(spec, n, dim, args.lambda2_c)
    return lam1, lam2


def _emit(payload, out=None):
    print(json.dumps(payload, indent=2, sort_keys=True, default=_default))
    if out:
        write_json(payload, out)


def _default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _print_file(path):
    with open(path) as f:
        print(f.read())


def cmd_simulate(args):
    cfg = _experiment_config(args)
    spec = cfg.model_spec()
    data = sample(spec, cfg.n, cfg.seed, cfg.gibbs_config(cfg.seed))
    ensure_dir(os.path.dirname(args.csv))
    data.to_csv(args.csv)
    logger.info("Wrote %d x %d samples to %s", data.n, data.p, args.csv)
    write_json(spec.to_dict(), os.path.splitext(args.csv)[0] + ".spec.json")
    return EXIT_OK


def _edge_estimate(args):
    dm, spec = _load(args)
    a, b = (_node(v, dm.p) for v in args.edge)
    if a == b:
        raise ConfigError("edge endpoints must differ")
    method = args.method or (GROUP_L if spec.L > 1 else THREE_STEP)
    if method == DEBIASED:
        half1, half2 = split_halves(dm)
        lam1, lam2 = _penalties(args, spec, half1.n)
        return debiased_edge(spec, half1, half2, a, b, lam1, lam2)
    lam1, lam2 = _penalties(args, spec, dm.n)
    estimator = three_step_edge_groupL if method == GROUP_L else three_step_edge
    return estimator(spec, dm, a, b, lam1, lam2)


def cmd_estimate(args):
    est = _edge_estimate(args)
    payload = est.to_dict()
    payload["edge"] = list(args.edge)
    payload["std_error"] = est.std_error().tolist()
    payload["p_value"] = p_values(est).tolist()
    _emit(payload, args.out)
    return EXIT_OK


def cmd_ci(args):
    est = _edge_estimate(args)
    ci = confidence_interval(est, args.level)
    _emit({"edge": list(args.edge), "level": ci.level, "estimate": est.theta_tilde.tolist(),
           "lower": ci.lower.tolist(), "upper": ci.upper.tolist()}, args.out)
    return EXIT_OK


def _null_values(text, p):
    if not text:
        return None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"--null is not valid JSON: {e}") from e
    if isinstance(raw, dict):
        return {_node(int(k), p): float(v) for k, v in raw.items()}
    arr = np.asarray(raw, dtype=float)
    if arr.shape[-1] != p:
        raise ConfigError(f"--null needs {p} values per row, got shape {arr.shape}")
    return arr


def _test_payload(res, a):
    payload = res.to_dict()
    payload["node"] = a + 1
    payload["per_edge_stats"] = {str(_one_based(k)): v for k, v in res.per_edge_stats.items()}
    return payload


def _one_based(key):
    if isinstance(key, tuple):
        return (key[0] + 1,) + tuple(key[1:])
    return key + 1


def cmd_simtest(args, isolated=False):
    dm, spec = _load(args)
    a = _node(args.node, dm.p)
    lam1, lam2 = _penalties(args, spec, dm.n)
    if isolated:
        res = isolated_node_test(spec, dm, a, args.alpha, args.B, args.seed, lambda1=lam1, lambda2=lam2)
    else:
        res = simultaneous_test(spec, dm, a, _null_values(args.null, dm.p), args.alpha, args.B, args.seed,
                                two_sided=not args.one_sided, lambda1=lam1, lambda2=lam2)
    _emit(_test_payload(res, a), args.out)
    return EXIT_OK


def cmd_support(args):
    dm, spec = _load(args)
    a = _node(args.node, dm.p)
    lam1, lam2 = _penalties(args, spec, dm.n)
    recovered = support_recovery(spec, dm, a, lambda1=lam1, lambda2=lam2)
    names = dm.node_names()
    _emit({"node": args.node, "neighbors": sorted(b + 1 for b in recovered),
           "names": [names[b] for b in sorted(recovered)]}, args.out)
    return EXIT_OK


def cmd_difftest(args):
    dm1, spec = _load(args)
    dm2, _ = _load(args, args.data2)
    lam1, lam2 = _penalties(args, spec, min(dm1.n, dm2.n))
    res = diff_test(spec, dm1, dm2, args.alpha, args.B, args.seed, lam1, lam2)
    ests1, ests2 = res.estimates
    xia = xia_test(ests1, ests2, spec.p)
    payload = res.to_dict()
    payload["per_edge_stats"] = {str(tuple(v + 1 for v in k[:2]) + tuple(k[2:])): s
                                 for k, s in res.per_edge_stats.items()}
    payload["xia"] = xia.to_dict()
    _emit(payload, args.out)
    return EXIT_OK


def cmd_experiment(args):
    cfg = _experiment_config(args, kind=args.command)
    report = run_experiment(cfg)
    paths = report.write(cfg.out_dir())
    _print_file(paths["report"])
    return EXIT_OK


def cmd_analyze(args):
    lam1 = lam2 = None
    dm, spec = _load(args)
    if args.lambda1_c is not None or args.lambda2_c is not None:
        lam1, lam2 = _penalties(args, spec, dm.n)
    graph = analyze_dataset(dm, args.family, args.threshold, weight_fn=args.weight_fn,
                            lambda1=lam1, lambda2=lam2)
    out = args.out or os.path.join(RESULTS_DIR, "analysis")
    paths = graph.write(out)
    _print_file(paths["report"])
    return EXIT_OK


def cmd_hist(args):
    if not os.path.exists(args.records):
        raise ConfigError(f"records file not found: {args.records}")
    df = pd.read_csv(args.records)
    values = df[(df["edge"] == args.edge) & (df["status"] == "ok")]["estimate"]
    if values.empty:
        raise ConfigError(f"no successful estimates for edge {args.edge} in {args.records}")
    emit_histogram(values.to_numpy(), args.bins, args.out)
    logger.info("Wrote %d-bin histogram of %d estimates to %s", args.bins, len(values), args.out)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "ci": cmd_ci,
    "simtest": cmd_simtest,
    "isotest": lambda args: cmd_simtest(args, isolated=True),
    "support": cmd_support,
    "difftest": cmd_difftest,
    "coverage": cmd_experiment,
    "type1": cmd_experiment,
    "diagnostics": cmd_experiment,
    "analyze": cmd_analyze,
    "hist": cmd_hist,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except NumericalError as e:
        logger.error("Numerical failure: %s", e)
        return EXIT_NUMERICAL
    except (ScoreInfError, FileNotFoundError) as e:
        logger.error("%s", e)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

"""
Experiment harness: coverage, Type-I and diagnostic runs, dataset analysis

Node labels in configs and reports are 1-based; the library is 0-based.
"""
import hashlib
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields, replace
from multiprocessing import Pool

import numpy as np
import pandas as pd
from scipy.stats import chi2

from config import ALPHA, BOOTSTRAP_DRAWS, CI_LEVEL, N_WORKERS, RESULTS_DIR, VERSION
from data_utils import config_hash, ensure_dir, load_data_matrix, spec_hash, write_json, write_records
from datasets import get_or_create_dataset
from errors import ConfigError, DomainError, ScoreInfError, SingularSystemError
from estimators import (DEBIASED, GROUP_L, THREE_STEP, confidence_interval, debiased_edge,
                        default_lambda, p_value, split_halves, three_step_edge, three_step_edge_groupL)
from inference import chi2_simultaneous, simultaneous_test
from models import Family, ModelSpec, WeightFn, edge_index_map, family_info, true_edge_value
from reporting import format_experiment_report, format_graph_report
from samplers import GibbsConfig, knn_graph_spec
from score_engine import DataMatrix, as_data_matrix, assemble, nuisance_regression_system

logger = logging.getLogger(__name__)

KINDS = ("coverage", "type1", "diagnostics")
METHODS = (THREE_STEP, DEBIASED, GROUP_L)
TESTS = ("bootstrap", "chi2", "both")
SCALES = ("full", "desk")
GIBBS_KEYS = ("burn_in", "thinning", "chains")


@dataclass(frozen=True)
class ExperimentConfig:
    """
    One simulation scenario

    edges and node use 1-based labels. expected maps a target label
    ("(1,2)", "bootstrap", "n=50000") to an acceptance window [lo, hi].
    """
    scenario: str = "custom"
    kind: str = "coverage"
    family: str = Family.GAUSSIAN.value
    p: int = 50
    n: int = 300
    k: int = 4
    weights: tuple = (0.5, 0.3)
    node_params: tuple = None
    weight_fn: str = None
    edges: tuple = ((1, 2),)
    node: int = 1
    method: str = THREE_STEP
    test: str = "bootstrap"
    reps: int = 100
    lambda1_c: float = None
    lambda2_c: float = None
    alpha: float = ALPHA
    level: float = CI_LEVEL
    B: int = BOOTSTRAP_DRAWS
    seed: int = 0
    n_grid: tuple = ()
    gibbs: dict = field(default_factory=dict)
    drop_largest: int = 0
    scale: str = "full"
    expected: dict = field(default_factory=dict)
    out: str = None
    n_workers: int = N_WORKERS
    use_cache: bool = True

    def __post_init__(self):
        object.__setattr__(self, "weights", _freeze(self.weights))
        object.__setattr__(self, "edges", tuple(tuple(int(v) for v in e) for e in self.edges))
        object.__setattr__(self, "n_grid", tuple(int(v) for v in self.n_grid))
        if self.node_params is not None:
            object.__setattr__(self, "node_params", tuple(float(v) for v in self.node_params))
        self.validate()

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")
        try:
            family = Family(self.family)
        except ValueError as e:
            raise ConfigError(f"unknown family {self.family!r}") from e
        if self.weight_fn is not None:
            try:
                WeightFn(self.weight_fn)
            except ValueError as e:
                raise ConfigError(f"unknown weight function {self.weight_fn!r}") from e
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.test not in TESTS:
            raise ConfigError(f"test must be one of {TESTS}, got {self.test!r}")
        if self.scale not in SCALES:
            raise ConfigError(f"scale must be one of {SCALES}, got {self.scale!r}")
        if self.reps < 1:
            raise ConfigError(f"reps must be >= 1, got {self.reps}")
        if self.n < 1 or any(v < 1 for v in self.n_grid):
            raise ConfigError("sample sizes must be positive")
        if self.p < 2:
            raise ConfigError(f"p must be >= 2, got {self.p}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must be in (0, 1), got {self.alpha}")
        if not 0.0 < self.level < 1.0:
            raise ConfigError(f"level must be in (0, 1), got {self.level}")
        if self.B < 1:
            raise ConfigError(f"B must be >= 1, got {self.B}")
        if self.n_workers < 1:
            raise ConfigError(f"n_workers must be >= 1, got {self.n_workers}")
        if self.drop_largest < 0:
            raise ConfigError(f"drop_largest must be >= 0, got {self.drop_largest}")
        for c in (self.lambda1_c, self.lambda2_c):
            if c is not None and c < 0:
                raise ConfigError(f"penalty constants must be non-negative, got {c}")
        unknown = set(self.gibbs) - set(GIBBS_KEYS)
        if unknown:
            raise ConfigError(f"unknown gibbs settings {sorted(unknown)}")
        if not self.edges:
            raise ConfigError("at least one target edge is required")
        for a, b in self.edges:
            if a == b or not (1 <= a <= self.p and 1 <= b <= self.p):
                raise ConfigError(f"edge ({a},{b}) is not valid for p={self.p}")
        if not 1 <= self.node <= self.p:
            raise ConfigError(f"node {self.node} is not valid for p={self.p}")
        L = len(family_info(family).edge_stats)
        if self.method == DEBIASED and L > 1:
            raise ConfigError("the debiased estimator needs an L = 1 family")

    # -- construction ----------------------------------------------------------

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        try:
            return cls(**data)
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"invalid config: {e}") from e

    @classmethod
    def from_json(cls, path):
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        try:
            with open(path) as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
        if "preset" in data:
            base = preset(data.pop("preset"), data.pop("scale", "full"))
            return base.with_overrides(**data)
        return cls.from_dict(data)

    def with_overrides(self, **overrides):
        """Copy with every non-None override applied"""
        overrides = {k: v for k, v in overrides.items() if v is not None}
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        try:
            return replace(self, **overrides)
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"invalid override: {e}") from e

    def to_dict(self):
        d = asdict(self)
        d["weights"] = _thaw(self.weights)
        d["edges"] = [list(e) for e in self.edges]
        d["n_grid"] = list(self.n_grid)
        d["node_params"] = None if self.node_params is None else list(self.node_params)
        return d

    # -- derived ---------------------------------------------------------------

    def model_spec(self):
        return knn_graph_spec(self.family, self.p, self.k, np.asarray(_thaw(self.weights), dtype=float),
                              self.node_params, self.weight_fn)

    def gibbs_config(self, seed):
        if Family(self.family) is Family.GAUSSIAN:
            return None
        return GibbsConfig.for_family(self.family, seed=seed, **self.gibbs)

    def target_edges(self):
        """0-based target edges"""
        return [(a - 1, b - 1) for a, b in self.edges]

    def out_dir(self):
        return self.out or os.path.join(RESULTS_DIR, self.scenario)


def _freeze(value):
    if isinstance(value, (list, tuple, np.ndarray)):
        return tuple(_freeze(v) for v in value)
    return float(value)


def _thaw(value):
    if isinstance(value, tuple):
        return [_thaw(v) for v in value]
    return value


# =============================================================================
# Presets
# =============================================================================

TARGET_EDGES = ((1, 2), (1, 3), (1, 4), (1, 10))


def _label(edge):
    return f"({edge[0]},{edge[1]})"


def _windows(rates, half_width):
    return {_label(e): [round(r - half_width, 4), round(r + half_width, 4)] for e, r in zip(TARGET_EDGES, rates)}


PRESETS = {
    "gaussian_coverage": dict(
        kind="coverage", family="gaussian", p=50, n=300, k=4, weights=(0.5, 0.3),
        edges=TARGET_EDGES, reps=500, expected=_windows((0.954, 0.924, 0.938, 0.932), 0.03)),
    "nonneg_debiased_coverage": dict(
        kind="coverage", family="nonneg_gaussian", p=100, n=150, k=4, weights=(0.3, 0.1),
        weight_fn="log_plus_one", method=DEBIASED, edges=TARGET_EDGES, reps=200,
        expected={_label(e): [0.90, 0.98] for e in TARGET_EDGES}),
    "normal_conditionals_coverage": dict(
        kind="coverage", family="normal_conditionals_l1", p=100, n=500, k=4, weights=(-0.2, -0.2),
        node_params=(0.4, -2.0), edges=TARGET_EDGES, reps=500,
        expected=_windows((0.932, 0.934, 0.946, 0.950), 0.03)),
    "exponential_coverage": dict(
        kind="coverage", family="exponential", p=100, n=1000, k=2, weights=(0.3,), node_params=(2.0,),
        weight_fn="log_plus_one", edges=TARGET_EDGES, reps=200,
        expected={"(1,2)": [0.89, 0.98], **{k: v for k, v in _windows(
            (0.942, 0.916, 0.926, 0.924), 0.03).items() if k != "(1,2)"}}),
    "gaussian_type1": dict(
        kind="type1", family="gaussian", p=50, n=2000, k=4, weights=(0.5, 0.3), node=1, reps=200,
        test="bootstrap", expected={"bootstrap": [0.01, 0.10]}),
    "nonneg_type1": dict(
        kind="type1", family="nonneg_gaussian", p=50, n=2000, k=4, weights=(0.3, 0.1),
        weight_fn="log_plus_one", node=1, reps=200, test="bootstrap", expected={"bootstrap": [0.01, 0.10]}),
    "general_l_type1": dict(
        kind="type1", family="normal_conditionals_l2", p=50, n=4000, k=4,
        weights=((0.2, 0.1), (-0.2, -0.2)), node_params=(0.4, -2.0), method=GROUP_L, node=1, reps=150,
        test="both", expected={"bootstrap": [0.01, 0.11], "chi2": [0.02, 0.13]}),
    "nonneg_diagnostics": dict(
        kind="diagnostics", family="nonneg_gaussian", p=20, n=50000, k=0, weights=(),
        weight_fn="log_plus_one", edges=((1, 2),), reps=500, n_grid=(500, 2000, 10000, 50000),
        expected={"n=50000": [9.99, 12.21]}),
    "normal_conditionals_diagnostics": dict(
        kind="diagnostics", family="normal_conditionals_l1", p=20, n=50000, k=4, weights=(-0.2, -0.2),
        node_params=(0.4, -2.0), edges=((1, 2),), reps=500, n_grid=(500, 2000, 10000, 50000),
        drop_largest=5),
    "exponential_diagnostics": dict(
        kind="diagnostics", family="exponential", p=20, n=50000, k=2, weights=(0.3,), node_params=(2.0,),
        weight_fn="log_plus_one", edges=((1, 2),), reps=500, n_grid=(500, 2000, 10000, 50000),
        drop_largest=4),
}


def preset(name, scale="full"):
    """
    Build a preset scenario

    Desk scale halves the replication count and widens each rate window by
    one binomial standard error at the reduced count.

    Args:
        name (str): Preset id (see PRESETS)
        scale (str): "full" or "desk"

    Returns:
        ExperimentConfig: The scenario
    """
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    if scale not in SCALES:
        raise ConfigError(f"scale must be one of {SCALES}, got {scale!r}")
    params = dict(PRESETS[name], scenario=name, scale=scale)
    if scale == "desk":
        reps = max(1, math.ceil(params["reps"] / 2))
        params["reps"] = reps
        if params["kind"] != "diagnostics":
            widened = {}
            for key, (lo, hi) in params.get("expected", {}).items():
                centre = (lo + hi) / 2.0
                se = math.sqrt(centre * (1.0 - centre) / reps)
                widened[key] = [round(max(lo - se, 0.0), 4), round(min(hi + se, 1.0), 4)]
            params["expected"] = widened
    return ExperimentConfig(**params)


# =============================================================================
# Report
# =============================================================================

@dataclass
class ExperimentReport:
    """Per-replication records with the aggregates and provenance derived from them"""
    config: dict
    kind: str
    records: list
    aggregates: list
    provenance: dict

    def records_frame(self):
        return pd.DataFrame(self.records)

    def to_dict(self):
        return {
            "config": self.config,
            "kind": self.kind,
            "aggregates": self.aggregates,
            "provenance": self.provenance,
        }

    def write(self, out_dir):
        """
        Write records.csv (+ parquet), summary.json and report.txt

        Returns:
            dict: Written paths by role
        """
        ensure_dir(out_dir)
        paths = {
            "records": os.path.join(out_dir, "records.csv"),
            "summary": os.path.join(out_dir, "summary.json"),
            "report": os.path.join(out_dir, "report.txt"),
        }
        write_records(self.records, paths["records"])
        write_json(self.to_dict(), paths["summary"])
        with open(paths["report"], "w") as f:
            f.write(format_experiment_report(self))
        logger.info("Report written to %s", out_dir)
        return paths


def derive_seed(master_seed, index, stream="data"):
    """Replication seed from (master seed, replication index, stream tag)"""
    digest = hashlib.sha256(f"{master_seed}:{index}:{stream}".encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def _provenance(cfg, spec):
    return {
        "config_hash": config_hash(cfg.to_dict()),
        "spec_hash": spec_hash(spec),
        "seed": cfg.seed,
        "version": VERSION,
    }


def _penalties(cfg, spec, n):
    dim = edge_index_map(spec, 0, 1).dim
    lam1 = None if cfg.lambda1_c is None else default_lambda(spec, n, dim, cfg.lambda1_c)
    lam2 = None if cfg.lambda2_c is None else default_lambda(spec, n, dim, cfg.lambda2_c)
    return lam1, lam2


def _map(func, tasks, n_workers):
    """Ordered map, over a process pool when n_workers > 1"""
    if n_workers <= 1 or len(tasks) <= 1:
        return [func(t) for t in tasks]
    with Pool(min(n_workers, len(tasks))) as pool:
        return pool.map(func, tasks)


def _dataset(cfg, spec, n, seed):
    return get_or_create_dataset(cfg.scenario, spec, n, seed, cfg.gibbs_config(seed), use_cache=cfg.use_cache)


def _failure(base, e):
    logger.warning("Replication %d failed (%s): %s", base["rep"], type(e).__name__, e)
    return dict(base, status="failed", error=f"{type(e).__name__}: {e}")


# =============================================================================
# Coverage
# =============================================================================

def _estimate_edge(cfg, spec, data, a, b, lam1, lam2):
    if cfg.method == DEBIASED:
        half1, half2 = split_halves(data)
        return debiased_edge(spec, half1, half2, a, b, lam1, lam2)
    if cfg.method == GROUP_L:
        return three_step_edge_groupL(spec, data, a, b, lam1, lam2)
    return three_step_edge(spec, data, a, b, lam1, lam2)


def _coverage_replication(task):
    cfg, spec, rep = task
    seed = derive_seed(cfg.seed, rep)
    n_total = 2 * cfg.n if cfg.method == DEBIASED else cfg.n
    lam1, lam2 = _penalties(cfg, spec, cfg.n)
    records = []
    try:
        data = _dataset(cfg, spec, n_total, seed)
    except ScoreInfError as e:
        return [_failure(dict(rep=rep, seed=seed, edge=_label(edge), l=l, covered=False), e)
                for edge in cfg.edges for l in range(spec.L)]

    for (a, b), edge in zip(cfg.target_edges(), cfg.edges):
        truth = true_edge_value(spec, a, b)
        for_edge = []
        try:
            est = _estimate_edge(cfg, spec, data, a, b, lam1, lam2)
            ci = confidence_interval(est, cfg.level)
            covered = ci.covers(truth)
            se = est.std_error()
            for l in range(est.L):
                for_edge.append(dict(
                    rep=rep, seed=seed, edge=_label(edge), l=l, truth=float(truth[l]),
                    estimate=float(est.theta_tilde[l]), se=float(se[l]),
                    lower=float(ci.lower[l]), upper=float(ci.upper[l]), width=float(ci.width[l]),
                    covered=bool(covered[l]), p_value=p_value(est, truth[l], l),
                    converged=bool(est.converged), status="ok", error=""))
        except (ScoreInfError, np.linalg.LinAlgError) as e:
            for_edge = [_failure(dict(rep=rep, seed=seed, edge=_label(edge), l=l, truth=float(truth[l]),
                                      covered=False), e) for l in range(spec.L)]
        records.extend(for_edge)
    return records


def aggregate_coverage(records, reps, expected=None):
    """
    Coverage per (edge, l): covered count / R, failures counted as not covered

    Args:
        records (list): Per-replication records
        reps (int): Replication count R
        expected (dict): Optional windows by edge label

    Returns:
        list: One aggregate dict per target coordinate
    """
    expected = expected or {}
    df = pd.DataFrame(records)
    out = []
    for (edge, l), group in df.groupby(["edge", "l"], sort=False):
        ok = group[group["status"] == "ok"]
        covered = int(group["covered"].astype(bool).sum())
        row = {
            "edge": edge,
            "l": int(l),
            "reps": int(reps),
            "covered": covered,
            "coverage": covered / reps,
            "failures": int((group["status"] != "ok").sum()),
            "truth": float(group["truth"].iloc[0]),
            "mean_estimate": float(ok["estimate"].mean()) if len(ok) else float("nan"),
            "mean_width": float(ok["width"].mean()) if len(ok) else float("nan"),
        }
        _check_window(row, expected.get(edge), row["coverage"])
        out.append(row)
    return out


def _check_window(row, window, value):
    if window is None:
        return
    lo, hi = window
    row["window"] = [lo, hi]
    row["within_window"] = bool(lo <= value <= hi)


def run_coverage(cfg):
    """
    Coverage experiment: sample, estimate, CI and coverage per target edge

    Args:
        cfg (ExperimentConfig): Scenario (kind "coverage")

    Returns:
        ExperimentReport: Records and per-edge coverage rates
    """
    spec = cfg.model_spec()
    logger.info("=" * 70)
    logger.info("Coverage run %s: %s p=%d n=%d R=%d method=%s",
                cfg.scenario, cfg.family, cfg.p, cfg.n, cfg.reps, cfg.method)
    logger.info("=" * 70)

    logger.info("Step 1: Running %d replications on %d worker(s)...", cfg.reps, cfg.n_workers)
    chunks = _map(_coverage_replication, [(cfg, spec, r) for r in range(cfg.reps)], cfg.n_workers)
    records = [rec for chunk in chunks for rec in chunk]

    logger.info("Step 2: Aggregating coverage...")
    aggregates = aggregate_coverage(records, cfg.reps, cfg.expected)
    for row in aggregates:
        logger.info("  %s[l=%d]: coverage %.3f (%d failures)", row["edge"], row["l"], row["coverage"], row["failures"])
    return ExperimentReport(cfg.to_dict(), "coverage", records, aggregates, _provenance(cfg, spec))


# =============================================================================
# Type I error
# =============================================================================

def _type1_replication(task):
    cfg, spec, rep = task
    seed = derive_seed(cfg.seed, rep)
    a = cfg.node - 1
    null = spec.edge_params[:, a, :]
    lam1, lam2 = _penalties(cfg, spec, cfg.n)
    tests = ("bootstrap", "chi2") if cfg.test == "both" else (cfg.test,)
    records = []
    try:
        data = _dataset(cfg, spec, cfg.n, seed)
    except ScoreInfError as e:
        return [_failure(dict(rep=rep, seed=seed, test=t, reject=False), e) for t in tests]

    for test in tests:
        base = dict(rep=rep, seed=seed, test=test)
        try:
            if test == "bootstrap":
                res = simultaneous_test(spec, data, a, null, cfg.alpha, cfg.B,
                                        seed=derive_seed(cfg.seed, rep, "bootstrap"),
                                        lambda1=lam1, lambda2=lam2)
            else:
                res = chi2_simultaneous(spec, data, a, null, cfg.alpha, lambda1=lam1, lambda2=lam2)
            records.append(dict(base, statistic=res.statistic, critical_value=res.critical_value,
                                p_value=res.p_value, reject=bool(res.reject), status="ok", error=""))
        except (ScoreInfError, np.linalg.LinAlgError) as e:
            records.append(_failure(dict(base, reject=False), e))
    return records


def aggregate_type1(records, reps, expected=None):
    """Rejection rate per test: rejections / R"""
    expected = expected or {}
    df = pd.DataFrame(records)
    out = []
    for test, group in df.groupby("test", sort=False):
        rejections = int(group["reject"].astype(bool).sum())
        row = {
            "test": test,
            "reps": int(reps),
            "rejections": rejections,
            "rate": rejections / reps,
            "failures": int((group["status"] != "ok").sum()),
        }
        _check_window(row, expected.get(test), row["rate"])
        out.append(row)
    return out


def run_type1(cfg):
    """
    Type-I experiment: simultaneous test of node `cfg.node` at the true parameters

    Args:
        cfg (ExperimentConfig): Scenario (kind "type1")

    Returns:
        ExperimentReport: Records and rejection rates
    """
    spec = cfg.model_spec()
    logger.info("=" * 70)
    logger.info("Type-I run %s: %s p=%d n=%d R=%d test=%s alpha=%.3f",
                cfg.scenario, cfg.family, cfg.p, cfg.n, cfg.reps, cfg.test, cfg.alpha)
    logger.info("=" * 70)

    logger.info("Step 1: Running %d replications on %d worker(s)...", cfg.reps, cfg.n_workers)
    chunks = _map(_type1_replication, [(cfg, spec, r) for r in range(cfg.reps)], cfg.n_workers)
    records = [rec for chunk in chunks for rec in chunk]

    logger.info("Step 2: Aggregating rejection rates...")
    aggregates = aggregate_type1(records, cfg.reps, cfg.expected)
    for row in aggregates:
        logger.info("  %s: rate %.3f (%d failures)", row["test"], row["rate"], row["failures"])
    return ExperimentReport(cfg.to_dict(), "type1", records, aggregates, _provenance(cfg, spec))


# =============================================================================
# Assumption diagnostics
# =============================================================================

def inverse_row_l1(system):
    """l1 norms of the target rows of the exact inverse of Gamma_hat"""
    targets = list(system.index_map.target_indices)
    try:
        M = np.linalg.inv(system.gamma_hat)[targets]
    except np.linalg.LinAlgError as e:
        raise SingularSystemError(f"Gamma_hat is singular for edge {system.index_map.edge}") from e
    return np.abs(M).sum(axis=1)


def small_components(system, drop_largest):
    """
    Unpenalized decorrelation vector with its largest entries removed

    Returns:
        tuple: (mean |gamma|, max |gamma|) over the remaining components
    """
    target = system.index_map.target_indices[0]
    A, bvec = nuisance_regression_system(system, target)
    try:
        gamma = np.linalg.solve(A, bvec)
    except np.linalg.LinAlgError as e:
        raise SingularSystemError(f"decorrelation system is singular for edge {system.index_map.edge}") from e
    mags = np.sort(np.abs(gamma))[::-1]
    rest = mags[drop_largest:]
    if rest.size == 0:
        raise ConfigError(f"drop_largest={drop_largest} leaves no components of {mags.size}")
    return float(rest.mean()), float(rest.max())


def _diagnostic_replication(task):
    cfg, spec, n, rep = task
    seed = derive_seed(cfg.seed, f"{n}:{rep}")
    a, b = cfg.target_edges()[0]
    base = dict(n=n, rep=rep, seed=seed)
    try:
        system = assemble(spec, _dataset(cfg, spec, n, seed), a, b)
        if spec.family is Family.NONNEG_GAUSSIAN:
            norms = inverse_row_l1(system)
            return dict(base, value=float(norms.max()), status="ok", error="")
        mean, mx = small_components(system, cfg.drop_largest)
        return dict(base, small_mean=mean, small_max=mx, status="ok", error="")
    except (ScoreInfError, np.linalg.LinAlgError) as e:
        return _failure(base, e)


def aggregate_diagnostics(records, family, expected=None):
    """
    Per-n summaries

    Row-l1 statistic: mean and max over replications. Small-component
    statistic: replication averages of the per-run mean and max. A final
    row flags whether the averaged mean is non-increasing in n.
    """
    expected = expected or {}
    df = pd.DataFrame(records)
    ok = df[df["status"] == "ok"]
    out = []
    for n, group in ok.groupby("n", sort=True):
        if Family(family) is Family.NONNEG_GAUSSIAN:
            row = {"n": int(n), "statistic": "inverse_row_l1",
                   "mean": float(group["value"].mean()), "max": float(group["value"].max())}
        else:
            row = {"n": int(n), "statistic": "small_components",
                   "mean": float(group["small_mean"].mean()), "max": float(group["small_max"].mean())}
        row["reps"] = int(len(group))
        row["failures"] = int(((df["n"] == n) & (df["status"] != "ok")).sum())
        _check_window(row, expected.get(f"n={int(n)}"), row["mean"])
        out.append(row)
    means = [row["mean"] for row in out]
    out.append({"statistic": "trend", "non_increasing": bool(all(x >= y for x, y in zip(means, means[1:])))})
    return out


def run_diagnostics(cfg):
    """
    Sparsity diagnostics over the sample-size grid

    Non-negative Gaussian: l1 norm of the target row of Gamma_hat^{-1}.
    Other families: mean/max magnitude of the unpenalized decorrelation
    vector after dropping its `drop_largest` largest entries.
    """
    spec = cfg.model_spec()
    grid = cfg.n_grid or (cfg.n,)
    logger.info("=" * 70)
    logger.info("Diagnostics run %s: %s p=%d n in %s R=%d", cfg.scenario, cfg.family, cfg.p, list(grid), cfg.reps)
    logger.info("=" * 70)

    logger.info("Step 1: Running %d replications per sample size...", cfg.reps)
    tasks = [(cfg, spec, n, r) for n in grid for r in range(cfg.reps)]
    records = _map(_diagnostic_replication, tasks, cfg.n_workers)

    logger.info("Step 2: Aggregating...")
    aggregates = aggregate_diagnostics(records, cfg.family, cfg.expected)
    for row in aggregates[:-1]:
        logger.info("  n=%d: mean %.4g, max %.4g", row["n"], row["mean"], row["max"])
    return ExperimentReport(cfg.to_dict(), "diagnostics", records, aggregates, _provenance(cfg, spec))


def run_experiment(cfg):
    """Dispatch on cfg.kind"""
    runners = {"coverage": run_coverage, "type1": run_type1, "diagnostics": run_diagnostics}
    return runners[cfg.kind](cfg)


# =============================================================================
# Histograms
# =============================================================================

def emit_histogram(estimates, bins=20, path=None):
    """
    Bin counts of estimates across replications

    Args:
        estimates (array-like): One value per replication
        bins (int): Number of bins
        path (str): Optional CSV output path

    Returns:
        pandas.DataFrame: bin_left, bin_right, count
    """
    values = np.asarray(estimates, dtype=float).ravel()
    values = values[np.isfinite(values)]
    if bins < 1:
        raise ConfigError(f"bins must be >= 1, got {bins}")
    counts, edges = np.histogram(values, bins=bins)
    df = pd.DataFrame({"bin_left": edges[:-1], "bin_right": edges[1:], "count": counts})
    if path:
        ensure_dir(os.path.dirname(path))
        df.to_csv(path, index=False)
    return df


# =============================================================================
# Dataset analysis
# =============================================================================

@dataclass
class GraphReport:
    """All-pairs edge table of a dataset and the graph of edges below the threshold"""
    family: str
    n: int
    p: int
    threshold: float
    names: list
    edges: pd.DataFrame
    selected: list
    degrees: dict

    def write(self, out_dir):
        ensure_dir(out_dir)
        paths = {
            "edges": os.path.join(out_dir, "edge_estimates.csv"),
            "edge_list": os.path.join(out_dir, "edge_list.csv"),
            "graph": os.path.join(out_dir, "graph.json"),
            "report": os.path.join(out_dir, "report.txt"),
        }
        self.edges.to_csv(paths["edges"], index=False)
        self.edges[self.edges["selected"]][["name_a", "name_b", "estimate", "p_value"]].to_csv(
            paths["edge_list"], index=False)
        write_json({"family": self.family, "n": self.n, "p": self.p, "threshold": self.threshold,
                    "nodes": self.names, "edges": [list(e) for e in self.selected],
                    "degrees": self.degrees}, paths["graph"])
        with open(paths["report"], "w") as f:
            f.write(format_graph_report(self))
        return paths


def _edge_p_value(est):
    """Normal p-value for L = 1, chi-square Wald p-value of the block otherwise"""
    if est.L == 1:
        return p_value(est, 0.0)
    try:
        stat = float(est.n * est.theta_tilde @ np.linalg.solve(est.V_hat, est.theta_tilde))
    except np.linalg.LinAlgError:
        return float("nan")
    return float(chi2.sf(stat, est.L))


def analyze_dataset(data, family, threshold=0.01, header=False, weight_fn=None,
                    lambda1=None, lambda2=None, level=CI_LEVEL):
    """
    Edge p-values for every pair of a dataset and the thresholded graph

    No preprocessing is applied to the data.

    Args:
        data (str, DataMatrix or numpy.ndarray): CSV path or samples
        family (Family or str): Model family fitted to the data
        threshold (float): Edges with p-value strictly below are kept
        header (bool): CSV first row holds node names
        weight_fn (WeightFn): Weight function (family default otherwise)

    Returns:
        GraphReport: Edge table, selected edges and node degrees
    """
    family = Family(family)
    if isinstance(data, str):
        dm = load_data_matrix(data, family, header=header)
    elif isinstance(data, DataMatrix):
        dm = data
    else:
        dm = DataMatrix(data, family_info(family).domain)
    if dm.p < 2:
        raise DomainError(f"need at least two nodes, got p={dm.p}")
    spec = ModelSpec.template(family, dm.p, weight_fn)
    dm = as_data_matrix(dm, spec)
    names = dm.node_names()
    estimator = three_step_edge_groupL if spec.L > 1 else three_step_edge

    logger.info("=" * 70)
    logger.info("Analyzing dataset: n=%d, p=%d, family=%s, threshold=%g", dm.n, dm.p, family.value, threshold)
    logger.info("=" * 70)
    logger.info("Step 1: Estimating %d edges...", dm.p * (dm.p - 1) // 2)
    rows = []
    for a in range(dm.p):
        for b in range(a + 1, dm.p):
            row = {"node_a": a + 1, "node_b": b + 1, "name_a": names[a], "name_b": names[b]}
            try:
                est = estimator(spec, dm, a, b, lambda1, lambda2)
                ci = confidence_interval(est, level)
                row.update(estimate=float(est.theta_tilde[0]), se=float(est.std_error()[0]),
                           lower=float(ci.lower[0]), upper=float(ci.upper[0]),
                           p_value=_edge_p_value(est), status="ok")
            except (ScoreInfError, np.linalg.LinAlgError) as e:
                logger.warning("Edge (%s, %s) failed: %s", names[a], names[b], e)
                row.update(estimate=float("nan"), se=float("nan"), lower=float("nan"),
                           upper=float("nan"), p_value=float("nan"), status=f"failed: {e}")
            rows.append(row)

    logger.info("Step 2: Thresholding at p < %g...", threshold)
    edges = pd.DataFrame(rows)
    edges["selected"] = edges["p_value"].lt(threshold) & edges["p_value"].notna()
    selected = [(r.name_a, r.name_b) for r in edges[edges["selected"]].itertuples()]
    degrees = {name: 0 for name in names}
    for u, v in selected:
        degrees[u] += 1
        degrees[v] += 1
    logger.info("  %d of %d edges selected", len(selected), len(edges))
    return GraphReport(family.value, dm.n, dm.p, float(threshold), names, edges, selected, degrees)

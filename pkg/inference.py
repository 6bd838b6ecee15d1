"""Simultaneous inference: multiplier bootstrap tests, support recovery, two-sample tests"""
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2

from config import ALPHA, BOOTSTRAP_CHUNK, BOOTSTRAP_DRAWS
from errors import DegenerateVarianceError, SingularSystemError
from estimators import three_step_edge, three_step_edge_groupL
from models import check_edge
from score_engine import as_data_matrix, assemble

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class InfluenceMatrix:
    """
    Influence rows z_i (n x m), one column per tested coordinate

    z_ic = -w_c . (Gamma(x_i) theta + g(x_i)) / sigma_c
    """
    node: int
    columns: tuple
    Z: np.ndarray = field(repr=False)

    @property
    def n(self):
        return self.Z.shape[0]


@dataclass(frozen=True, eq=False)
class BootstrapTestResult:
    statistic: float
    critical_value: float
    p_value: float
    B: int
    alpha: float
    per_edge_stats: dict
    reject: bool
    two_sided: bool = True
    one_sided_statistic: float = None
    one_sided_critical_value: float = None
    draws: np.ndarray = field(default=None, repr=False)
    estimates: tuple = field(default=(), repr=False)

    def to_dict(self):
        return {
            "statistic": self.statistic,
            "critical_value": self.critical_value,
            "p_value": self.p_value,
            "B": self.B,
            "alpha": self.alpha,
            "reject": bool(self.reject),
            "two_sided": self.two_sided,
            "one_sided_statistic": self.one_sided_statistic,
            "one_sided_critical_value": self.one_sided_critical_value,
            "per_edge_stats": {str(k): float(v) for k, v in self.per_edge_stats.items()},
        }

    def to_json(self):
        return json.dumps(self.to_dict())


@dataclass(frozen=True)
class XiaTestResult:
    statistic: float
    shifted: float
    p_value: float

    def to_dict(self):
        return {"statistic": self.statistic, "shifted": self.shifted, "p_value": self.p_value}


@dataclass(frozen=True)
class Chi2TestResult:
    statistic: float
    critical_value: float
    p_value: float
    alpha: float
    per_edge_stats: dict
    reject: bool

    def to_dict(self):
        return {
            "statistic": self.statistic,
            "critical_value": self.critical_value,
            "p_value": self.p_value,
            "alpha": self.alpha,
            "reject": bool(self.reject),
            "per_edge_stats": {str(k): float(v) for k, v in self.per_edge_stats.items()},
        }


# =============================================================================
# Multiplier bootstrap
# =============================================================================

def multiplier_stream(seed):
    """Counter-based normal stream; the same seed always yields the same multipliers"""
    return np.random.Generator(np.random.Philox(seed))


def bootstrap_max(Z, B=BOOTSTRAP_DRAWS, seed=0, two_sided=True, chunk=BOOTSTRAP_CHUNK):
    """
    Draws of max_c n^{-1/2} sum_i z_ic e_i with e_i iid N(0, 1)

    Args:
        Z (numpy.ndarray): Influence rows (n x m)
        B (int): Number of draws
        seed (int): Multiplier seed
        two_sided (bool): Maximize absolute values
        chunk (int): Draws generated per block

    Returns:
        numpy.ndarray: B draws
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    n = Z.shape[0]
    rng = multiplier_stream(seed)
    draws = np.empty(B)
    for start in range(0, B, chunk):
        size = min(chunk, B - start)
        E = rng.standard_normal((size, n))
        S = E @ Z / math.sqrt(n)
        draws[start:start + size] = np.abs(S).max(axis=1) if two_sided else S.max(axis=1)
    return draws


def bootstrap_critical_value(draws, alpha):
    """Order statistic ceil((1 - alpha) B) of the sorted draws"""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    ordered = np.sort(draws)
    k = max(int(math.ceil((1.0 - alpha) * len(ordered))), 1)
    return float(ordered[k - 1])


def bootstrap_p_value(draws, statistic):
    return float((1 + np.count_nonzero(draws >= statistic)) / (len(draws) + 1))


def influence_columns(system, est, theta):
    """-w_l . (Gamma(x_i) theta + g(x_i)) / sigma_l for every target l, shape (n, L)"""
    R = system.sample_residuals(theta)
    return -(R @ est.w_tilde.T) / est.sigma_n


def _null_theta(est, null):
    theta = np.array(est.theta_full, dtype=float)
    theta[list(est.target_indices)] = null
    return theta


def _null_vector(null_values, b, L):
    if null_values is None:
        return np.zeros(L)
    if isinstance(null_values, dict):
        return np.broadcast_to(np.asarray(null_values.get(b, 0.0), dtype=float), (L,)).copy()
    arr = np.asarray(null_values, dtype=float)
    if arr.ndim == 1:
        return np.full(L, arr[b])
    return arr[:, b].copy()


def _estimator_for(spec):
    return three_step_edge_groupL if spec.L > 1 else three_step_edge


def neighborhood(spec, data, a, null_values=None, lambda1=None, lambda2=None, center=False):
    """
    Three-step estimates for every edge (a, b) plus influence columns at the null

    Returns:
        tuple: (estimates by b, InfluenceMatrix with columns (b, l))
    """
    dm = as_data_matrix(data, spec)
    check_edge(spec.p, a, (a + 1) % spec.p)
    estimator = _estimator_for(spec)
    estimates, columns, blocks = {}, [], []
    for b in range(spec.p):
        if b == a:
            continue
        system = assemble(spec, dm, a, b, center=center)
        est = estimator(spec, dm, a, b, lambda1, lambda2, system=system)
        null = _null_vector(null_values, b, est.L)
        blocks.append(influence_columns(system, est, _null_theta(est, null)))
        columns.extend((b, l) for l in range(est.L))
        estimates[b] = est
    return estimates, InfluenceMatrix(a, tuple(columns), np.hstack(blocks))


def simultaneous_test(spec, data, a, null_values=None, alpha=ALPHA, B=BOOTSTRAP_DRAWS, seed=0,
                      two_sided=True, lambda1=None, lambda2=None, center=False):
    """
    Bootstrap test of H0: theta_ab = null_ab for all b != a

    Two-sided statistic max_(b,l) sqrt(n) |theta_tilde - null|; the one-sided
    version max sqrt(n) (theta_tilde - null) is reported alongside. For L > 1
    the (b, l) coordinates are stacked.

    Args:
        spec (ModelSpec): Model specification
        data (DataMatrix or numpy.ndarray): Samples
        a (int): Tested node (0-based)
        null_values: None (all zero), length-p array, L x p array or {b: value}
        alpha (float): Level
        B (int): Bootstrap draws
        seed (int): Multiplier seed
        two_sided (bool): Which statistic decides the rejection

    Returns:
        BootstrapTestResult: Both statistics and critical values
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if B < 1:
        raise ValueError(f"B must be positive, got {B}")
    estimates, infl = neighborhood(spec, data, a, null_values, lambda1, lambda2, center)
    n = infl.n
    diffs = {}
    for (b, l) in infl.columns:
        est = estimates[b]
        diffs[(b, l)] = math.sqrt(n) * (est.theta_tilde[l] - _null_vector(null_values, b, est.L)[l])

    stat2 = max(abs(v) for v in diffs.values())
    stat1 = max(diffs.values())
    draws2 = bootstrap_max(infl.Z, B, seed, two_sided=True)
    draws1 = bootstrap_max(infl.Z, B, seed, two_sided=False)
    crit2 = bootstrap_critical_value(draws2, alpha)
    crit1 = bootstrap_critical_value(draws1, alpha)

    if two_sided:
        statistic, crit, draws = stat2, crit2, draws2
    else:
        statistic, crit, draws = stat1, crit1, draws1
    keys = {k: abs(v) for k, v in diffs.items()}
    if spec.L == 1:
        keys = {b: v for (b, _), v in keys.items()}
    logger.debug("Node %d: statistic %.4f, critical value %.4f", a, statistic, crit)
    return BootstrapTestResult(
        statistic=float(statistic), critical_value=crit,
        p_value=bootstrap_p_value(draws, statistic), B=B, alpha=alpha,
        per_edge_stats=keys, reject=bool(statistic >= crit), two_sided=two_sided,
        one_sided_statistic=float(stat1), one_sided_critical_value=crit1,
        draws=draws, estimates=tuple(estimates.values()),
    )


def isolated_node_test(spec, data, a, alpha=ALPHA, B=BOOTSTRAP_DRAWS, seed=0, **kwargs):
    """Test H0: node a is conditionally independent of every other node"""
    return simultaneous_test(spec, data, a, None, alpha, B, seed, **kwargs)


def support_threshold(est, p):
    """tau = sqrt(2 V log p / n) per target coordinate"""
    return np.sqrt(2.0 * np.maximum(np.diag(est.V_hat), 0.0) * math.log(p) / est.n)


def support_recovery(spec, data, a, estimates=None, lambda1=None, lambda2=None):
    """
    Recovered neighborhood {b : |theta_tilde_ab| > tau_ab}

    Args:
        spec (ModelSpec): Model specification
        data (DataMatrix or numpy.ndarray): Samples
        a (int): Node (0-based)
        estimates (dict): Optional precomputed estimates by b

    Returns:
        set: 0-based neighbors
    """
    if estimates is None:
        dm = as_data_matrix(data, spec)
        estimator = _estimator_for(spec)
        estimates = {b: estimator(spec, dm, a, b, lambda1, lambda2) for b in range(spec.p) if b != a}
    recovered = set()
    for b, est in estimates.items():
        if np.any(np.abs(est.theta_tilde) > support_threshold(est, spec.p)):
            recovered.add(int(b))
    return recovered


# =============================================================================
# Two-sample tests
# =============================================================================

def all_edge_estimates(spec, data, lambda1=None, lambda2=None, center=False):
    """
    Three-step estimates and fitted-value influence columns for every pair a < b

    Returns:
        tuple: (list of estimates, n x (#pairs * L) influence matrix)
    """
    dm = as_data_matrix(data, spec)
    estimator = _estimator_for(spec)
    estimates, blocks = [], []
    for a in range(spec.p):
        for b in range(a + 1, spec.p):
            system = assemble(spec, dm, a, b, center=center)
            est = estimator(spec, dm, a, b, lambda1, lambda2, system=system)
            blocks.append(influence_columns(system, est, est.theta_full))
            estimates.append(est)
    return estimates, np.hstack(blocks)


def diff_test(spec, data1, data2, alpha=ALPHA, B=BOOTSTRAP_DRAWS, seed=0, lambda1=None, lambda2=None):
    """
    Bootstrap test of H0: the two groups share every edge parameter

    Statistic sqrt(n1 + n2) max |theta_1 - theta_2|; each draw is
    (n1 + n2)^{-1/2} max |(1 + n2/n1) Z1^T e1 - (1 + n1/n2) Z2^T e2| with
    influence rows at the fitted estimates.

    Returns:
        BootstrapTestResult: estimates holds (group-1 list, group-2 list)
    """
    dm1 = as_data_matrix(data1, spec)
    dm2 = as_data_matrix(data2, spec)
    if dm1.p != dm2.p:
        raise ValueError(f"groups have different node counts ({dm1.p} vs {dm2.p})")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    ests1, Z1 = all_edge_estimates(spec, dm1, lambda1, lambda2)
    ests2, Z2 = all_edge_estimates(spec, dm2, lambda1, lambda2)
    n1, n2 = dm1.n, dm2.n
    scale = math.sqrt(n1 + n2)

    per_edge = {}
    for e1, e2 in zip(ests1, ests2):
        for l in range(e1.L):
            key = e1.edge if e1.L == 1 else (*e1.edge, l)
            per_edge[key] = scale * abs(e1.theta_tilde[l] - e2.theta_tilde[l])
    statistic = float(max(per_edge.values()))

    rng = multiplier_stream(seed)
    w1, w2 = 1.0 + n2 / n1, 1.0 + n1 / n2
    draws = np.empty(B)
    for start in range(0, B, BOOTSTRAP_CHUNK):
        size = min(BOOTSTRAP_CHUNK, B - start)
        E1 = rng.standard_normal((size, n1))
        E2 = rng.standard_normal((size, n2))
        S = (w1 * (E1 @ Z1) - w2 * (E2 @ Z2)) / scale
        draws[start:start + size] = np.abs(S).max(axis=1)
    crit = bootstrap_critical_value(draws, alpha)
    return BootstrapTestResult(
        statistic=statistic, critical_value=crit, p_value=bootstrap_p_value(draws, statistic),
        B=B, alpha=alpha, per_edge_stats=per_edge, reject=bool(statistic >= crit),
        draws=draws, estimates=(tuple(ests1), tuple(ests2)),
    )


def xia_limit_cdf(t):
    """exp(-(2 pi)^{-1/2} exp(-t / 2))"""
    return math.exp(-math.exp(-t / 2.0) / math.sqrt(2.0 * math.pi))


def xia_test(ests1, ests2, p=None):
    """
    Extreme-value test on standardized squared differences

    T = max (theta_1 - theta_2)^2 / (V_1/n_1 + V_2/n_2); the p-value comes from
    the limit P(T - 2 log p + log log p <= t) -> exp(-(2 pi)^{-1/2} exp(-t/2)).

    Args:
        ests1 (list): Group-1 estimates over all edges
        ests2 (list): Group-2 estimates, same edge order
        p (int): Node count (inferred from the edges when omitted)

    Returns:
        XiaTestResult: T, shifted T and p-value
    """
    if len(ests1) != len(ests2) or not ests1:
        raise ValueError("need matching, nonempty estimate lists")
    if p is None:
        p = 1 + max(max(e.edge) for e in ests1)
    if p < 2:
        raise ValueError("the extreme-value limit needs p >= 2")
    T = 0.0
    for e1, e2 in zip(ests1, ests2):
        if tuple(e1.edge) != tuple(e2.edge):
            raise ValueError(f"edge mismatch {e1.edge} vs {e2.edge}")
        var = np.diag(e1.V_hat) / e1.n + np.diag(e2.V_hat) / e2.n
        if np.any(var <= 0):
            raise DegenerateVarianceError(f"zero variance sum for edge {e1.edge}")
        T = max(T, float(np.max((e1.theta_tilde - e2.theta_tilde) ** 2 / var)))
    shifted = T - 2.0 * math.log(p) + math.log(math.log(p))
    return XiaTestResult(T, shifted, 1.0 - xia_limit_cdf(shifted))


# =============================================================================
# Chi-square moderate-deviation test (general L)
# =============================================================================

def chi2_critical_value(alpha, n_edges, L):
    """y solving n_edges * P(chi2_L >= y) = -log(1 - alpha)"""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    tail = -math.log(1.0 - alpha) / n_edges
    if tail >= 1.0:
        return 0.0
    return float(chi2.isf(tail, L))


def chi2_simultaneous(spec, data, a, null_values=None, alpha=ALPHA, lambda1=None, lambda2=None):
    """
    max_b n (theta_ab - null)^T V_ab^{-1} (theta_ab - null) against y_alpha

    Returns:
        Chi2TestResult: statistic, critical value and the implied p-value
    """
    dm = as_data_matrix(data, spec)
    estimator = _estimator_for(spec)
    per_edge = {}
    for b in range(spec.p):
        if b == a:
            continue
        est = estimator(spec, dm, a, b, lambda1, lambda2)
        diff = est.theta_tilde - _null_vector(null_values, b, est.L)
        try:
            per_edge[b] = float(est.n * diff @ np.linalg.solve(est.V_hat, diff))
        except np.linalg.LinAlgError as e:
            raise SingularSystemError(f"V_hat singular for edge ({a}, {b})") from e
    statistic = max(per_edge.values())
    crit = chi2_critical_value(alpha, spec.p - 1, spec.L)
    p = 1.0 - math.exp(-(spec.p - 1) * chi2.sf(statistic, spec.L))
    return Chi2TestResult(statistic, crit, float(p), alpha, per_edge, bool(statistic >= crit))

"""Edge estimators: three-step refit, group-L variant and the debiased estimator"""
import json
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from config import CI_LEVEL, LAMBDA2_C_DEBIAS, LAMBDA_C_NONNEG, LAMBDA_C_REALS
from errors import DegenerateVarianceError, OverparameterizedError, SingularSystemError
from models import Domain
from score_engine import as_data_matrix, assemble, nuisance_regression_system
from solvers import QuadraticLassoProblem, clime_rows, group_lasso_cd, lasso_cd, refit

logger = logging.getLogger(__name__)

THREE_STEP = "three_step"
GROUP_L = "group_l"
DEBIASED = "debiased"


@dataclass(frozen=True, eq=False)
class EdgeEstimate:
    """
    Estimate of the target block theta_ab^(1..L)

    w_tilde holds one row per target (the decorrelation direction); influence
    rows are -w_tilde[l] . (Gamma(x_i) theta + g(x_i)) / sigma_n[l].
    V_hat is the L x L asymptotic variance of sqrt(n) (theta_tilde - theta*).
    """
    edge: tuple
    method: str
    n: int
    theta_tilde: np.ndarray
    theta_full: np.ndarray
    M1_hat: tuple
    M2_hat: tuple
    M_tilde: tuple
    sigma_n: np.ndarray
    V_hat: np.ndarray
    w_tilde: np.ndarray = field(repr=False)
    target_indices: tuple = ()
    gamma_hat_vecs: np.ndarray = field(default=None, repr=False)
    lambda1: float = None
    lambda2: float = None
    converged: bool = True

    def __post_init__(self):
        sigma = np.atleast_1d(np.asarray(self.sigma_n, dtype=float))
        if np.any(sigma == 0):
            raise DegenerateVarianceError(f"sigma_n is zero for edge {self.edge}")
        object.__setattr__(self, "sigma_n", sigma)
        object.__setattr__(self, "theta_tilde", np.atleast_1d(np.asarray(self.theta_tilde, dtype=float)))
        object.__setattr__(self, "V_hat", np.atleast_2d(np.asarray(self.V_hat, dtype=float)))

    @property
    def L(self):
        return len(self.theta_tilde)

    def std_error(self):
        """sqrt(V_ll / n) per target coordinate"""
        return np.sqrt(np.maximum(np.diag(self.V_hat), 0.0) / self.n)

    def to_dict(self):
        return {
            "edge": [int(self.edge[0]), int(self.edge[1])],
            "method": self.method,
            "n": int(self.n),
            "theta_tilde": self.theta_tilde.tolist(),
            "theta_full": np.asarray(self.theta_full).tolist(),
            "M1_hat": sorted(int(j) for j in self.M1_hat),
            "M2_hat": sorted(int(j) for j in self.M2_hat),
            "M_tilde": sorted(int(j) for j in self.M_tilde),
            "sigma_n": self.sigma_n.tolist(),
            "V_hat": self.V_hat.tolist(),
            "w_tilde": np.asarray(self.w_tilde).tolist(),
            "target_indices": [int(t) for t in self.target_indices],
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "converged": bool(self.converged),
        }

    def to_json(self):
        return json.dumps(self.to_dict())


@dataclass(frozen=True, eq=False)
class ConfidenceInterval:
    level: float
    lower: np.ndarray
    upper: np.ndarray

    def covers(self, value):
        value = np.atleast_1d(value)
        return (self.lower <= value) & (value <= self.upper)

    @property
    def width(self):
        return self.upper - self.lower


def default_lambda(spec, n, dim, c=None):
    """lambda = c sqrt(log s' / n); c from config by domain unless given"""
    if c is None:
        c = LAMBDA_C_REALS if spec.domain is Domain.REALS else LAMBDA_C_NONNEG
    return float(c * np.sqrt(np.log(dim) / n))


def _lambdas(spec, system, lambda1, lambda2):
    if lambda1 is None:
        lambda1 = default_lambda(spec, system.n, system.dim)
    if lambda2 is None:
        lambda2 = default_lambda(spec, system.n, system.dim)
    if lambda1 < 0 or lambda2 < 0:
        raise ValueError(f"penalties must be non-negative, got {lambda1}, {lambda2}")
    return float(lambda1), float(lambda2)


# =============================================================================
# Variance estimator
# =============================================================================

def sandwich_variance(gamma_M, Z, target_positions):
    """
    E^T Gamma_M^{-1} Z Gamma_M^{-1} E for the selected target positions

    Args:
        gamma_M (numpy.ndarray): Restricted Gamma (|M| x |M|)
        Z (numpy.ndarray): Second moment of restricted residuals (|M| x |M|)
        target_positions (list): Positions of the targets inside M

    Returns:
        numpy.ndarray: L x L symmetric matrix
    """
    gamma_M = np.atleast_2d(gamma_M)
    Z = np.atleast_2d(Z)
    E = np.eye(gamma_M.shape[0])[:, list(target_positions)]
    try:
        H = np.linalg.solve(gamma_M, E)
    except np.linalg.LinAlgError as e:
        raise SingularSystemError(f"restricted Gamma singular in variance estimate: {e}") from e
    V = H.T @ Z @ H
    return (V + V.T) / 2.0


def variance_hat(system, theta_full, support, targets):
    """
    Sandwich variance on the support M: Z = mean_i r_i r_i^T, r_i = (Gamma(x_i) theta + g(x_i))_M

    Args:
        system (EdgeScoreSystem): Assembled system with per-sample rows
        theta_full (numpy.ndarray): Refitted estimate (length s')
        support (iterable): Index set M containing every target
        targets (iterable): Target coordinates

    Returns:
        numpy.ndarray: L x L variance matrix
    """
    M = sorted(int(j) for j in support)
    pos = {j: i for i, j in enumerate(M)}
    R = system.sample_residuals(theta_full)[:, M]
    Z = R.T @ R / system.n
    return sandwich_variance(system.gamma_hat[np.ix_(M, M)], Z, [pos[t] for t in targets])


# =============================================================================
# Three-step estimators
# =============================================================================

def _expand_groups(indices, groups):
    """Close an index set under group membership"""
    out = set(int(j) for j in indices)
    for g in groups:
        if out.intersection(g):
            out.update(g)
    return out


def _three_step(system, lambda1, lambda2, grouped):
    m = system.index_map
    gamma, g_hat = system.gamma_hat, system.g_hat
    targets = list(m.target_indices)

    # Step 1: pilot fit
    if grouped:
        pilot = group_lasso_cd(QuadraticLassoProblem(gamma, g_hat, lambda1, m.groups))
        M1 = _expand_groups(pilot.support, m.groups)
    else:
        pilot = lasso_cd(QuadraticLassoProblem(gamma, g_hat, lambda1))
        M1 = set(pilot.support)
    converged = pilot.converged

    # Step 2: decorrelation regression of each target on the rest
    M2, gamma_hat_vecs = set(), []
    for t in targets:
        A, bvec = nuisance_regression_system(system, t)
        rest = m.nuisance_indices(t)
        if grouped:
            pos = {int(j): i for i, j in enumerate(rest)}
            groups = tuple(tuple(pos[j] for j in grp) for grp in m.groups)
            fit = group_lasso_cd(QuadraticLassoProblem(A, -bvec, lambda2, groups))
            M2 |= _expand_groups(rest[list(fit.support)], m.groups)
        else:
            fit = lasso_cd(QuadraticLassoProblem(A, -bvec, lambda2))
            M2 |= set(int(j) for j in rest[list(fit.support)])
        converged = converged and fit.converged
        vec = np.zeros(m.dim)
        vec[rest] = fit.theta
        gamma_hat_vecs.append(vec)

    # Step 3: refit on the union
    M_tilde = sorted(set(targets) | M1 | M2)
    if len(M_tilde) >= system.n:
        raise OverparameterizedError(
            f"refit support |M|={len(M_tilde)} is not smaller than n={system.n} for edge {m.edge}")
    theta = refit(gamma, g_hat, M_tilde)

    w_rows, sigma = [], []
    for t in targets:
        others = [j for j in M_tilde if j != t]
        w = np.zeros(m.dim)
        w[t] = 1.0
        if others:
            w -= refit(gamma, -gamma[:, t], others)
        w_rows.append(w)
        sigma.append(gamma[t] @ w)
    w_rows = np.array(w_rows)
    sigma = np.array(sigma)
    if np.any(sigma == 0):
        raise DegenerateVarianceError(f"sigma_n is zero for edge {m.edge}")

    foc = np.abs((gamma @ theta + g_hat)[M_tilde]).max()
    logger.debug("Edge %s: |M1|=%d |M2|=%d |M|=%d, first-order residual %.2e",
                 m.edge, len(M1), len(M2), len(M_tilde), foc)

    V = variance_hat(system, theta, M_tilde, targets)
    return dict(
        theta_tilde=theta[targets], theta_full=theta,
        M1_hat=tuple(sorted(M1)), M2_hat=tuple(sorted(M2)), M_tilde=tuple(M_tilde),
        sigma_n=sigma, V_hat=V, w_tilde=w_rows, target_indices=tuple(targets),
        gamma_hat_vecs=np.array(gamma_hat_vecs), converged=converged,
    )


def three_step_edge(spec, data, a, b, lambda1=None, lambda2=None, system=None, center=False):
    """
    Three-step estimator of theta_ab

    Step 1 lasso pilot, Step 2 lasso decorrelation per target coordinate,
    Step 3 unpenalized refit on the union of supports.

    Args:
        spec (ModelSpec): Model specification
        data (DataMatrix or numpy.ndarray): Samples
        a (int): First node (0-based)
        b (int): Second node (0-based)
        lambda1 (float): Step-1 penalty (default c sqrt(log s'/n))
        lambda2 (float): Step-2 penalty (same default)
        system (EdgeScoreSystem): Pre-assembled system, skips assembly
        center (bool): Gaussian empirical-mean centering

    Returns:
        EdgeEstimate: Estimate with supports, sigma_n and V_hat

    Raises:
        OverparameterizedError: If |M_tilde| >= n
        SingularSystemError: If a restricted system is singular
    """
    if system is None:
        system = assemble(spec, data, a, b, center=center)
    lambda1, lambda2 = _lambdas(spec, system, lambda1, lambda2)
    fields_ = _three_step(system, lambda1, lambda2, grouped=False)
    return EdgeEstimate(edge=(a, b), method=THREE_STEP, n=system.n,
                        lambda1=lambda1, lambda2=lambda2, **fields_)


def three_step_edge_groupL(spec, data, a, b, lambda1=None, lambda2=None, system=None, center=False):
    """
    Group-penalized three-step estimator of the L-vector theta_ab^[L]

    Pair blocks E(a,c), E(b,c) are penalized as groups in Steps 1 and 2;
    node statistics and targets stay l1-penalized. Step 2 runs once per l.
    """
    if system is None:
        system = assemble(spec, data, a, b, center=center)
    lambda1, lambda2 = _lambdas(spec, system, lambda1, lambda2)
    fields_ = _three_step(system, lambda1, lambda2, grouped=True)
    return EdgeEstimate(edge=(a, b), method=GROUP_L, n=system.n,
                        lambda1=lambda1, lambda2=lambda2, **fields_)


# =============================================================================
# Debiased estimator
# =============================================================================

def split_halves(data, rng=None):
    """
    Split samples into two disjoint halves

    Even/odd row interleave by default; a numpy Generator gives a random split.
    """
    dm = as_data_matrix(data)
    index = np.arange(dm.n)
    if rng is not None:
        index = rng.permutation(dm.n)
        half = dm.n // 2
        return dm.rows(np.sort(index[:half])), dm.rows(np.sort(index[half:]))
    return dm.rows(index[0::2]), dm.rows(index[1::2])


def debiased_edge(spec, data_half1, data_half2, a, b, lambda1=None, lambda2=None):
    """
    Debiased lasso estimate of theta_ab with sample splitting

    theta_hat comes from a lasso fit on half 1; the target rows of M from
    the constrained l1 program on half 2's Gamma; the correction
    theta_hat - M (Gamma_1 theta_hat + g_1) uses half-1 moments.

    Args:
        spec (ModelSpec): Model specification
        data_half1 (DataMatrix): Samples for the pilot and the correction
        data_half2 (DataMatrix): Samples for the debiasing matrix
        a (int): First node (0-based)
        b (int): Second node (0-based)
        lambda1 (float): Lasso penalty
        lambda2 (float): Constraint radius of the M rows (default LAMBDA2_C_DEBIAS sqrt(log s'/n))

    Returns:
        EdgeEstimate: method "debiased"; w_tilde holds the rows of M, sigma_n = 1
    """
    sys1 = assemble(spec, data_half1, a, b)
    sys2 = assemble(spec, data_half2, a, b, streaming=True)
    if lambda1 is None:
        lambda1 = default_lambda(spec, sys1.n, sys1.dim)
    if lambda2 is None:
        lambda2 = default_lambda(spec, sys2.n, sys2.dim, LAMBDA2_C_DEBIAS)
    targets = list(sys1.index_map.target_indices)

    pilot = lasso_cd(QuadraticLassoProblem(sys1.gamma_hat, sys1.g_hat, lambda1))
    theta_hat = pilot.theta
    M = clime_rows(sys2.gamma_hat, lambda2, targets)

    grad = sys1.gamma_hat @ theta_hat + sys1.g_hat
    theta_full = theta_hat.copy()
    theta_full[targets] = theta_hat[targets] - M @ grad

    Zi = sys1.sample_residuals(theta_hat) @ M.T
    Zi = Zi - Zi.mean(axis=0)
    V = Zi.T @ Zi / sys1.n
    V = (V + V.T) / 2.0

    M2 = set(int(j) for j in np.flatnonzero(np.any(M != 0, axis=0)))
    logger.debug("Debiased edge (%d, %d): |supp theta_hat|=%d, M row l1 %s",
                 a, b, len(pilot.support), np.abs(M).sum(axis=1))
    return EdgeEstimate(
        edge=(a, b), method=DEBIASED, n=sys1.n,
        theta_tilde=theta_full[targets], theta_full=theta_full,
        M1_hat=tuple(pilot.support), M2_hat=tuple(sorted(M2)),
        M_tilde=tuple(sorted(set(targets) | set(pilot.support) | M2)),
        sigma_n=np.ones(len(targets)), V_hat=V, w_tilde=M,
        target_indices=tuple(targets), lambda1=float(lambda1), lambda2=float(lambda2),
        converged=pilot.converged,
    )


# =============================================================================
# Confidence intervals and p-values
# =============================================================================

def normal_quantile(level):
    """z such that P(|N(0,1)| <= z) = level"""
    return float(norm.ppf(1.0 - (1.0 - level) / 2.0))


def confidence_interval(est, level=CI_LEVEL):
    """theta_tilde +/- z sqrt(V_ll / n) at confidence level `level`"""
    if not 0.0 < level < 1.0:
        raise ValueError(f"confidence level must be in (0, 1), got {level}")
    if np.any(np.diag(est.V_hat) < 0):
        raise DegenerateVarianceError(f"negative variance for edge {est.edge}")
    half = normal_quantile(level) * est.std_error()
    return ConfidenceInterval(level, est.theta_tilde - half, est.theta_tilde + half)


def p_values(est, null_value=0.0):
    """Two-sided normal p-values per target coordinate"""
    null_value = np.broadcast_to(np.asarray(null_value, dtype=float), est.theta_tilde.shape)
    se = est.std_error()
    diff = np.abs(est.theta_tilde - null_value)
    out = np.empty(est.L)
    for l in range(est.L):
        if se[l] > 0:
            out[l] = 2.0 * norm.sf(diff[l] / se[l])
        elif diff[l] == 0:
            out[l] = 1.0
        else:
            warnings.warn(f"zero variance for edge {est.edge}; p-value set to 0", RuntimeWarning)
            out[l] = 0.0
    return out


def p_value(est, null_value=0.0, index=0):
    """Two-sided p-value of one target coordinate"""
    return float(p_values(est, null_value)[index])

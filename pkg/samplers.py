"""Seeded data generators for every model family"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from config import (GIBBS_BURN_IN, GIBBS_CHAINS, GIBBS_THINNING,
                    TRUNC_GIBBS_BURN_IN, TRUNC_GIBBS_THINNING)
from errors import InvalidSpecError
from models import FAMILIES, Family, ModelSpec
from score_engine import DataMatrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GibbsConfig:
    """
    Burn-in sweeps are discarded, then one state in `thinning` is kept.

    `chains` independent chains advance together, each started from its own
    draw; chains=1 is a single sequential chain.
    """
    burn_in: int = GIBBS_BURN_IN
    thinning: int = GIBBS_THINNING
    seed: int = 0
    chains: int = GIBBS_CHAINS

    def __post_init__(self):
        if self.burn_in < 0:
            raise ValueError(f"burn_in must be >= 0, got {self.burn_in}")
        if self.thinning < 1:
            raise ValueError(f"thinning must be >= 1, got {self.thinning}")
        if self.chains < 1:
            raise ValueError(f"chains must be >= 1, got {self.chains}")

    @classmethod
    def for_family(cls, family, seed=0, **overrides):
        if Family(family) is Family.NONNEG_GAUSSIAN:
            base = dict(burn_in=TRUNC_GIBBS_BURN_IN, thinning=TRUNC_GIBBS_THINNING)
        else:
            base = dict(burn_in=GIBBS_BURN_IN, thinning=GIBBS_THINNING)
        base.update(overrides)
        return cls(seed=seed, **base)


DEFAULT_NODE_PARAMS = {
    Family.GAUSSIAN: (1.0,),
    Family.NONNEG_GAUSSIAN: (1.0,),
    Family.EXPONENTIAL: (2.0,),
    Family.NORMAL_CONDITIONALS_L1: (0.4, -2.0),
    Family.NORMAL_CONDITIONALS_L2: (0.4, -2.0),
}


def knn_graph_spec(family, p, k, weights=(), node_params=None, weight_fn=None):
    """
    Banded k-nearest-neighbor spec: band d (|i - j| = d) gets weights[d - 1]

    Args:
        family (Family): Model family
        p (int): Node count
        k (int): Even neighbor count (k/2 bands on each side)
        weights: k/2 band values, or an L x k/2 array for L > 1 families
        node_params: One value per node statistic (family default otherwise)
        weight_fn (WeightFn): Optional weight function override

    Returns:
        ModelSpec: Banded spec
    """
    family = Family(family)
    if k < 0 or k % 2:
        raise InvalidSpecError(f"k must be a non-negative even number, got {k}")
    bands = k // 2
    if bands >= p and bands > 0:
        raise InvalidSpecError(f"{bands} bands do not fit {p} nodes")
    info = FAMILIES[family]
    L, K = len(info.edge_stats), len(info.node_stats)

    w = np.asarray(weights, dtype=float)
    if bands == 0:
        w = np.zeros((L, 0))
    elif w.ndim == 1:
        w = np.tile(w, (L, 1))
    if w.shape != (L, bands):
        raise InvalidSpecError(f"weights must have shape ({bands},) or ({L}, {bands}), got {w.shape}")

    edge = np.zeros((L, p, p))
    for l in range(L):
        for d in range(1, bands + 1):
            idx = np.arange(p - d)
            edge[l, idx, idx + d] = w[l, d - 1]
            edge[l, idx + d, idx] = w[l, d - 1]

    node_vals = DEFAULT_NODE_PARAMS[family] if node_params is None else tuple(np.atleast_1d(node_params))
    if len(node_vals) != K:
        raise InvalidSpecError(f"{family.value} needs {K} node parameters, got {len(node_vals)}")
    node = np.array([np.full(p, v, dtype=float) for v in node_vals])
    return ModelSpec(family, edge, node, weight_fn)


# =============================================================================
# Gaussian
# =============================================================================

def _covariance(spec):
    omega = spec.precision()
    try:
        np.linalg.cholesky(omega)
    except np.linalg.LinAlgError as e:
        raise InvalidSpecError("precision matrix is not positive definite") from e
    sigma = np.linalg.inv(omega)
    return (sigma + sigma.T) / 2.0, omega


def sample_gaussian(spec, n, seed=0):
    """
    Exact draws from N(0, Omega^{-1})

    Args:
        spec (ModelSpec): Gaussian spec
        n (int): Sample count
        seed (int): Random seed

    Returns:
        DataMatrix: n x p samples
    """
    if spec.family is not Family.GAUSSIAN:
        raise InvalidSpecError(f"sample_gaussian needs the Gaussian family, got {spec.family.value}")
    sigma, _ = _covariance(spec)
    chol = np.linalg.cholesky(sigma)
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, spec.p)) @ chol.T
    return DataMatrix(X, spec.domain)


# =============================================================================
# Gibbs samplers
# =============================================================================

def _run_chains(n, p, cfg, init, update):
    """
    Advance cfg.chains chains with a per-coordinate update and collect n states

    update(state, j, rng) overwrites column j of the (chains x p) state.
    """
    rng = np.random.default_rng(cfg.seed)
    chains = min(cfg.chains, max(n, 1))
    per_chain = -(-n // chains)
    state = init(rng, chains)
    kept = np.empty((per_chain, chains, p))
    for _ in range(cfg.burn_in):
        for j in range(p):
            update(state, j, rng)
    for t in range(per_chain):
        for _ in range(cfg.thinning):
            for j in range(p):
                update(state, j, rng)
        kept[t] = state
    # chain-major order keeps each chain's states consecutive
    return kept.transpose(1, 0, 2).reshape(-1, p)[:n]


def truncated_normal_lower(mean, sd, rng):
    """
    Draws from N(mean, sd^2) truncated to [0, inf) by inverse CDF

    Inverts the survival function (erfc based), which stays accurate when the
    truncation point lies far above the mean.
    """
    alpha = -mean / sd
    u = 1.0 - rng.random(np.shape(mean))  # (0, 1]
    tail = norm.sf(alpha)
    with np.errstate(divide="ignore"):
        # exponential tail approximation once sf underflows
        z = np.where(u * tail > 0, norm.isf(u * tail), alpha - np.log(u) / np.maximum(alpha, 1.0))
    z = np.maximum(z, alpha)
    return np.maximum(mean + sd * z, 0.0)


def sample_nonneg_gaussian_gibbs(spec, n, cfg=None):
    """
    Gibbs sampler for N(0, Omega^{-1}) truncated to the non-negative orthant

    The full conditional of x_a is N(-sum_b Omega_ab x_b / Omega_aa, 1 / Omega_aa)
    truncated at zero.
    """
    if spec.family is not Family.NONNEG_GAUSSIAN:
        raise InvalidSpecError(f"needs the non-negative Gaussian family, got {spec.family.value}")
    cfg = cfg or GibbsConfig.for_family(spec.family)
    _, omega = _covariance(spec)
    diag = np.diag(omega).copy()
    off = omega - np.diag(diag)
    sd = 1.0 / np.sqrt(diag)

    def init(rng, chains):
        return np.abs(rng.standard_normal((chains, spec.p))) * sd

    def update(state, j, rng):
        mean = -(state @ off[:, j]) / diag[j]
        state[:, j] = truncated_normal_lower(mean, sd[j], rng)

    X = _run_chains(n, spec.p, cfg, init, update)
    logger.debug("Truncated Gaussian Gibbs: n=%d, p=%d, burn_in=%d, thinning=%d",
                 n, spec.p, cfg.burn_in, cfg.thinning)
    return DataMatrix(X, spec.domain)


def sample_normal_conditionals_gibbs(spec, n, cfg=None):
    """
    Gibbs sampler for the normal-conditionals families

    x_a | rest is Gaussian with precision coefficient
    q = eta_a + sum_b Theta2_ab x_b^2 (must stay negative), variance -1/(2q)
    and mean variance * (beta_a + sum_b Theta1_ab x_b) (the linear pair term
    exists only for the L = 2 family).

    Raises:
        InvalidSpecError: If a non-negative precision coefficient is met
    """
    if spec.family not in (Family.NORMAL_CONDITIONALS_L1, Family.NORMAL_CONDITIONALS_L2):
        raise InvalidSpecError(f"needs a normal-conditionals family, got {spec.family.value}")
    cfg = cfg or GibbsConfig.for_family(spec.family)
    beta, eta = spec.node_params
    if spec.family is Family.NORMAL_CONDITIONALS_L2:
        lin, quad = spec.edge_params
    else:
        lin, quad = None, spec.edge_params[0]

    def init(rng, chains):
        return np.zeros((chains, spec.p))

    def update(state, j, rng):
        q = eta[j] + (state ** 2) @ quad[:, j]
        if np.any(q >= 0):
            raise InvalidSpecError(f"conditional of node {j} is not normalizable (precision coefficient >= 0)")
        var = -1.0 / (2.0 * q)
        shift = beta[j] if lin is None else beta[j] + state @ lin[:, j]
        state[:, j] = var * shift + np.sqrt(var) * rng.standard_normal(state.shape[0])

    X = _run_chains(n, spec.p, cfg, init, update)
    return DataMatrix(X, spec.domain)


def sample_exponential_gibbs(spec, n, cfg=None):
    """Gibbs sampler with Exp(theta_a + sum_b theta_ab x_b) full conditionals"""
    if spec.family is not Family.EXPONENTIAL:
        raise InvalidSpecError(f"needs the exponential family, got {spec.family.value}")
    cfg = cfg or GibbsConfig.for_family(spec.family)
    node = spec.node_params[0]
    edge = spec.edge_params[0]
    if np.any(node <= 0):
        raise InvalidSpecError("exponential node parameters must be positive for a proper density")

    def init(rng, chains):
        return rng.exponential(1.0 / node, size=(chains, spec.p))

    def update(state, j, rng):
        rate = node[j] + state @ edge[:, j]
        state[:, j] = rng.exponential(1.0 / rate)

    X = _run_chains(n, spec.p, cfg, init, update)
    return DataMatrix(X, spec.domain)


def sample(spec, n, seed=0, cfg=None):
    """Dispatch to the family's sampler"""
    if spec.family is Family.GAUSSIAN:
        return sample_gaussian(spec, n, seed)
    cfg = cfg or GibbsConfig.for_family(spec.family, seed=seed)
    if spec.family is Family.NONNEG_GAUSSIAN:
        return sample_nonneg_gaussian_gibbs(spec, n, cfg)
    if spec.family is Family.EXPONENTIAL:
        return sample_exponential_gibbs(spec, n, cfg)
    return sample_normal_conditionals_gibbs(spec, n, cfg)


def lag_autocorrelation(data, lag=1):
    """Mean over columns of the lag-k autocorrelation of consecutive rows"""
    X = data.values if isinstance(data, DataMatrix) else np.asarray(data, dtype=float)
    if lag < 1 or lag >= X.shape[0]:
        raise ValueError(f"lag must be in [1, n), got {lag}")
    X = X - X.mean(axis=0)
    num = (X[:-lag] * X[lag:]).sum(axis=0)
    den = (X ** 2).sum(axis=0)
    return float(np.mean(num / den))

"""Tests for the graph specs and the seeded samplers"""
import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from errors import InvalidSpecError
from models import Domain, Family, ModelSpec
from samplers import (GibbsConfig, knn_graph_spec, lag_autocorrelation, sample,
                      sample_gaussian, sample_normal_conditionals_gibbs, truncated_normal_lower)


def test_knn_graph_bands():
    spec = knn_graph_spec("gaussian", 7, 4, (0.5, 0.3))
    omega = spec.precision()
    assert_allclose(np.diag(omega), 1.0)
    assert omega[2, 3] == 0.5 and omega[2, 4] == 0.3 and omega[2, 5] == 0.0
    assert omega[0, 6] == 0.0  # bands do not wrap around


def test_knn_graph_per_statistic_weights():
    spec = knn_graph_spec("normal_conditionals_l2", 5, 2, [[0.2], [-0.2]], (0.4, -2.0))
    assert spec.edge_params[0, 1, 2] == 0.2
    assert spec.edge_params[1, 1, 2] == -0.2
    assert_allclose(spec.node_params[1], -2.0)


def test_knn_graph_rejects_bad_shapes():
    with pytest.raises(InvalidSpecError):
        knn_graph_spec("gaussian", 6, 3, (0.5,))
    with pytest.raises(InvalidSpecError):
        knn_graph_spec("gaussian", 6, 4, (0.5,))
    with pytest.raises(InvalidSpecError):
        knn_graph_spec("normal_conditionals_l1", 6, 2, (0.1,), node_params=(1.0,))


def test_gibbs_config_validation():
    with pytest.raises(ValueError):
        GibbsConfig(thinning=0)
    with pytest.raises(ValueError):
        GibbsConfig(burn_in=-1)
    cfg = GibbsConfig.for_family(Family.NONNEG_GAUSSIAN, seed=4, chains=1)
    assert (cfg.burn_in, cfg.thinning, cfg.seed, cfg.chains) == (1000, 5, 4, 1)


def test_gaussian_sampler_covariance():
    spec = knn_graph_spec("gaussian", 5, 2, (0.4,))
    data = sample_gaussian(spec, 50_000, seed=2)
    assert data.domain is Domain.REALS
    assert_allclose(np.cov(data.values.T), np.linalg.inv(spec.precision()), atol=0.05)


def test_samplers_are_seeded():
    spec = knn_graph_spec("exponential", 4, 2, (0.3,))
    cfg = GibbsConfig(burn_in=20, thinning=1, seed=9, chains=5)
    first = sample(spec, 40, cfg=cfg)
    assert_array_equal(first.values, sample(spec, 40, cfg=cfg).values)
    other = GibbsConfig(burn_in=20, thinning=1, seed=10, chains=5)
    assert not np.array_equal(first.values, sample(spec, 40, cfg=other).values)
    assert sample(spec, 37, cfg=cfg).n == 37


def test_nonneg_samples_stay_in_orthant():
    spec = knn_graph_spec("nonneg_gaussian", 4, 2, (0.3,), weight_fn="log_plus_one")
    data = sample(spec, 300, seed=1)
    assert data.domain is Domain.NONNEG_REALS
    assert data.values.min() >= 0.0


def test_exponential_sampler_marginal_without_edges():
    spec = knn_graph_spec("exponential", 3, 0, node_params=(2.0,))
    data = sample(spec, 100_000, seed=8)
    assert_allclose(data.values.mean(axis=0), 0.5, atol=0.01)


def test_nonneg_sampler_moments_without_edges():
    """Independent standard normals truncated at zero: E x = sqrt(2/pi), E x^2 = 1"""
    spec = knn_graph_spec("nonneg_gaussian", 2, 0)
    X = sample(spec, 100_000, seed=5).values
    assert_allclose(X.mean(axis=0), np.sqrt(2.0 / np.pi), atol=0.01)
    assert_allclose((X ** 2).mean(axis=0), 1.0, atol=0.02)


def test_truncated_normal_far_tail(rng):
    draws = truncated_normal_lower(np.full(1000, -40.0), 1.0, rng)
    assert np.all(draws >= 0.0)
    assert np.all(np.isfinite(draws))
    # mean of the tail beyond 40 standard deviations is about 1/40
    assert draws.mean() < 0.1


def test_truncated_normal_matches_half_normal(rng):
    draws = truncated_normal_lower(np.zeros(50_000), 2.0, rng)
    assert draws.mean() == pytest.approx(2.0 * np.sqrt(2.0 / np.pi), rel=0.02)


def test_normal_conditionals_requires_negative_precision():
    edge = np.zeros((1, 3, 3))
    edge[0, 0, 1] = edge[0, 1, 0] = 1.0
    spec = ModelSpec("normal_conditionals_l1", edge, np.array([[0.0] * 3, [-0.1] * 3]))
    with pytest.raises(InvalidSpecError):
        sample_normal_conditionals_gibbs(spec, 50, GibbsConfig(burn_in=200, thinning=1, chains=2))


def test_wrong_family_for_sampler(gaussian_spec):
    with pytest.raises(InvalidSpecError):
        sample_normal_conditionals_gibbs(gaussian_spec, 10)
    with pytest.raises(InvalidSpecError):
        sample_gaussian(ModelSpec.template("exponential", 3), 10)


@pytest.mark.slow
def test_thinning_reduces_autocorrelation():
    spec = knn_graph_spec("nonneg_gaussian", 5, 2, (0.45,))
    dense = sample(spec, 5000, cfg=GibbsConfig(burn_in=500, thinning=1, seed=1, chains=1))
    thinned = sample(spec, 5000, cfg=GibbsConfig(burn_in=500, thinning=10, seed=1, chains=1))
    assert lag_autocorrelation(thinned) < lag_autocorrelation(dense)


def test_lag_autocorrelation_bounds(rng):
    X = rng.normal(size=(500, 3))
    assert abs(lag_autocorrelation(X)) < 0.15
    with pytest.raises(ValueError):
        lag_autocorrelation(X, lag=0)


def test_normal_conditionals_decoupled_marginals():
    """No edges, node parameters (0.4, -2.0): each node is N(0.1, 0.25)"""
    spec = knn_graph_spec("normal_conditionals_l1", 3, 0, node_params=(0.4, -2.0))
    X = sample(spec, 100_000, seed=9).values
    assert_allclose(X.mean(axis=0), 0.1, atol=0.01)
    assert_allclose(X.var(axis=0), 0.25, atol=0.01)

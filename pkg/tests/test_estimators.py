"""Tests for the three-step, group-L and debiased edge estimators"""
import json

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.stats import norm

from config import LAMBDA2_C_DEBIAS
from errors import DegenerateVarianceError, OverparameterizedError
from estimators import (DEBIASED, GROUP_L, EdgeEstimate, confidence_interval, debiased_edge,
                        default_lambda, p_value, p_values, split_halves, three_step_edge,
                        three_step_edge_groupL)
from models import ModelSpec
from samplers import GibbsConfig, knn_graph_spec, sample
from score_engine import DataMatrix, assemble


def _estimate(theta=0.5, V=4.0, n=100):
    return EdgeEstimate(edge=(0, 1), method="three_step", n=n, theta_tilde=[theta],
                        theta_full=np.zeros(3), M1_hat=(), M2_hat=(), M_tilde=(1,),
                        sigma_n=[1.0], V_hat=[[V]], w_tilde=np.zeros((1, 3)))


def test_tiny_penalty_recovers_unpenalized_minimizer(gaussian_spec, gaussian_data):
    system = assemble(gaussian_spec, gaussian_data, 0, 1)
    est = three_step_edge(gaussian_spec, gaussian_data, 0, 1, lambda1=1e-10, lambda2=1e-10)
    t = system.index_map.target_indices[0]
    full = -np.linalg.solve(system.gamma_hat, system.g_hat)
    assert len(est.M_tilde) == system.dim
    assert_allclose(est.theta_tilde, full[t], rtol=1e-6)
    # full support: sigma_n is the reciprocal diagonal of the inverse
    inv = np.linalg.inv(system.gamma_hat)
    assert_allclose(est.sigma_n, 1.0 / inv[t, t], rtol=1e-6)


def test_sandwich_variance_on_full_support(gaussian_spec, gaussian_data):
    system = assemble(gaussian_spec, gaussian_data, 2, 3)
    est = three_step_edge(gaussian_spec, gaussian_data, 2, 3, 1e-10, 1e-10, system=system)
    t = system.index_map.target_indices[0]
    R = system.sample_residuals(est.theta_full)
    Z = R.T @ R / system.n
    h = np.linalg.solve(system.gamma_hat, np.eye(system.dim)[:, t])
    assert_allclose(est.V_hat[0, 0], h @ Z @ h, rtol=1e-6)


def test_default_penalty_estimate_is_close(gaussian_spec, gaussian_data):
    est = three_step_edge(gaussian_spec, gaussian_data, 0, 1)
    assert est.lambda1 == pytest.approx(default_lambda(gaussian_spec, 2000, est.w_tilde.shape[1]))
    assert est.converged
    assert abs(est.theta_tilde[0] - 0.5) < 5 * est.std_error()[0]
    assert set(est.M1_hat) | set(est.M2_hat) | set(est.target_indices) == set(est.M_tilde)
    payload = json.loads(est.to_json())
    assert payload["edge"] == [0, 1] and payload["method"] == "three_step"


def test_overparameterized_refit():
    spec = ModelSpec.template("gaussian", 3)
    with pytest.raises(OverparameterizedError):
        three_step_edge(spec, np.array([[1.0, 2.0, 3.0]]), 0, 1, lambda1=10.0, lambda2=10.0)


def test_group_l_supports_are_group_closed():
    spec = knn_graph_spec("normal_conditionals_l2", 5, 2, [[0.2], [-0.2]], (0.4, -2.0))
    data = sample(spec, 1500, cfg=GibbsConfig.for_family(spec.family, seed=3))
    est = three_step_edge_groupL(spec, data, 1, 2)
    system = assemble(spec, data, 1, 2)
    assert est.method == GROUP_L
    assert est.L == 2
    assert est.V_hat.shape == (2, 2)
    assert_allclose(est.V_hat, est.V_hat.T)
    for support in (est.M1_hat, est.M_tilde):
        for g in system.index_map.groups:
            assert set(g) <= set(support) or not set(g) & set(support)


def test_debiased_zero_radius_is_exact(gaussian_spec, gaussian_data):
    est = debiased_edge(gaussian_spec, gaussian_data, gaussian_data, 0, 1, lambda2=0.0)
    system = assemble(gaussian_spec, gaussian_data, 0, 1)
    t = system.index_map.target_indices[0]
    assert est.method == DEBIASED
    assert_allclose(est.w_tilde[0], np.linalg.inv(system.gamma_hat)[t], atol=1e-9)
    assert_allclose(est.theta_tilde, -np.linalg.solve(system.gamma_hat, system.g_hat)[t], atol=1e-8)
    assert_allclose(est.sigma_n, 1.0)


def test_split_halves(rng):
    dm = DataMatrix(np.arange(14.0).reshape(7, 2))
    first, second = split_halves(dm)
    assert_allclose(first.values[:, 0], [0, 4, 8, 12])
    assert_allclose(second.values[:, 0], [2, 6, 10])
    h1, h2 = split_halves(dm, rng)
    assert h1.n == 3 and h2.n == 4
    assert not set(h1.values[:, 0]) & set(h2.values[:, 0])


def test_confidence_interval_and_p_value():
    est = _estimate()
    assert_allclose(est.std_error(), [0.2])
    ci = confidence_interval(est, 0.95)
    half = norm.ppf(0.975) * 0.2
    assert_allclose([ci.lower[0], ci.upper[0]], [0.5 - half, 0.5 + half])
    assert ci.covers(0.6)[0] and not ci.covers(0.1)[0]
    assert_allclose(ci.width, 2 * half)
    assert p_value(est) == pytest.approx(2 * norm.sf(2.5))
    assert p_value(est, null_value=0.5) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        confidence_interval(est, 1.5)


def test_zero_variance_p_values():
    est = _estimate(V=0.0)
    with pytest.warns(RuntimeWarning):
        assert p_values(est)[0] == 0.0
    assert p_values(est, 0.5)[0] == 1.0


def test_zero_sigma_is_degenerate():
    with pytest.raises(DegenerateVarianceError):
        EdgeEstimate(edge=(0, 1), method="three_step", n=10, theta_tilde=[0.0],
                     theta_full=np.zeros(3), M1_hat=(), M2_hat=(), M_tilde=(1,),
                     sigma_n=[0.0], V_hat=[[1.0]], w_tilde=np.zeros((1, 3)))


def _assert_same_estimate(est, other):
    assert est.M_tilde == other.M_tilde
    assert est.M1_hat == other.M1_hat
    assert_allclose(other.theta_tilde, est.theta_tilde, rtol=1e-8, atol=1e-12)
    assert_allclose(other.theta_full, est.theta_full, rtol=1e-8, atol=1e-12)
    assert_allclose(other.V_hat, est.V_hat, rtol=1e-8, atol=1e-12)


def test_duplicated_rows_give_same_estimate(gaussian_spec, gaussian_data):
    est = three_step_edge(gaussian_spec, gaussian_data, 0, 1, lambda1=0.05, lambda2=0.05)
    twice = three_step_edge(gaussian_spec, gaussian_data.stacked(gaussian_data), 0, 1,
                            lambda1=0.05, lambda2=0.05)
    assert twice.n == 2 * est.n
    _assert_same_estimate(est, twice)


def test_row_order_does_not_matter(gaussian_spec, gaussian_data, rng):
    est = three_step_edge(gaussian_spec, gaussian_data, 2, 3)
    shuffled = three_step_edge(gaussian_spec, gaussian_data.rows(rng.permutation(gaussian_data.n)), 2, 3)
    _assert_same_estimate(est, shuffled)


def test_refit_solves_first_order_conditions_on_support(gaussian_spec, gaussian_data):
    est = three_step_edge(gaussian_spec, gaussian_data, 0, 1)
    system = assemble(gaussian_spec, gaussian_data, 0, 1)
    M = list(est.M_tilde)
    outside = sorted(set(range(system.dim)) - set(M))
    assert np.abs((system.gamma_hat @ est.theta_full + system.g_hat)[M]).max() <= 1e-8
    assert_allclose(est.theta_full[outside], 0.0)


def test_debiased_default_radius_uses_its_own_constant(gaussian_spec, gaussian_data):
    half1, half2 = split_halves(gaussian_data)
    est = debiased_edge(gaussian_spec, half1, half2, 0, 1)
    dim = assemble(gaussian_spec, half2, 0, 1).dim
    assert est.lambda2 == pytest.approx(LAMBDA2_C_DEBIAS * np.sqrt(np.log(dim) / half2.n))
    assert est.lambda2 < default_lambda(gaussian_spec, half2.n, dim)

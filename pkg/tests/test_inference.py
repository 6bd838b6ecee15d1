"""Tests for bootstrap tests, support recovery and two-sample tests"""
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy.stats import chi2

from estimators import three_step_edge
from inference import (bootstrap_critical_value, bootstrap_max, bootstrap_p_value,
                       chi2_critical_value, chi2_simultaneous, diff_test, influence_columns,
                       isolated_node_test, simultaneous_test, support_recovery, xia_limit_cdf,
                       xia_test)
from samplers import knn_graph_spec, sample_gaussian
from score_engine import assemble


def test_critical_value_is_order_statistic(rng):
    draws = rng.permutation(np.arange(1.0, 101.0))
    assert bootstrap_critical_value(draws, 0.05) == 95.0
    assert bootstrap_critical_value(draws, 0.5) == 50.0
    with pytest.raises(ValueError):
        bootstrap_critical_value(draws, 0.0)


def test_bootstrap_calibrates_to_normal_quantile(rng):
    z = rng.normal(size=200)
    z = (z - z.mean()) / z.std()
    draws = bootstrap_max(z[:, None], B=100_000, seed=5)
    assert bootstrap_critical_value(draws, 0.05) == pytest.approx(1.96, abs=0.03)


def test_bootstrap_draws_are_reproducible(rng):
    Z = rng.normal(size=(50, 3))
    assert_array_equal(bootstrap_max(Z, 700, seed=1), bootstrap_max(Z, 700, seed=1))
    assert not np.array_equal(bootstrap_max(Z, 700, seed=1), bootstrap_max(Z, 700, seed=2))
    # chunking does not change the stream
    assert_array_equal(bootstrap_max(Z, 700, seed=1, chunk=64), bootstrap_max(Z, 700, seed=1))
    one_sided = bootstrap_max(Z, 700, seed=1, two_sided=False)
    assert np.all(one_sided <= bootstrap_max(Z, 700, seed=1))


def test_bootstrap_p_value():
    draws = np.arange(1.0, 10.0)
    assert bootstrap_p_value(draws, 100.0) == pytest.approx(0.1)
    assert bootstrap_p_value(draws, 0.0) == pytest.approx(1.0)


def test_influence_columns_center_at_estimate(gaussian_spec, gaussian_data):
    system = assemble(gaussian_spec, gaussian_data, 0, 1)
    est = three_step_edge(gaussian_spec, gaussian_data, 0, 1, system=system)
    Z = influence_columns(system, est, est.theta_full)
    assert Z.shape == (gaussian_data.n, 1)
    assert abs(Z.mean()) < 1e-8


def test_simultaneous_test_detects_neighbors(gaussian_spec, gaussian_data):
    res = simultaneous_test(gaussian_spec, gaussian_data, 0, B=500, seed=3)
    assert sorted(res.per_edge_stats) == [1, 2, 3, 4, 5]
    assert res.statistic == pytest.approx(max(res.per_edge_stats.values()))
    assert res.reject
    assert res.p_value == pytest.approx(1.0 / 501)
    assert res.one_sided_statistic is not None
    assert [e.edge for e in res.estimates] == [(0, b) for b in range(1, 6)]
    assert res.to_dict()["B"] == 500


def test_null_values_shift_the_statistic(gaussian_spec, gaussian_data):
    null = gaussian_spec.edge_params[:, 0, :]
    res = simultaneous_test(gaussian_spec, gaussian_data, 0, null_values=null, B=200)
    zero = simultaneous_test(gaussian_spec, gaussian_data, 0, B=200)
    assert res.statistic < zero.statistic
    keyed = simultaneous_test(gaussian_spec, gaussian_data, 0, null_values={1: 0.5, 2: 0.3}, B=200)
    assert keyed.statistic == pytest.approx(res.statistic)


def test_isolated_node_test_arguments(gaussian_spec, gaussian_data):
    with pytest.raises(ValueError):
        isolated_node_test(gaussian_spec, gaussian_data, 0, alpha=1.5)
    res = isolated_node_test(gaussian_spec, gaussian_data, 5, B=100, two_sided=False)
    assert not res.two_sided
    assert res.statistic == res.one_sided_statistic


def test_support_recovery_contains_true_neighbors(gaussian_spec, gaussian_data):
    recovered = support_recovery(gaussian_spec, gaussian_data, 0)
    assert {1, 2} <= recovered
    assert recovered <= {1, 2, 3, 4, 5}


def test_diff_test_on_identical_groups(gaussian_spec):
    data = sample_gaussian(gaussian_spec, 400, seed=21)
    res = diff_test(gaussian_spec, data, data, B=300)
    assert len(res.per_edge_stats) == 15
    assert res.statistic == 0.0
    assert not res.reject
    assert res.p_value == 1.0

    ests1, ests2 = res.estimates
    xia = xia_test(ests1, ests2)
    assert xia.statistic == 0.0
    shifted = -2 * math.log(6) + math.log(math.log(6))
    assert xia.shifted == pytest.approx(shifted)
    assert xia.p_value == pytest.approx(1 - math.exp(-math.exp(-shifted / 2) / math.sqrt(2 * math.pi)))


def test_diff_test_detects_changed_edge():
    spec1 = knn_graph_spec("gaussian", 4, 2, (0.4,))
    spec2 = knn_graph_spec("gaussian", 4, 0)
    res = diff_test(spec1, sample_gaussian(spec1, 1500, seed=1), sample_gaussian(spec2, 1500, seed=2), B=300)
    assert res.reject
    assert max(res.per_edge_stats, key=res.per_edge_stats.get) in {(0, 1), (1, 2), (2, 3)}


def test_xia_limit_cdf_is_a_distribution():
    assert xia_limit_cdf(-50.0) < 1e-6
    assert xia_limit_cdf(50.0) == pytest.approx(1.0)
    assert xia_limit_cdf(0.0) < xia_limit_cdf(1.0)


def test_chi2_critical_value():
    assert chi2_critical_value(0.05, 1, 1) == pytest.approx(chi2.isf(-math.log(0.95), 1))
    assert chi2_critical_value(0.05, 99, 2) > chi2_critical_value(0.05, 9, 2)
    with pytest.raises(ValueError):
        chi2_critical_value(1.0, 5, 2)


def test_chi2_simultaneous(gaussian_spec, gaussian_data):
    res = chi2_simultaneous(gaussian_spec, gaussian_data, 0)
    assert sorted(res.per_edge_stats) == [1, 2, 3, 4, 5]
    assert res.reject
    assert 0.0 <= res.p_value <= 1.0
    assert_allclose(res.critical_value, chi2_critical_value(0.05, 5, 1))


def test_critical_value_decreases_with_alpha(rng):
    z = rng.normal(size=(300, 5))
    draws = bootstrap_max(z - z.mean(axis=0), B=5000, seed=2)
    values = [bootstrap_critical_value(draws, alpha) for alpha in (0.01, 0.05, 0.1, 0.2)]
    assert all(x >= y for x, y in zip(values, values[1:]))
    assert values[0] > values[-1]

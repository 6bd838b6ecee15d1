"""Monte-Carlo acceptance checks against the reference rates (run with --runslow)"""
import pytest

from harness import preset, run_experiment


@pytest.mark.slow
@pytest.mark.parametrize("name", ["gaussian_coverage", "exponential_coverage", "nonneg_debiased_coverage"])
def test_coverage_within_windows(name):
    report = run_experiment(preset(name, "desk").with_overrides(use_cache=False))
    for row in report.aggregates:
        assert row["within_window"], f"{row['edge']}: coverage {row['coverage']:.3f} outside {row['window']}"


@pytest.mark.slow
@pytest.mark.parametrize("name,tests", [
    ("gaussian_type1", {"bootstrap"}),
    ("nonneg_type1", {"bootstrap"}),
    ("general_l_type1", {"bootstrap", "chi2"}),
])
def test_type1_within_windows(name, tests):
    report = run_experiment(preset(name, "desk").with_overrides(use_cache=False))
    assert {row["test"] for row in report.aggregates} == tests
    for row in report.aggregates:
        assert row["within_window"], f"{row['test']}: rate {row['rate']:.3f} outside {row['window']}"


@pytest.mark.slow
def test_nonneg_inverse_rows_do_not_grow():
    cfg = preset("nonneg_diagnostics", "desk").with_overrides(n_grid=(500, 5000), reps=20, use_cache=False)
    report = run_experiment(cfg)
    assert report.aggregates[-1]["non_increasing"]


@pytest.mark.slow
def test_nonneg_inverse_row_l1_at_large_n():
    """Independent nodes, p=20: the exact inverse row has l1 norm near 11.1"""
    cfg = preset("nonneg_diagnostics", "desk").with_overrides(n_grid=(50000,), reps=4, use_cache=False)
    row = run_experiment(cfg).aggregates[0]
    assert row["within_window"], f"mean row l1 {row['mean']:.2f} outside {row['window']}"

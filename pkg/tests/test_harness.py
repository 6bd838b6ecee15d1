"""Tests for experiment configs, the replication runners and dataset analysis"""
import hashlib
import json
import os

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose

from errors import ConfigError, DomainError
from harness import (PRESETS, ExperimentConfig, aggregate_coverage, aggregate_diagnostics,
                     analyze_dataset, derive_seed, emit_histogram, inverse_row_l1, preset,
                     run_coverage, run_diagnostics, run_experiment, run_type1, small_components)
from samplers import knn_graph_spec, sample_gaussian
from score_engine import DataMatrix, assemble


def _small(**overrides):
    base = dict(scenario="unit", family="gaussian", p=6, n=300, k=4, weights=(0.5, 0.3),
                edges=((1, 2), (1, 5)), reps=3, B=200, use_cache=False)
    base.update(overrides)
    return ExperimentConfig(**base)


def test_derive_seed():
    expected = int.from_bytes(hashlib.sha256(b"7:3:data").digest()[:4], "little")
    assert derive_seed(7, 3) == expected
    assert derive_seed(7, 3) != derive_seed(7, 4)
    assert derive_seed(7, 3) != derive_seed(7, 3, "bootstrap")


def test_config_validation():
    with pytest.raises(ConfigError):
        _small(family="poisson")
    with pytest.raises(ConfigError):
        _small(edges=((1, 7),))
    with pytest.raises(ConfigError):
        _small(edges=((2, 2),))
    with pytest.raises(ConfigError):
        _small(family="normal_conditionals_l2", method="debiased")
    with pytest.raises(ConfigError):
        _small(alpha=0.0)
    with pytest.raises(ConfigError):
        _small(gibbs={"warmup": 10})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"p": 10, "colour": "red"})


def test_config_json_with_preset(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"preset": "gaussian_coverage", "scale": "desk", "reps": 4, "n_workers": 1}))
    cfg = ExperimentConfig.from_json(str(path))
    assert cfg.scenario == "gaussian_coverage"
    assert cfg.reps == 4 and cfg.p == 50
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json(str(tmp_path / "missing.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json(str(bad))


def test_overrides_skip_none():
    cfg = _small()
    assert cfg.with_overrides(n=None, reps=5).reps == 5
    assert cfg.with_overrides(n=None).n == 300
    with pytest.raises(ConfigError):
        cfg.with_overrides(bogus=1)


def test_config_round_trip():
    cfg = preset("general_l_type1")
    back = ExperimentConfig.from_dict(cfg.to_dict())
    assert back == cfg
    assert cfg.model_spec().L == 2


def test_every_preset_builds():
    for name in PRESETS:
        cfg = preset(name)
        spec = cfg.model_spec()
        assert spec.p == cfg.p
        assert cfg.target_edges()[0] == (0, 1)


def test_desk_scale_widens_windows():
    full = preset("gaussian_coverage")
    desk = preset("gaussian_coverage", "desk")
    assert desk.reps == 250
    for key, (lo, hi) in full.expected.items():
        dlo, dhi = desk.expected[key]
        assert dlo < lo and dhi > hi
    with pytest.raises(ConfigError):
        preset("unknown")


def test_run_coverage_records_and_report(tmp_path):
    cfg = _small()
    report = run_coverage(cfg)
    df = report.records_frame()
    assert len(df) == cfg.reps * len(cfg.edges)
    assert set(df["edge"]) == {"(1,2)", "(1,5)"}
    assert (df["status"] == "ok").all()
    for row in report.aggregates:
        covered = df[df["edge"] == row["edge"]]["covered"].sum()
        assert row["coverage"] == pytest.approx(covered / cfg.reps)
    truth = dict(zip(df["edge"], df["truth"]))
    assert truth == {"(1,2)": 0.5, "(1,5)": 0.0}

    paths = report.write(str(tmp_path / "out"))
    for path in paths.values():
        assert os.path.exists(path)
    summary = json.loads(open(paths["summary"]).read())
    assert summary["provenance"]["seed"] == 0
    assert "EMPIRICAL COVERAGE REPORT" in open(paths["report"]).read()
    assert_allclose(pd.read_parquet(os.path.join(tmp_path, "out", "records.parquet"))["estimate"], df["estimate"])


def test_coverage_is_reproducible():
    first = run_coverage(_small(reps=2)).records_frame()
    second = run_coverage(_small(reps=2)).records_frame()
    assert_allclose(first["estimate"], second["estimate"])


def test_coverage_with_worker_pool():
    inline = run_coverage(_small(reps=2)).records_frame()
    pooled = run_coverage(_small(reps=2, n_workers=2)).records_frame()
    assert_allclose(inline["estimate"], pooled["estimate"])


def test_debiased_coverage_samples_twice_n():
    cfg = _small(method="debiased", edges=((1, 2),), reps=1, n=200)
    report = run_experiment(cfg)
    assert report.kind == "coverage"
    assert report.records[0]["status"] == "ok"


def test_failures_count_as_not_covered():
    records = [
        dict(rep=0, edge="(1,2)", l=0, truth=0.5, estimate=0.5, width=0.1, covered=True, status="ok"),
        dict(rep=1, edge="(1,2)", l=0, truth=0.5, covered=False, status="failed"),
        dict(rep=2, edge="(1,2)", l=0, truth=0.5, estimate=0.6, width=0.1, covered=False, status="ok"),
        dict(rep=3, edge="(1,2)", l=0, truth=0.5, estimate=0.45, width=0.1, covered=True, status="ok"),
    ]
    row = aggregate_coverage(records, 4, {"(1,2)": [0.4, 0.6]})[0]
    assert row["coverage"] == 0.5
    assert row["failures"] == 1
    assert row["mean_estimate"] == pytest.approx((0.5 + 0.6 + 0.45) / 3)
    assert row["within_window"]


def test_type1_rejects_everything_at_huge_alpha():
    cfg = _small(kind="type1", node=1, alpha=0.999, B=1000, reps=2, test="both")
    report = run_type1(cfg)
    rates = {row["test"]: row["rate"] for row in report.aggregates}
    assert rates == {"bootstrap": 1.0, "chi2": 1.0}


def test_diagnostics_nonneg_inverse_rows():
    cfg = _small(kind="diagnostics", family="nonneg_gaussian", p=5, k=0, weights=(),
                 weight_fn="log_plus_one", edges=((1, 2),), n_grid=(300, 3000), reps=2)
    report = run_diagnostics(cfg)
    rows = [r for r in report.aggregates if "n" in r]
    assert [r["n"] for r in rows] == [300, 3000]
    assert all(r["mean"] > 0 and r["max"] >= r["mean"] for r in rows)
    assert report.aggregates[-1]["statistic"] == "trend"


def test_diagnostics_small_components():
    cfg = _small(kind="diagnostics", family="exponential", p=5, k=2, weights=(0.3,), node_params=(2.0,),
                 weight_fn="log_plus_one", edges=((1, 2),), n_grid=(400,), reps=2, drop_largest=4,
                 gibbs={"burn_in": 50, "chains": 20})
    report = run_diagnostics(cfg)
    assert report.aggregates[0]["statistic"] == "small_components"
    assert report.aggregates[0]["failures"] == 0


def test_diagnostic_statistics(gaussian_spec, gaussian_data):
    system = assemble(gaussian_spec, gaussian_data, 0, 1)
    t = system.index_map.target_indices[0]
    assert_allclose(inverse_row_l1(system), [np.abs(np.linalg.inv(system.gamma_hat)[t]).sum()])
    mean, mx = small_components(system, 2)
    assert 0 <= mean <= mx
    with pytest.raises(ConfigError):
        small_components(system, system.dim)


def test_diagnostics_trend_flag():
    records = [dict(n=100, rep=0, value=3.0, status="ok"), dict(n=1000, rep=0, value=2.0, status="ok"),
               dict(n=1000, rep=1, value=np.nan, status="failed")]
    out = aggregate_diagnostics(records, "nonneg_gaussian", {"n=1000": [1.5, 2.5]})
    assert out[1]["failures"] == 1 and out[1]["within_window"]
    assert out[-1]["non_increasing"]


def test_emit_histogram(tmp_path):
    path = str(tmp_path / "hist" / "h.csv")
    df = emit_histogram([0.1, 0.2, 0.2, 0.9, np.nan], bins=4, path=path)
    assert df["count"].sum() == 4
    assert list(df.columns) == ["bin_left", "bin_right", "count"]
    assert os.path.exists(path)
    with pytest.raises(ConfigError):
        emit_histogram([1.0], bins=0)


def test_analyze_dataset_finds_chain(tmp_path):
    spec = knn_graph_spec("gaussian", 4, 2, (0.4,))
    data = sample_gaussian(spec, 2000, seed=5)
    dm = DataMatrix(data.values, columns=["A", "B", "C", "D"])
    graph = analyze_dataset(dm, "gaussian", threshold=0.01)
    assert len(graph.edges) == 6
    assert {("A", "B"), ("B", "C"), ("C", "D")} <= set(graph.selected)
    assert sum(graph.degrees.values()) == 2 * len(graph.selected)

    csv = str(tmp_path / "expr.csv")
    dm.to_csv(csv)
    from_file = analyze_dataset(csv, "gaussian", header=True)
    assert from_file.names == ["A", "B", "C", "D"]
    assert_allclose(from_file.edges["estimate"], graph.edges["estimate"])

    paths = graph.write(str(tmp_path / "graph"))
    graph_json = json.loads(open(paths["graph"]).read())
    assert graph_json["nodes"] == ["A", "B", "C", "D"]
    assert "GRAPH ANALYSIS REPORT" in open(paths["report"]).read()


def test_analyze_dataset_needs_two_nodes():
    with pytest.raises(DomainError):
        analyze_dataset(np.ones((10, 1)), "gaussian")

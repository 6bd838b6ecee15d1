"""
Smoke test that every module imports and the basic pipeline runs
"""
import numpy as np


def test_imports():
    """Test that all modules can be imported"""
    print("Testing imports...")
    import config  # noqa: F401
    import models  # noqa: F401
    import score_engine  # noqa: F401
    import solvers  # noqa: F401
    import estimators  # noqa: F401
    import inference  # noqa: F401
    import samplers  # noqa: F401
    import datasets  # noqa: F401
    import harness  # noqa: F401
    import reporting  # noqa: F401
    import cli  # noqa: F401
    print("✓ All modules imported successfully!")


def test_config():
    """Test configuration values"""
    print("\nTesting configuration...")
    from config import ALPHA, BOOTSTRAP_DRAWS, CACHE_DIR, CI_LEVEL, KKT_TOL, LAMBDA_C_REALS
    print(f"  KKT_TOL: {KKT_TOL}")
    print(f"  LAMBDA_C_REALS: {LAMBDA_C_REALS}")
    print(f"  BOOTSTRAP_DRAWS: {BOOTSTRAP_DRAWS}")
    print(f"  CACHE_DIR: {CACHE_DIR}")
    assert 0 < ALPHA < 1 and 0 < CI_LEVEL < 1
    assert KKT_TOL > 0 and BOOTSTRAP_DRAWS > 0
    print("✓ Configuration loaded")


def test_env_override(monkeypatch):
    """SCOREINF_ variables take precedence over defaults"""
    from config import _env
    monkeypatch.setenv("SCOREINF_BOOTSTRAP_DRAWS", "123")
    monkeypatch.setenv("SCOREINF_FLASK_DEBUG", "yes")
    assert _env("BOOTSTRAP_DRAWS", 2000, int) == 123
    assert _env("FLASK_DEBUG", False, bool) is True
    assert _env("NOT_SET_ANYWHERE", 0.5) == 0.5


def test_pipeline():
    """Sample, assemble, estimate"""
    print("\nTesting pipeline...")
    from estimators import confidence_interval, three_step_edge
    from samplers import knn_graph_spec, sample

    spec = knn_graph_spec("gaussian", 5, 2, (0.4,))
    data = sample(spec, 500, seed=1)
    est = three_step_edge(spec, data, 0, 1)
    ci = confidence_interval(est)

    print(f"  Estimate: {est.theta_tilde[0]:.3f}")
    print(f"  CI: [{ci.lower[0]:.3f}, {ci.upper[0]:.3f}]")
    assert np.isfinite(est.theta_tilde).all()
    assert ci.lower[0] < ci.upper[0]
    print("✓ Pipeline works")


if __name__ == "__main__":
    print("=" * 70)
    print("Score-Matching Inference - Module Tests")
    print("=" * 70)

    results = []
    for name, fn in (("Imports", test_imports), ("Config", test_config), ("Pipeline", test_pipeline)):
        try:
            fn()
            results.append((name, True))
        except Exception as e:
            print(f"✗ {name} failed: {e}")
            results.append((name, False))

    print("\n" + "=" * 70)
    print("Test Summary")
    print("=" * 70)
    for name, passed in results:
        status = "✓ PASS" if passed else "✗ FAIL"
        print(f"{name:20s} {status}")
    print("=" * 70)

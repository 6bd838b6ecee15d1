"""Configuration settings for the score-matching inference toolkit"""
import os
try:
	from dotenv import load_dotenv, find_dotenv  # type: ignore
	# Load from current working directory chain
	load_dotenv(find_dotenv(usecwd=True))
	# Also load .env next to this file to be robust to cwd differences
	env_path = os.path.join(os.path.dirname(__file__), '.env')
	if os.path.exists(env_path):
		load_dotenv(env_path, override=False)
except Exception:
	# python-dotenv is optional; environment variables still work without it
	pass

VERSION = "0.1.0"
ENV_PREFIX = "SCOREINF_"


def _env(name, default, cast=float):
	"""Read SCOREINF_<name> from the environment, falling back to default"""
	raw = os.getenv(ENV_PREFIX + name)
	if raw is None or raw == "":
		return default
	if cast is bool:
		return raw.strip().lower() in ("1", "true", "yes", "on")
	return cast(raw)


# Solver settings (coordinate descent, refit, CLIME rows)
KKT_TOL = _env("KKT_TOL", 1e-8)
MAX_SWEEPS = _env("MAX_SWEEPS", 100_000, int)
REFIT_COND_LIMIT = _env("REFIT_COND_LIMIT", 1e12)
REFIT_RIDGE_SCALE = _env("REFIT_RIDGE_SCALE", 1e-10)
CLIME_TOL = _env("CLIME_TOL", 1e-8)

# Tuning: lambda = c * sqrt(log s' / n)
LAMBDA_C_REALS = _env("LAMBDA_C_REALS", 0.5)
LAMBDA_C_NONNEG = _env("LAMBDA_C_NONNEG", 1.0)
# Constraint radius of the debiasing rows; the pilot constant shrinks M far below the inverse
LAMBDA2_C_DEBIAS = _env("LAMBDA2_C_DEBIAS", 0.1)

# Inference defaults
CI_LEVEL = _env("CI_LEVEL", 0.95)
ALPHA = _env("ALPHA", 0.05)
BOOTSTRAP_DRAWS = _env("BOOTSTRAP_DRAWS", 2000, int)
CALIBRATION_DRAWS = _env("CALIBRATION_DRAWS", 100_000, int)
BOOTSTRAP_CHUNK = _env("BOOTSTRAP_CHUNK", 500, int)

# Gibbs samplers (normal conditionals and exponential GM)
GIBBS_BURN_IN = _env("GIBBS_BURN_IN", 500, int)
GIBBS_THINNING = _env("GIBBS_THINNING", 3, int)
# Independent chains advanced together; each contributes n / chains kept states
GIBBS_CHAINS = _env("GIBBS_CHAINS", 100, int)

# Gibbs sampler for the truncated (non-negative) Gaussian
TRUNC_GIBBS_BURN_IN = _env("TRUNC_GIBBS_BURN_IN", 1000, int)
TRUNC_GIBBS_THINNING = _env("TRUNC_GIBBS_THINNING", 5, int)

# Worker pool for replications / edges (1 = run inline)
N_WORKERS = _env("N_WORKERS", 1, int)

# Cache directory (sampled data matrices, parquet)
CACHE_DIR = _env("CACHE_DIR", "cache", str)
DATA_CACHE_DIR = os.path.join(CACHE_DIR, "data")

# Reports land here unless --out is given
RESULTS_DIR = _env("RESULTS_DIR", "results", str)

# Flask settings
FLASK_HOST = _env("FLASK_HOST", '0.0.0.0', str)
FLASK_PORT = _env("FLASK_PORT", 5000, int)
FLASK_DEBUG = _env("FLASK_DEBUG", False, bool)

"""Sampled data matrices with a parquet cache"""
import logging
import os

import pandas as pd

from config import DATA_CACHE_DIR
from data_utils import ensure_dir, sanitize_name, spec_hash
from samplers import sample
from score_engine import DataMatrix

logger = logging.getLogger(__name__)


def cache_path(scenario, spec, n, seed, cfg=None, cache_dir=DATA_CACHE_DIR):
    clean = sanitize_name(scenario)
    chain = "" if cfg is None else f"_b{cfg.burn_in}_t{cfg.thinning}_c{cfg.chains}"
    return os.path.join(cache_dir, f"{clean}_{spec_hash(spec)}_n{n}_s{seed}{chain}.parquet")


def get_or_create_dataset(scenario, spec, n, seed, cfg=None, cache_dir=DATA_CACHE_DIR, use_cache=True):
    """
    Get a sampled data matrix from the cache or sample and store it

    Args:
        scenario (str): Scenario id used in the cache key
        spec (ModelSpec): Generating model
        n (int): Sample count
        seed (int): Sampler seed
        cfg (GibbsConfig): Optional Gibbs settings
        cache_dir (str): Cache directory
        use_cache (bool): Skip the cache entirely when False

    Returns:
        DataMatrix: n x p samples
    """
    if not use_cache:
        return sample(spec, n, seed, cfg)

    path = cache_path(scenario, spec, n, seed, cfg, cache_dir)
    if os.path.exists(path):
        logger.debug("Loading %s from cache", path)
        try:
            df = pd.read_parquet(path)
            return DataMatrix(df.to_numpy(dtype=float), spec.domain)
        except Exception as e:
            logger.warning("Could not read cached dataset %s: %s; resampling", path, e)

    data = sample(spec, n, seed, cfg)
    ensure_dir(cache_dir)
    df = pd.DataFrame(data.values, columns=[f"x{j + 1}" for j in range(data.p)])
    df.to_parquet(path, index=False)
    logger.debug("Saved %s (shape %s)", path, data.values.shape)
    return data

"""Utilities for data files, names and report output"""
import hashlib
import json
import os

import numpy as np
import pandas as pd

from models import Family, family_info
from score_engine import DataMatrix


def sanitize_name(name):
    """
    Sanitize a scenario or dataset name for use in filenames

    Keeps the part after the last path separator and replaces characters
    that are invalid in Windows filenames.

    Args:
        name (str): Scenario id, dataset path or label

    Returns:
        str: Name safe for filenames
    """
    clean = os.path.basename(str(name).rstrip("/\\")) or "unnamed"
    for char in '<>:"/\\|?* ':
        clean = clean.replace(char, '_')
    return clean


def spec_hash(spec, length=12):
    """Short content hash of a ModelSpec (family, weights and parameters)"""
    payload = json.dumps(spec.to_dict(), sort_keys=True).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()[:length]


def config_hash(payload, length=12):
    return hashlib.sha256(json.dumps(payload, sort_keys=True, default=str).encode("utf-8")).hexdigest()[:length]


def load_data_matrix(path, family, header=False):
    """
    Load a CSV for a family, checking the family's domain

    Args:
        path (str): CSV path (one sample per row)
        family (Family or str): Model family
        header (bool): First row holds node names

    Returns:
        DataMatrix: Loaded matrix

    Raises:
        DomainError: If entries are non-numeric or outside the domain
    """
    domain = family_info(Family(family)).domain
    return DataMatrix.from_csv(path, domain=domain, header=header)


def ensure_dir(path):
    if path:
        os.makedirs(path, exist_ok=True)
    return path


def write_json(payload, path):
    ensure_dir(os.path.dirname(path))
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=_json_default)
    return path


def write_records(records, path):
    """Write replication/edge records as CSV with a parquet copy next to it"""
    ensure_dir(os.path.dirname(path))
    df = pd.DataFrame(records)
    df.to_csv(path, index=False)
    df.to_parquet(os.path.splitext(path)[0] + ".parquet", index=False)
    return df


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (set, frozenset, tuple)):
        return sorted(obj) if isinstance(obj, (set, frozenset)) else list(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")

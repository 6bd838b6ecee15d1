"""Empirical edge-conditional score systems and data matrices"""
import logging
import os
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from errors import DomainError, EmptyDataError, InvalidSpecError
from models import Domain, Family, check_domain, edge_index_map, score_arrays

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class DataMatrix:
    """
    n x p sample matrix with the domain flag of its generating model

    columns carries optional node names (e.g. protein names from a CSV header).
    """
    values: np.ndarray
    domain: Domain = Domain.REALS
    columns: tuple = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise DomainError(f"data must be a 2-D matrix, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DomainError("data contains non-finite entries")
        domain = Domain(self.domain)
        if domain is Domain.NONNEG_REALS and np.any(values < 0):
            raise DomainError("non-negative data contains negative entries")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "domain", domain)
        if self.columns is not None:
            columns = tuple(str(c) for c in self.columns)
            if len(columns) != values.shape[1]:
                raise DomainError(f"{len(columns)} column names for {values.shape[1]} columns")
            duplicates = sorted({c for c in columns if columns.count(c) > 1})
            if duplicates:
                raise DomainError(f"duplicate column names: {', '.join(duplicates)}")
            object.__setattr__(self, "columns", columns)

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def p(self):
        return self.values.shape[1]

    def node_names(self):
        if self.columns is not None:
            return list(self.columns)
        return [str(j + 1) for j in range(self.p)]

    def rows(self, index):
        """Sub-sample by row index, keeping domain and names"""
        return DataMatrix(self.values[np.asarray(index)], self.domain, self.columns)

    def stacked(self, other):
        return DataMatrix(np.vstack([self.values, other.values]), self.domain, self.columns)

    @classmethod
    def from_csv(cls, path, domain=Domain.REALS, header=False):
        """
        Load a data matrix from CSV

        Args:
            path (str): CSV file, one sample per row
            domain (Domain): Declared domain of the data
            header (bool): Whether the first row holds node names

        Returns:
            DataMatrix: Loaded matrix
        """
        if not os.path.exists(path):
            raise FileNotFoundError(f"data file not found: {path}")
        df = pd.read_csv(path, header=0 if header else None)
        try:
            values = df.to_numpy(dtype=float)
        except ValueError as e:
            raise DomainError(f"non-numeric entries in {path}: {e}") from e
        columns = tuple(df.columns) if header else None
        logger.info("Loaded %s: n=%d, p=%d", path, values.shape[0], values.shape[1])
        return cls(values, domain, columns)

    def to_csv(self, path):
        df = pd.DataFrame(self.values, columns=list(self.columns) if self.columns else None)
        df.to_csv(path, index=False, header=self.columns is not None, float_format="%.17g")


def as_data_matrix(data, spec=None):
    """Coerce an array or DataMatrix, checking it against the spec's domain"""
    if isinstance(data, DataMatrix):
        dm = data
    else:
        dm = DataMatrix(data, spec.domain if spec is not None else Domain.REALS)
    if spec is not None:
        if dm.p != spec.p:
            raise DomainError(f"data has {dm.p} columns, model has p={spec.p}")
        check_domain(spec, dm.values)
    return dm


@dataclass(frozen=True, eq=False)
class EdgeScoreSystem:
    """
    Quadratic score system of one edge

    gamma_hat = mean_i (phi1_i phi1_i^T + phi2_i phi2_i^T), g_hat = mean_i g_i.
    phi1, phi2 and g hold the per-sample rows (n x s'); they are None when the
    system was assembled in streaming mode.
    """
    index_map: object
    n: int
    gamma_hat: np.ndarray
    g_hat: np.ndarray
    phi1: np.ndarray = field(default=None, repr=False)
    phi2: np.ndarray = field(default=None, repr=False)
    g: np.ndarray = field(default=None, repr=False)

    @property
    def dim(self):
        return self.index_map.dim

    @property
    def has_samples(self):
        return self.phi1 is not None

    def sample_residuals(self, theta):
        """Gamma(x_i) theta + g(x_i) for every sample, shape (n, s')"""
        if not self.has_samples:
            raise ValueError("per-sample arrays were not retained (streaming system)")
        theta = np.asarray(theta, dtype=float)
        return (self.phi1 * (self.phi1 @ theta)[:, None]
                + self.phi2 * (self.phi2 @ theta)[:, None]
                + self.g)

    def restricted(self, index):
        """Sub-system on a coordinate subset (same samples)"""
        index = np.asarray(index, dtype=int)
        sub = np.ix_(index, index)
        return (self.gamma_hat[sub], self.g_hat[index])


def _center(spec, X, center):
    if not center:
        return X
    if spec.family is not Family.GAUSSIAN:
        raise InvalidSpecError("empirical-mean centering is only defined for the Gaussian family")
    return X - X.mean(axis=0)


def assemble(spec, data, a, b, center=False, streaming=False, chunk_size=20_000):
    """
    Assemble the empirical score system for edge (a, b)

    Args:
        spec (ModelSpec): Model specification
        data (DataMatrix or numpy.ndarray): Samples (n x p)
        a (int): First node (0-based)
        b (int): Second node (0-based)
        center (bool): Subtract the column means first (Gaussian family only)
        streaming (bool): Keep only gamma_hat and g_hat, not the per-sample rows
        chunk_size (int): Rows per block in streaming mode

    Returns:
        EdgeScoreSystem: Assembled system
    """
    dm = as_data_matrix(data, spec)
    if dm.n == 0:
        raise EmptyDataError("cannot assemble a score system from zero samples")
    index_map = edge_index_map(spec, a, b)
    X = _center(spec, dm.values, center)
    n, s = dm.n, index_map.dim

    if streaming:
        gamma = np.zeros((s, s))
        g_sum = np.zeros(s)
        for start in range(0, n, chunk_size):
            Phi1, Phi2, G = score_arrays(spec, X[start:start + chunk_size], index_map)
            gamma += Phi1.T @ Phi1 + Phi2.T @ Phi2
            g_sum += G.sum(axis=0)
        gamma = gamma / n
        gamma = (gamma + gamma.T) / 2.0
        return EdgeScoreSystem(index_map, n, gamma, g_sum / n)

    Phi1, Phi2, G = score_arrays(spec, X, index_map)
    gamma = (Phi1.T @ Phi1 + Phi2.T @ Phi2) / n
    gamma = (gamma + gamma.T) / 2.0
    logger.debug("Assembled edge (%d, %d): n=%d, dim=%d", a, b, n, s)
    return EdgeScoreSystem(index_map, n, gamma, G.mean(axis=0), Phi1, Phi2, G)


def objective(system, theta):
    """1/2 theta^T Gamma theta + theta^T g"""
    theta = _check_theta(system, theta)
    return 0.5 * theta @ system.gamma_hat @ theta + theta @ system.g_hat


def gradient(system, theta):
    """Gamma theta + g"""
    theta = _check_theta(system, theta)
    return system.gamma_hat @ theta + system.g_hat


def _check_theta(system, theta):
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (system.dim,):
        raise ValueError(f"theta must have length {system.dim}, got shape {theta.shape}")
    return theta


def nuisance_regression_system(system, target):
    """
    Decorrelation regression of one target coordinate on the rest

    Step 2 then solves min 1/2 g^T A g - b^T g + lambda |g|_1.

    Args:
        system (EdgeScoreSystem): Assembled system
        target (int): Position of a target coordinate

    Returns:
        tuple: (A, b) with A = Gamma[-t, -t] and b = Gamma[-t, t]
    """
    if target not in system.index_map.target_indices:
        raise ValueError(f"{target} is not a target index {system.index_map.target_indices}")
    rest = system.index_map.nuisance_indices(target)
    return system.gamma_hat[np.ix_(rest, rest)], system.gamma_hat[rest, target]

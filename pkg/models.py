"""Model families: sufficient statistics, edge index maps and score components

Every family is a pairwise exponential family

    log p(x) = sum_a sum_k theta_a^(k) t^(k)(x_a)
             + sum_{a<b} sum_l theta_ab^(l) t^(l)(x_a, x_b) - Psi(theta)

where each node statistic is ``coef * x_a**power`` and each pair statistic is
``coef * x_a**power * x_b**power``.  Pairs are counted once.  h(x) is zero for
every implemented family, so g reduces to the Laplacian of phi (or its
l-weighted analogue); the constant c(x) of the score is never formed.
"""
import json
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from math import prod

import numpy as np

from errors import DomainError, InvalidEdgeError, InvalidSpecError


class Family(str, Enum):
    GAUSSIAN = "gaussian"
    NONNEG_GAUSSIAN = "nonneg_gaussian"
    NORMAL_CONDITIONALS_L1 = "normal_conditionals_l1"
    NORMAL_CONDITIONALS_L2 = "normal_conditionals_l2"
    EXPONENTIAL = "exponential"


class Domain(str, Enum):
    REALS = "reals"
    NONNEG_REALS = "nonneg_reals"


class WeightFn(str, Enum):
    IDENTITY = "identity"          # l(x) = 1, plain score matching
    SQUARE = "square"              # l(x) = x^2
    LOG_PLUS_ONE = "log_plus_one"  # l(x) = log(x + 1)


@dataclass(frozen=True)
class Statistic:
    """Monomial statistic coef * x**power (node) or coef * (x_a x_c)**power (pair)"""
    coef: float
    power: int


@dataclass(frozen=True)
class FamilyInfo:
    node_stats: tuple
    edge_stats: tuple
    domain: Domain


FAMILIES = {
    Family.GAUSSIAN: FamilyInfo(
        (Statistic(-0.5, 2),), (Statistic(-1.0, 1),), Domain.REALS),
    Family.NONNEG_GAUSSIAN: FamilyInfo(
        (Statistic(-0.5, 2),), (Statistic(-1.0, 1),), Domain.NONNEG_REALS),
    Family.NORMAL_CONDITIONALS_L1: FamilyInfo(
        (Statistic(1.0, 1), Statistic(1.0, 2)), (Statistic(1.0, 2),), Domain.REALS),
    Family.NORMAL_CONDITIONALS_L2: FamilyInfo(
        (Statistic(1.0, 1), Statistic(1.0, 2)),
        (Statistic(1.0, 1), Statistic(1.0, 2)), Domain.REALS),
    Family.EXPONENTIAL: FamilyInfo(
        (Statistic(-1.0, 1),), (Statistic(-1.0, 1),), Domain.NONNEG_REALS),
}


def family_info(family):
    return FAMILIES[Family(family)]


def default_weight_fn(family):
    """Identity on R^p, log(x+1) on R_+^p"""
    if family_info(family).domain is Domain.REALS:
        return WeightFn.IDENTITY
    return WeightFn.LOG_PLUS_ONE


# =============================================================================
# Weight functions for generalized l-score matching
# =============================================================================

def weight_values(weight_fn, x):
    """
    Evaluate l(x) and l'(x) elementwise

    Args:
        weight_fn (WeightFn): Weight function
        x (numpy.ndarray): Non-negative values

    Returns:
        tuple: (l(x), l'(x)) arrays shaped like x
    """
    weight_fn = WeightFn(weight_fn)
    if weight_fn is WeightFn.IDENTITY:
        return np.ones_like(x), np.zeros_like(x)
    if weight_fn is WeightFn.SQUARE:
        return x ** 2, 2.0 * x
    return np.log1p(x), 1.0 / (x + 1.0)


# =============================================================================
# Model specification
# =============================================================================

@dataclass(frozen=True, eq=False)
class ModelSpec:
    """
    A model family plus its true parameters

    edge_params has shape (L, p, p): symmetric, zero diagonal.
    node_params has shape (K, p), ordered like the family's node statistics.
    For the Gaussian families node_params[0] is the diagonal of the precision
    matrix and edge_params[0] its off-diagonal part.
    """
    family: Family
    edge_params: np.ndarray
    node_params: np.ndarray
    weight_fn: WeightFn = None

    def __post_init__(self):
        family = Family(self.family)
        object.__setattr__(self, "family", family)
        info = FAMILIES[family]
        weight_fn = default_weight_fn(family) if self.weight_fn is None else WeightFn(self.weight_fn)
        object.__setattr__(self, "weight_fn", weight_fn)

        edge = np.array(self.edge_params, dtype=float)
        node = np.array(self.node_params, dtype=float)
        if edge.ndim == 2:
            edge = edge[None, :, :]
        if node.ndim == 1:
            node = node[None, :]
        L, K = len(info.edge_stats), len(info.node_stats)
        if edge.shape[0] != L or edge.shape[1] != edge.shape[2]:
            raise InvalidSpecError(f"{family.value} needs edge_params of shape ({L}, p, p), got {edge.shape}")
        p = edge.shape[1]
        if node.shape != (K, p):
            raise InvalidSpecError(f"{family.value} needs node_params of shape ({K}, {p}), got {node.shape}")
        if not (np.all(np.isfinite(edge)) and np.all(np.isfinite(node))):
            raise InvalidSpecError("parameters must be finite")
        for l in range(L):
            if not np.array_equal(edge[l], edge[l].T):
                raise InvalidSpecError(f"edge_params[{l}] is not exactly symmetric")
            if np.any(np.diag(edge[l]) != 0):
                raise InvalidSpecError(f"edge_params[{l}] must have a zero diagonal")
        if (info.domain is Domain.REALS) != (weight_fn is WeightFn.IDENTITY):
            raise InvalidSpecError(
                f"weight_fn {weight_fn.value} is not valid on {info.domain.value} "
                "(identity exactly on R^p)")
        if family is Family.EXPONENTIAL and (np.any(edge < 0) or np.any(node < 0)):
            raise InvalidSpecError("exponential graphical models need non-negative parameters")

        edge.setflags(write=False)
        node.setflags(write=False)
        object.__setattr__(self, "edge_params", edge)
        object.__setattr__(self, "node_params", node)

    @property
    def p(self):
        return self.edge_params.shape[1]

    @property
    def L(self):
        return self.edge_params.shape[0]

    @property
    def K(self):
        return self.node_params.shape[0]

    @property
    def domain(self):
        return FAMILIES[self.family].domain

    @property
    def info(self):
        return FAMILIES[self.family]

    def precision(self):
        """Precision matrix Omega for the (non-negative) Gaussian families"""
        if self.family not in (Family.GAUSSIAN, Family.NONNEG_GAUSSIAN):
            raise InvalidSpecError(f"{self.family.value} has no precision matrix")
        return np.diag(self.node_params[0]) + self.edge_params[0]

    @classmethod
    def template(cls, family, p, weight_fn=None):
        """Zero-parameter spec carrying only family, p and weight function (for estimation)"""
        info = family_info(family)
        return cls(family, np.zeros((len(info.edge_stats), p, p)), np.zeros((len(info.node_stats), p)), weight_fn)

    def with_weight_fn(self, weight_fn):
        return ModelSpec(self.family, self.edge_params, self.node_params, weight_fn)

    # -- serialization ---------------------------------------------------------

    def to_dict(self):
        return {
            "family": self.family.value,
            "p": self.p,
            "L": self.L,
            "K": self.K,
            "domain": self.domain.value,
            "weight_fn": self.weight_fn.value,
            "edge_params": self.edge_params.tolist(),
            "node_params": self.node_params.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        spec = cls(data["family"], data["edge_params"], data["node_params"], data.get("weight_fn"))
        for key in ("p", "L", "K"):
            if key in data and data[key] != getattr(spec, key):
                raise InvalidSpecError(f"declared {key}={data[key]} does not match parameters ({getattr(spec, key)})")
        return spec

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


# =============================================================================
# Edge index map
# =============================================================================

@dataclass(frozen=True)
class Slot:
    """Semantic role of one coordinate of theta^{ab}"""
    role: str    # node_a | node_b | cross_a | cross_b | target
    node: int    # owning node for node stats, partner c for pair stats
    index: int   # k for node stats, l for pair stats

    def key(self, a, b):
        """Orientation-free identity of the underlying parameter"""
        if self.role in ("node_a", "node_b"):
            return ("node", self.node, self.index)
        owner = a if self.role in ("cross_a", "target") else b
        return ("edge", frozenset((owner, self.node)), self.index)


@dataclass(frozen=True, eq=False)
class EdgeIndexMap:
    """
    Coordinate layout of theta^{ab}

    [K node stats of a] [(a, c, l) for c != a ascending, l inner]
    [K node stats of b] [(b, c, l) for c not in {a, b} ascending, l inner]

    The target block (a, b, .) sits in a's row at the position of c = b.
    """
    edge: tuple
    p: int
    K: int
    L: int
    slots: tuple
    target_indices: tuple
    groups: tuple
    ungrouped: tuple
    a_node_idx: np.ndarray = field(repr=False)
    a_row_nodes: np.ndarray = field(repr=False)
    a_row_idx: np.ndarray = field(repr=False)
    b_node_idx: np.ndarray = field(repr=False)
    b_row_nodes: np.ndarray = field(repr=False)
    b_row_idx: np.ndarray = field(repr=False)

    @property
    def dim(self):
        return len(self.slots)

    @property
    def a(self):
        return self.edge[0]

    @property
    def b(self):
        return self.edge[1]

    def nuisance_indices(self, target):
        """All coordinates except one target coordinate"""
        return np.array([j for j in range(self.dim) if j != target], dtype=int)

    def labels(self):
        """Readable coordinate names, 1-based nodes"""
        out = []
        for s in self.slots:
            if s.role in ("node_a", "node_b"):
                out.append(f"theta_{s.node + 1}^({s.index + 1})")
            else:
                owner = self.a if s.role in ("cross_a", "target") else self.b
                out.append(f"theta_{owner + 1},{s.node + 1}^({s.index + 1})")
        return out


@lru_cache(maxsize=4096)
def _build_index_map(p, K, L, a, b):
    slots, a_node_idx, a_row_idx, b_node_idx, b_row_idx = [], [], [], [], []
    targets, groups = [], []

    for k in range(K):
        a_node_idx.append(len(slots))
        slots.append(Slot("node_a", a, k))
    a_row_nodes = [c for c in range(p) if c != a]
    for c in a_row_nodes:
        block = []
        for l in range(L):
            block.append(len(slots))
            slots.append(Slot("target" if c == b else "cross_a", c, l))
        a_row_idx.append(block)
        if c == b:
            targets.extend(block)
        else:
            groups.append(tuple(block))

    for k in range(K):
        b_node_idx.append(len(slots))
        slots.append(Slot("node_b", b, k))
    b_row_nodes = [c for c in range(p) if c not in (a, b)]
    for c in b_row_nodes:
        block = []
        for l in range(L):
            block.append(len(slots))
            slots.append(Slot("cross_b", c, l))
        b_row_idx.append(block)
        groups.append(tuple(block))

    grouped = {j for g in groups for j in g}
    ungrouped = tuple(j for j in range(len(slots)) if j not in grouped)

    def frozen(values, shape=None):
        arr = np.array(values, dtype=int)
        if shape is not None:
            arr = arr.reshape(shape)
        arr.setflags(write=False)
        return arr

    return EdgeIndexMap(
        edge=(a, b), p=p, K=K, L=L, slots=tuple(slots),
        target_indices=tuple(targets), groups=tuple(groups), ungrouped=ungrouped,
        a_node_idx=frozen(a_node_idx), a_row_nodes=frozen(a_row_nodes),
        a_row_idx=frozen(a_row_idx, (len(a_row_nodes), L)),
        b_node_idx=frozen(b_node_idx), b_row_nodes=frozen(b_row_nodes),
        b_row_idx=frozen(b_row_idx, (len(b_row_nodes), L)),
    )


def check_edge(p, a, b):
    if not (isinstance(a, (int, np.integer)) and isinstance(b, (int, np.integer))):
        raise InvalidEdgeError(f"edge nodes must be integers, got ({a!r}, {b!r})")
    if a == b:
        raise InvalidEdgeError(f"edge ({a}, {b}) is a self-loop")
    if not (0 <= a < p and 0 <= b < p):
        raise InvalidEdgeError(f"edge ({a}, {b}) outside nodes 0..{p - 1}")


def edge_index_map(spec, a, b):
    """
    Coordinate layout of theta^{ab} for an (ordered) edge, 0-based nodes

    Args:
        spec (ModelSpec): Model specification
        a (int): First node; its row holds the target block
        b (int): Second node

    Returns:
        EdgeIndexMap: dim = 2K + 2(p-2)L + L

    Raises:
        InvalidEdgeError: If a == b or a node is out of range
    """
    check_edge(spec.p, a, b)
    return _build_index_map(spec.p, spec.K, spec.L, int(a), int(b))


# =============================================================================
# Score components
# =============================================================================

@dataclass(frozen=True, eq=False)
class ScoreComponents:
    """phi1 = d phi / d x_a, phi2 = d phi / d x_b (l-weighted), g = Laplacian term"""
    phi1: np.ndarray
    phi2: np.ndarray
    g: np.ndarray


def _power_derivative(x, power, order):
    """order-th derivative of x**power"""
    if order > power:
        return np.zeros_like(x)
    return prod(range(power - order + 1, power + 1)) * x ** (power - order)


def check_domain(spec, X):
    X = np.asarray(X, dtype=float)
    if not np.all(np.isfinite(X)):
        raise DomainError("data contains non-finite entries")
    if spec.domain is Domain.NONNEG_REALS and np.any(X < 0):
        raise DomainError(f"{spec.family.value} data must be non-negative")
    return X


def sufficient_statistics(spec, X, index_map):
    """phi(x) for each row of X, shape (n, s')"""
    X = np.atleast_2d(check_domain(spec, X))
    m = index_map
    xa, xb = X[:, m.a], X[:, m.b]
    phi = np.zeros((X.shape[0], m.dim))
    for k, st in enumerate(spec.info.node_stats):
        phi[:, m.a_node_idx[k]] = st.coef * xa ** st.power
        phi[:, m.b_node_idx[k]] = st.coef * xb ** st.power
    for l, st in enumerate(spec.info.edge_stats):
        phi[:, m.a_row_idx[:, l]] = st.coef * (xa[:, None] * X[:, m.a_row_nodes]) ** st.power
        if len(m.b_row_nodes):
            phi[:, m.b_row_idx[:, l]] = st.coef * (xb[:, None] * X[:, m.b_row_nodes]) ** st.power
    return phi


def score_arrays(spec, X, index_map):
    """
    Per-sample score components for every row of X

    Args:
        spec (ModelSpec): Model specification
        X (numpy.ndarray): Data matrix (n x p)
        index_map (EdgeIndexMap): Layout from edge_index_map

    Returns:
        tuple: (Phi1, Phi2, G), each of shape (n, s')

    Raises:
        DomainError: If X leaves the family's domain
    """
    X = np.atleast_2d(check_domain(spec, X))
    m = index_map
    n = X.shape[0]
    xa, xb = X[:, m.a], X[:, m.b]
    Phi1, Phi2 = np.zeros((n, m.dim)), np.zeros((n, m.dim))
    Phi11, Phi22 = np.zeros((n, m.dim)), np.zeros((n, m.dim))

    for k, st in enumerate(spec.info.node_stats):
        ia, ib = m.a_node_idx[k], m.b_node_idx[k]
        Phi1[:, ia] = st.coef * _power_derivative(xa, st.power, 1)
        Phi11[:, ia] = st.coef * _power_derivative(xa, st.power, 2)
        Phi2[:, ib] = st.coef * _power_derivative(xb, st.power, 1)
        Phi22[:, ib] = st.coef * _power_derivative(xb, st.power, 2)

    for l, st in enumerate(spec.info.edge_stats):
        d = st.power
        cols = m.a_row_idx[:, l]
        partners = X[:, m.a_row_nodes] ** d
        Phi1[:, cols] = st.coef * _power_derivative(xa, d, 1)[:, None] * partners
        Phi11[:, cols] = st.coef * _power_derivative(xa, d, 2)[:, None] * partners

        # the target statistic also moves with x_b
        t = m.target_indices[l]
        Phi2[:, t] = st.coef * xa ** d * _power_derivative(xb, d, 1)
        Phi22[:, t] = st.coef * xa ** d * _power_derivative(xb, d, 2)

        if len(m.b_row_nodes):
            cols = m.b_row_idx[:, l]
            partners = X[:, m.b_row_nodes] ** d
            Phi2[:, cols] = st.coef * _power_derivative(xb, d, 1)[:, None] * partners
            Phi22[:, cols] = st.coef * _power_derivative(xb, d, 2)[:, None] * partners

    if spec.weight_fn is WeightFn.IDENTITY:
        return Phi1, Phi2, Phi11 + Phi22

    la, dla = weight_values(spec.weight_fn, xa)
    lb, dlb = weight_values(spec.weight_fn, xb)
    G = (la[:, None] * Phi11 + lb[:, None] * Phi22
         + dla[:, None] * Phi1 + dlb[:, None] * Phi2)
    Phi1 *= np.sqrt(la)[:, None]
    Phi2 *= np.sqrt(lb)[:, None]
    return Phi1, Phi2, G


def score_components(spec, x, index_map):
    """
    Score components of a single sample

    Args:
        spec (ModelSpec): Model specification
        x (numpy.ndarray): Sample vector of length p
        index_map (EdgeIndexMap): Layout from edge_index_map

    Returns:
        ScoreComponents: phi1, phi2 and g, each of length s'
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.p,):
        raise DomainError(f"sample must have length {spec.p}, got shape {x.shape}")
    Phi1, Phi2, G = score_arrays(spec, x[None, :], index_map)
    return ScoreComponents(Phi1[0], Phi2[0], G[0])


def true_edge_value(spec, a, b):
    """theta*_ab^(l) for l in [L]; zeros when a and b are not adjacent"""
    check_edge(spec.p, a, b)
    return np.array(spec.edge_params[:, a, b], dtype=float)

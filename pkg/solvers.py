"""Solvers for quadratic objectives with l1 / group penalties

All problems share the form

    minimize  1/2 theta^T A theta + b^T theta + penalty(theta)

with A symmetric positive semidefinite.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, linprog

from config import CLIME_TOL, KKT_TOL, MAX_SWEEPS, REFIT_COND_LIMIT, REFIT_RIDGE_SCALE
from errors import InfeasibleError, NumericalError, SingularSystemError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class QuadraticLassoProblem:
    A: np.ndarray
    b: np.ndarray
    lam: float
    groups: tuple = None
    tol: float = KKT_TOL
    max_iter: int = MAX_SWEEPS

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or b.shape != (A.shape[0],):
            raise ValueError(f"incompatible shapes A{A.shape}, b{b.shape}")
        if not np.allclose(A, A.T, rtol=0, atol=1e-10 * max(1.0, np.abs(A).max(initial=0))):
            raise ValueError("A must be symmetric")
        if self.lam < 0:
            raise ValueError(f"lambda must be non-negative, got {self.lam}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        if self.groups is not None:
            groups = tuple(tuple(int(j) for j in g) for g in self.groups)
            seen = [j for g in groups for j in g]
            if len(seen) != len(set(seen)) or any(j < 0 or j >= len(b) for j in seen):
                raise ValueError("groups must be disjoint index blocks within range")
            object.__setattr__(self, "groups", groups)

    @property
    def dim(self):
        return len(self.b)

    def blocks(self):
        """Penalty blocks ordered by first index; ungrouped coordinates are singletons"""
        groups = list(self.groups or ())
        grouped = {j for g in groups for j in g}
        singles = [(j,) for j in range(self.dim) if j not in grouped]
        return sorted(groups + singles, key=min)

    def objective(self, theta):
        penalty = 0.0
        blocks = self.blocks()
        for blk in blocks:
            penalty += np.linalg.norm(theta[list(blk)])
        return 0.5 * theta @ self.A @ theta + self.b @ theta + self.lam * penalty


@dataclass(frozen=True, eq=False)
class SolveResult:
    theta: np.ndarray
    support: tuple
    kkt_residual: float
    iterations: int
    converged: bool
    objective: float


def _soft_threshold(z, lam):
    return np.sign(z) * max(abs(z) - lam, 0.0)


def kkt_residual(prob, theta):
    """Largest violation of the (block) subgradient optimality conditions"""
    grad = prob.A @ theta + prob.b
    worst = 0.0
    blocks = prob.blocks()
    for blk in blocks:
        idx = list(blk)
        th, gr = theta[idx], grad[idx]
        norm = np.linalg.norm(th)
        if norm == 0.0:
            worst = max(worst, np.linalg.norm(gr) - prob.lam)
        else:
            worst = max(worst, np.linalg.norm(gr + prob.lam * th / norm))
    return max(worst, 0.0)


def _block_step(A_GG, c, lam):
    """
    Minimize 1/2 t^T A_GG t + c^T t + lam |t|_2 over one block

    Zero when |c| <= lam; otherwise t = -(A_GG + mu I)^{-1} c where mu solves
    mu^2 sum_i chat_i^2 / (d_i + mu)^2 = lam^2 in the eigenbasis of A_GG.
    """
    norm_c = np.linalg.norm(c)
    if norm_c <= lam:
        return np.zeros_like(c)
    d, Q = np.linalg.eigh(A_GG)
    d = np.maximum(d, 0.0)
    if d.max() <= 0.0:
        return np.zeros_like(c)  # unbounded along c; leave for the KKT check
    chat = Q.T @ c
    if lam == 0.0:
        if d.min() <= 0.0:
            return np.zeros_like(c)
        return -Q @ (chat / d)

    def radius(mu):
        return mu * np.linalg.norm(chat / (d + mu)) - lam

    upper = 2.0 * lam * d.max() / (norm_c - lam) + 1e-12
    while radius(upper) < 0:
        upper *= 2.0
    mu = brentq(radius, 0.0, upper, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return -Q @ (chat / (d + mu))


def _coordinate_descent(prob):
    A, b, lam = prob.A, prob.b, prob.lam
    blocks = prob.blocks()
    theta = np.zeros(prob.dim)
    grad = b.copy()

    def update(blk):
        idx = list(blk)
        if len(idx) == 1:
            j = idx[0]
            ajj = A[j, j]
            old = theta[j]
            if ajj <= 0.0:
                new = 0.0
            else:
                new = _soft_threshold(ajj * old - grad[j], lam) / ajj
            if new != old:
                grad[:] += A[:, j] * (new - old)
                theta[j] = new
            return abs(new - old)
        old = theta[idx].copy()
        c = grad[idx] - A[np.ix_(idx, idx)] @ old
        new = _block_step(A[np.ix_(idx, idx)], c, lam)
        delta = new - old
        if np.any(delta != 0.0):
            grad[:] += A[:, idx] @ delta
            theta[idx] = new
        return float(np.abs(delta).max())

    def penalized():
        pen = sum(np.linalg.norm(theta[list(blk)]) for blk in blocks)
        return 0.5 * theta @ (grad + b) + lam * pen

    sweeps, last = 0, penalized()
    residual = np.inf
    while sweeps < prob.max_iter:
        for blk in blocks:
            update(blk)
        sweeps += 1
        current = penalized()
        assert current <= last + 1e-9 * max(1.0, abs(last)), "objective increased during a sweep"
        last = current
        residual = kkt_residual(prob, theta)
        if residual <= prob.tol:
            break
        # cycle the active set until it settles, then re-check everything
        active = [blk for blk in blocks if np.any(theta[list(blk)] != 0.0)]
        while active and sweeps < prob.max_iter:
            change = max(update(blk) for blk in active)
            sweeps += 1
            current = penalized()
            assert current <= last + 1e-9 * max(1.0, abs(last)), "objective increased during a sweep"
            last = current
            if change <= prob.tol * 1e-3:
                break

    converged = residual <= prob.tol
    if not converged:
        residual = kkt_residual(prob, theta)
        converged = residual <= prob.tol
    if not converged:
        logger.warning("Coordinate descent stopped after %d sweeps with KKT residual %.3e (tol %.1e)",
                       sweeps, residual, prob.tol)
    support = tuple(int(j) for j in np.flatnonzero(theta))
    return SolveResult(theta, support, float(residual), sweeps, bool(converged), float(prob.objective(theta)))


def lasso_cd(prob):
    """
    Cyclic coordinate descent for 1/2 t^T A t + b^T t + lam |t|_1

    Coordinates are visited in ascending order; between full sweeps only the
    active set is cycled.

    Args:
        prob (QuadraticLassoProblem): Problem (groups ignored)

    Returns:
        SolveResult: Solution, exact-zero support and KKT diagnostics
    """
    if prob.groups:
        prob = QuadraticLassoProblem(prob.A, prob.b, prob.lam, None, prob.tol, prob.max_iter)
    return _coordinate_descent(prob)


def group_lasso_cd(prob):
    """
    Block coordinate descent for the group lasso

    Groups get the penalty lam |t_G|_2, ungrouped coordinates lam |t_j|.
    Size-one groups reduce to the lasso coordinate update.

    Args:
        prob (QuadraticLassoProblem): Problem with groups

    Returns:
        SolveResult: Solution, exact-zero support and KKT diagnostics
    """
    return _coordinate_descent(prob)


def refit(A, b, support):
    """
    Unpenalized solve restricted to a support: A_SS t_S = -b_S, zero elsewhere

    Args:
        A (numpy.ndarray): Quadratic term (s x s)
        b (numpy.ndarray): Linear term (s)
        support (iterable): Index set S (nonempty)

    Returns:
        numpy.ndarray: Full-length solution

    Raises:
        SingularSystemError: If A_SS stays singular after one ridge rescue
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    S = np.array(sorted(set(int(j) for j in support)), dtype=int)
    if S.size == 0:
        raise ValueError("refit needs a nonempty support")
    A_SS = A[np.ix_(S, S)]
    cond = np.linalg.cond(A_SS)
    if not np.isfinite(cond) or cond > REFIT_COND_LIMIT:
        ridge = REFIT_RIDGE_SCALE * np.trace(A_SS) / S.size
        logger.warning("Restricted system ill-conditioned (cond=%.3e, |S|=%d); adding ridge %.3e",
                       cond, S.size, ridge)
        A_SS = A_SS + ridge * np.eye(S.size)
        cond = np.linalg.cond(A_SS)
        if not np.isfinite(cond) or cond > 1.0 / np.finfo(float).eps:
            raise SingularSystemError(f"restricted system singular (|S|={S.size}, cond={cond:.3e})")
    try:
        theta_S = np.linalg.solve(A_SS, -b[S])
    except np.linalg.LinAlgError as e:
        raise SingularSystemError(f"restricted system singular (|S|={S.size}): {e}") from e
    theta = np.zeros(len(b))
    theta[S] = theta_S
    return theta


def clime_rows(gamma_hat, lambda2, rows):
    """
    Rows of the debiasing matrix M

    Each row solves  min |m|_1  s.t.  |e_j - Gamma m|_inf <= lambda2,
    as a linear program in m = u - v with u, v >= 0 (HiGHS).

    Args:
        gamma_hat (numpy.ndarray): Symmetric s' x s' matrix
        lambda2 (float): Constraint radius
        rows (iterable): Row indices j to compute

    Returns:
        numpy.ndarray: len(rows) x s' matrix; entries are exact zeros off the support

    Raises:
        InfeasibleError: If the constraint set of a row is empty
    """
    G = np.asarray(gamma_hat, dtype=float)
    s = G.shape[0]
    rows = [int(j) for j in rows]
    if lambda2 < 0:
        raise ValueError(f"lambda2 must be non-negative, got {lambda2}")

    if lambda2 == 0.0 and np.linalg.cond(G) < REFIT_COND_LIMIT:
        E = np.eye(s)[:, rows]
        return np.linalg.solve(G, E).T

    M = np.zeros((len(rows), s))
    A_ub = np.block([[G, -G], [-G, G]])
    cost = np.ones(2 * s)
    options = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}
    for r, j in enumerate(rows):
        e = np.zeros(s)
        e[j] = 1.0
        b_ub = np.concatenate([e + lambda2, lambda2 - e])
        res = linprog(cost, A_ub=A_ub, b_ub=b_ub, bounds=(0, None), method="highs", options=options)
        if res.status == 2:
            raise InfeasibleError(f"CLIME row {j} infeasible at lambda2={lambda2}")
        if res.status != 0:
            raise NumericalError(f"CLIME row {j} failed: {res.message}")
        m = res.x[:s] - res.x[s:]
        m[np.abs(m) < 1e-13] = 0.0
        violation = np.abs(e - G @ m).max() - lambda2
        if violation > CLIME_TOL:
            logger.warning("CLIME row %d violates its constraint by %.3e", j, violation)
        M[r] = m
    return M

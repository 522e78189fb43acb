"""Block sparse PCA solvers: m components jointly on the Stiefel manifold.

Each iteration evaluates the penalized block objective, assembles the
ascent direction column by column, and retracts onto the manifold with
the polar factor of the gradient.  Loading columns are recovered jointly
from the final iterate, with the per-component weights mu folded in.
"""

import time
from dataclasses import dataclass

import numpy as np

from .core import RunReport, SparseLoadings, StiefelPoint, as_data_matrix, column_norms, positive_part
from .parallel import DEFAULT_PLAN, par_matvec_t, par_threshold_accumulate

BLOCK_FEASIBILITY_TOL = 1e-8


@dataclass(frozen=True)
class BlockState:
    """Current Stiefel iterate, its objective value, and the step count.

    Holding the iterate as a StiefelPoint keeps the feasibility
    invariant checked at every iteration.
    """

    X: StiefelPoint
    objective: float
    iteration: int


class RankDeficiencyError(RuntimeError):
    """Gradient lost full column rank, so no polar factor exists.

    Usually means a gamma_j annihilated an entire component or m exceeds
    the data's effective rank.  Carries the numerical rank and, when
    raised from the solve loop, the iteration index.
    """

    def __init__(self, rank, required, iteration=None):
        self.rank = rank
        self.required = required
        self.iteration = iteration
        where = "" if iteration is None else f" at iteration {iteration}"
        super().__init__(
            f"gradient has numerical rank {rank} < {required}{where}; "
            "reduce gamma or m"
        )


def _as_stiefel_values(X, p, m=None):
    if isinstance(X, StiefelPoint):
        X = X.values
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != p or (m is not None and X.shape[1] != m):
        raise ValueError(f"X must be {p}x{m or 'm'}, got {X.shape}")
    err = np.linalg.norm(X.T @ X - np.eye(X.shape[1]))
    if err > BLOCK_FEASIBILITY_TOL:
        raise ValueError(f"X is off the Stiefel manifold: ||X'X - I||_F = {err:.3e}")
    return X


def _per_component(vec, m, name):
    v = np.atleast_1d(np.asarray(vec, dtype=np.float64))
    if v.size == 1:
        v = np.full(m, v[0])
    if v.shape != (m,):
        raise ValueError(f"{name} must be a scalar or length-{m} vector")
    return v


def _correlations(A, X, plan):
    # One matvec_t per component; columns of X are independent given A.
    return np.column_stack([par_matvec_t(A, X[:, j], plan) for j in range(X.shape[1])])


def _block_objective_from_correlations(C, gamma, mu, penalty):
    total = 0.0
    for j in range(C.shape[1]):
        scaled = mu[j] * C[:, j]
        if penalty == "l1":
            t = positive_part(np.abs(scaled) - gamma[j])
            total += float(t @ t)
        else:
            total += float(np.sum(positive_part(scaled * scaled - gamma[j])))
    return total


def objective_bl1(A, X, gamma, mu, plan=DEFAULT_PLAN):
    """l1 block objective: sum_j sum_i [mu_j |a_i'x_j| - gamma_j]_+^2."""
    A = as_data_matrix(A)
    X = _as_stiefel_values(X, A.p)
    m = X.shape[1]
    gamma = _per_component(gamma, m, "gamma")
    mu = _per_component(mu, m, "mu")
    C = _correlations(A, X, plan)
    return _block_objective_from_correlations(C, gamma, mu, "l1")


def objective_bl0(A, X, gamma, mu, plan=DEFAULT_PLAN):
    """l0 block objective: sum_j sum_i [(mu_j a_i'x_j)^2 - gamma_j]_+."""
    A = as_data_matrix(A)
    X = _as_stiefel_values(X, A.p)
    m = X.shape[1]
    gamma = _per_component(gamma, m, "gamma")
    mu = _per_component(mu, m, "mu")
    C = _correlations(A, X, plan)
    return _block_objective_from_correlations(C, gamma, mu, "l0")


def _block_gradient(A, C, gamma, mu, penalty, plan):
    # Column j: 2 mu_j * sum_i w(mu_j c_ij, gamma_j) a_i, which reduces to
    # the single-unit gradient when mu_j = 1.
    cols = []
    for j in range(C.shape[1]):
        acc = par_threshold_accumulate(A, mu[j] * C[:, j], gamma[j], penalty, plan)
        cols.append(2.0 * mu[j] * acc)
    return np.column_stack(cols)


def ascent_direction_block(A, X, gamma, mu, penalty, plan=DEFAULT_PLAN):
    """Ambient gradient of the block objective, one column per component."""
    A = as_data_matrix(A)
    X = _as_stiefel_values(X, A.p)
    m = X.shape[1]
    gamma = _per_component(gamma, m, "gamma")
    mu = _per_component(mu, m, "mu")
    C = _correlations(A, X, plan)
    return _block_gradient(A, C, gamma, mu, penalty, plan)


def polar_projection(G):
    """Orthonormal polar factor of G: the Stiefel point maximizing Tr(X'G).

    With the thin SVD G = U S V', returns U V'.  Raises
    RankDeficiencyError when G is not of full column rank.
    """
    G = np.asarray(G, dtype=np.float64)
    if G.ndim == 1:
        G = G[:, None]
    U, s, Vt = np.linalg.svd(G, full_matrices=False)
    cutoff = s[0] * max(G.shape) * np.finfo(np.float64).eps
    rank = int(np.count_nonzero(s > cutoff)) if s[0] > 0 else 0
    if rank < G.shape[1]:
        raise RankDeficiencyError(rank, G.shape[1])
    return StiefelPoint(U @ Vt)


def _init_block(A, config, plan):
    p, m = A.p, config.m
    if config.init == "random_orthonormal":
        rng = np.random.default_rng(config.seed)
        M = rng.standard_normal((p, m))
    elif config.init == "max_norm_column":
        order = np.argsort(-column_norms(A), kind="stable")
        M = A.values[:, order[:m]].copy()
    else:
        return _as_stiefel_values(config.x0, p, m)
    Q, R = np.linalg.qr(M)
    diag = np.diagonal(R)
    if np.any(np.abs(diag) <= m * np.finfo(np.float64).eps * max(1.0, np.abs(diag).max())):
        raise ValueError(
            "initialization columns are numerically rank deficient; "
            "use init='random_orthonormal' or reduce m"
        )
    # Fix the QR sign ambiguity so initialization is fully deterministic.
    Q = Q * np.sign(diag)
    return Q


def _recover_block(C, gamma, mu, penalty):
    n, m = C.shape
    Z = np.zeros((n, m))
    for j in range(m):
        c = C[:, j]
        if penalty == "l1":
            v = np.sign(c) * positive_part(mu[j] * np.abs(c) - gamma[j])
        else:
            scaled = mu[j] * c
            v = np.where(scaled * scaled > gamma[j], c, 0.0)
        norm = np.linalg.norm(v)
        if norm > 0:
            Z[:, j] = v / norm
    return Z


def solve_block(A, config, plan=DEFAULT_PLAN):
    """Extract config.m components jointly; returns (SparseLoadings, RunReport).

    Alternates gradient assembly and polar retraction until the relative
    objective change drops below config.tol; the iterate stays on the
    Stiefel manifold at every step.  Rank collapse of the gradient is
    raised as RankDeficiencyError tagged with the iteration index.
    """
    A = as_data_matrix(A)
    if config.mode != "block":
        raise ValueError("solve_block requires mode='block'")
    if not 1 <= config.m <= min(A.p, A.n):
        raise ValueError(f"need 1 <= m <= min(p, n) = {min(A.p, A.n)}, got m={config.m}")
    start = time.perf_counter()
    gamma, mu = config.gamma, config.mu
    point = StiefelPoint(_init_block(A, config, plan))
    C = _correlations(A, point.values, plan)
    f = _block_objective_from_correlations(C, gamma, mu, config.penalty)
    state = BlockState(X=point, objective=f, iteration=0)
    history = [f]
    converged = False
    while state.iteration < config.max_iter:
        G = _block_gradient(A, C, gamma, mu, config.penalty, plan)
        try:
            point = polar_projection(G)
        except RankDeficiencyError as err:
            err.iteration = state.iteration
            err.history = history
            raise
        C = _correlations(A, point.values, plan)
        f_new = _block_objective_from_correlations(C, gamma, mu, config.penalty)
        history.append(f_new)
        state = BlockState(X=point, objective=f_new, iteration=state.iteration + 1)
        if abs(f_new - f) < config.tol * max(abs(f), 1e-30):
            converged = True
            break
        f = f_new
    loadings = SparseLoadings(_recover_block(C, gamma, mu, config.penalty))
    return loadings, RunReport(
        objective_history=history,
        iterations=len(history) - 1,
        wall_time=time.perf_counter() - start,
        nnz_per_component=loadings.nnz_per_component(),
        converged=converged,
        component_histories=[history],
    )

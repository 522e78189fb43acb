"""Single-unit sparse PCA solvers (l1 and l0 penalties).

One component at a time: climb the penalized objective over the unit
sphere in sample space by repeatedly normalizing the ascent direction,
then read the sparse loading vector off the final iterate.  More
components come from sequential orthogonal-projection deflation.
"""

import time
from dataclasses import dataclass, replace

import numpy as np

from .core import (
    RunReport,
    SparseLoadings,
    as_data_matrix,
    column_norms,
    positive_part,
)
from .parallel import DEFAULT_PLAN, par_matvec_t, par_threshold_accumulate

UNIT_NORM_TOL = 1e-9


@dataclass(frozen=True)
class SingleUnitState:
    """Current sphere iterate, its objective value, and the step count."""

    x: np.ndarray
    objective: float
    iteration: int


def _check_unit(x, p):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (p,):
        raise ValueError(f"x must have length p={p}, got shape {x.shape}")
    if abs(np.linalg.norm(x) - 1.0) > UNIT_NORM_TOL:
        raise ValueError("x must lie on the unit sphere")
    return x


def _objective_from_correlations(c, gamma, penalty):
    if penalty == "l1":
        t = positive_part(np.abs(c) - gamma)
        return float(t @ t)
    return float(np.sum(positive_part(c * c - gamma)))


def objective_sl1(A, x, gamma, plan=DEFAULT_PLAN):
    """l1-penalized single-unit objective: sum_i [|a_i'x| - gamma]_+^2."""
    A = as_data_matrix(A)
    x = _check_unit(x, A.p)
    c = par_matvec_t(A, x, plan)
    return _objective_from_correlations(c, gamma, "l1")


def objective_sl0(A, x, gamma, plan=DEFAULT_PLAN):
    """l0-penalized single-unit objective: sum_i [(a_i'x)^2 - gamma]_+."""
    A = as_data_matrix(A)
    x = _check_unit(x, A.p)
    c = par_matvec_t(A, x, plan)
    return _objective_from_correlations(c, gamma, "l0")


def ascent_direction_sl1(A, x, gamma, plan=DEFAULT_PLAN):
    """Gradient of the l1 objective: 2 sum_i [|c_i| - gamma]_+ sign(c_i) a_i.

    Zero exactly when no column is active (|a_i'x| <= gamma for all i).
    """
    A = as_data_matrix(A)
    c = par_matvec_t(A, np.asarray(x, dtype=np.float64), plan)
    return 2.0 * par_threshold_accumulate(A, c, gamma, "l1", plan)


def ascent_direction_sl0(A, x, gamma, plan=DEFAULT_PLAN):
    """Subgradient of the l0 objective: 2 sum_{c_i^2 > gamma} c_i a_i."""
    A = as_data_matrix(A)
    c = par_matvec_t(A, np.asarray(x, dtype=np.float64), plan)
    return 2.0 * par_threshold_accumulate(A, c, gamma, "l0", plan)


def power_step(state, direction):
    """One generalized power step: the sphere point maximizing the
    linearization, x+ = g / ||g||.

    Returns (next_state, fixed_point).  A zero direction returns the
    state unchanged with fixed_point=True.  The new state keeps the old
    objective value; the solve loop re-evaluates it.
    """
    g = np.asarray(direction, dtype=np.float64)
    norm = np.linalg.norm(g)
    if norm == 0.0:
        return state, True
    nxt = replace(state, x=g / norm, iteration=state.iteration + 1)
    return nxt, False


def recover_pattern_sl1(A, x, gamma, plan=DEFAULT_PLAN):
    """Sparse loading column for the l1 penalty at a fixed iterate x.

    Soft-thresholds the correlations: z_i proportional to
    sign(a_i'x) [|a_i'x| - gamma]_+, renormalized to unit norm; the
    all-inactive case returns the zero vector.
    """
    A = as_data_matrix(A)
    c = par_matvec_t(A, np.asarray(x, dtype=np.float64), plan)
    z = np.sign(c) * positive_part(np.abs(c) - gamma)
    norm = np.linalg.norm(z)
    return z / norm if norm > 0 else z


def recover_pattern_sl0(A, x, gamma, plan=DEFAULT_PLAN):
    """Sparse loading column for the l0 penalty: keep correlations with
    (a_i'x)^2 > gamma, zero the rest, renormalize."""
    A = as_data_matrix(A)
    c = par_matvec_t(A, np.asarray(x, dtype=np.float64), plan)
    z = np.where(c * c > gamma, c, 0.0)
    norm = np.linalg.norm(z)
    return z / norm if norm > 0 else z


_RECOVER = {"l1": recover_pattern_sl1, "l0": recover_pattern_sl0}


def _activation_limit(norms, penalty):
    # Largest gamma at which any column can be active anywhere on the
    # sphere: max |a_i'x| = ||a_i||, so the l0 threshold compares against
    # the squared norm.
    top = float(np.max(norms))
    return top if penalty == "l1" else top * top


def _initial_iterates(A, config):
    """Start directions per the init strategy; config.restarts of them.

    max_norm_column walks the columns in decreasing norm order; asking
    for more starts than there are columns tops up with seeded random
    directions.
    """
    if config.init == "user_supplied":
        return [_check_unit(config.x0, A.p)]
    rng = np.random.default_rng(config.seed)
    if config.init == "random_orthonormal":
        out = []
        for _ in range(config.restarts):
            x = rng.standard_normal(A.p)
            out.append(x / np.linalg.norm(x))
        return out
    norms = column_norms(A)
    order = np.argsort(-norms, kind="stable")[: config.restarts]
    out = [A.values[:, i] / norms[i] for i in order if norms[i] > 0]
    for _ in range(config.restarts - len(out)):
        x = rng.standard_normal(A.p)
        out.append(x / np.linalg.norm(x))
    return out


def _iterate_single_unit(A, x0, gamma, penalty, tol, max_iter, plan):
    """Power iteration from x0; returns (x, history, converged)."""
    x = x0
    c = par_matvec_t(A, x, plan)
    f = _objective_from_correlations(c, gamma, penalty)
    history = [f]
    converged = False
    for _ in range(max_iter):
        g = 2.0 * par_threshold_accumulate(A, c, gamma, penalty, plan)
        norm = np.linalg.norm(g)
        if norm == 0.0:
            converged = True
            break
        x = g / norm
        c = par_matvec_t(A, x, plan)
        f_new = _objective_from_correlations(c, gamma, penalty)
        history.append(f_new)
        if abs(f_new - f) < tol * max(abs(f), 1e-30):
            converged = True
            break
        f = f_new
    return x, history, converged


def solve_single_unit(A, config, plan=DEFAULT_PLAN):
    """Extract one sparse component; returns (SparseLoadings, RunReport).

    Iterates power steps from the configured initialization until the
    relative objective change drops below config.tol (or max_iter), then
    recovers the loading vector from the final iterate.  When gamma is
    so large that no column can activate, the zero loading is returned
    immediately with a converged report.  With restarts > 1 or
    refine=True the report carries the winning climb's trace.
    """
    A = as_data_matrix(A)
    if config.mode != "single_unit":
        raise ValueError("solve_single_unit requires mode='single_unit'")
    if config.m != 1:
        raise ValueError("solve_single_unit handles m=1; use solve_multi_sequential")
    start = time.perf_counter()
    gamma = float(config.gamma[0])
    z, history, converged, _ = _solve_component(A, gamma, config, plan)
    loadings = SparseLoadings(z)
    return loadings, RunReport(
        objective_history=history,
        iterations=len(history) - 1,
        wall_time=time.perf_counter() - start,
        nnz_per_component=loadings.nnz_per_component(),
        converged=converged,
        component_histories=[history],
    )


def _active_support(c, gamma, penalty):
    if penalty == "l1":
        return np.abs(c) > gamma
    return c * c > gamma


def _restricted_leading_direction(A, support, x, iters=50):
    # Leading left singular direction of the support-restricted matrix,
    # by plain power iteration seeded from the current iterate.
    cols = A.values[:, support]
    v = x.copy()
    for _ in range(iters):
        v = cols @ (cols.T @ v)
        norm = np.linalg.norm(v)
        if norm == 0.0:
            return None
        v = v / norm
    return v


def _refine_support(A, best, gamma, config, plan):
    """Re-climb from supports adjacent to the converged one.

    Near-threshold columns create closely spaced local maxima; relaxing
    or tightening the threshold by a few percent, restarting from the
    restricted leading direction, and keeping any improvement is a
    cheap deterministic escape.
    """
    if gamma <= 0:
        return best
    x, history, converged = best
    for _ in range(4):
        c = par_matvec_t(A, x, plan)
        current = _active_support(c, gamma, config.penalty)
        improved = False
        for delta in (0.02, 0.05, 0.1, 0.2, 0.4):
            for g2 in (gamma * (1.0 - delta), gamma * (1.0 + delta)):
                support = _active_support(c, g2, config.penalty)
                if not support.any() or np.array_equal(support, current):
                    continue
                x0 = _restricted_leading_direction(A, support, x)
                if x0 is None:
                    continue
                trial = _iterate_single_unit(
                    A, x0, gamma, config.penalty, config.tol, config.max_iter, plan
                )
                if trial[1][-1] > history[-1] * (1.0 + 1e-12):
                    x, history, converged = trial
                    improved = True
        if not improved:
            break
    return x, history, converged


def _solve_component(A, gamma, config, plan):
    """Shared single-component path; returns (z, history, converged, x)."""
    norms = column_norms(A)
    if gamma >= _activation_limit(norms, config.penalty):
        # The objective is identically zero on the sphere; nothing to do.
        return np.zeros(A.n), [0.0], True, None
    best = None
    for x0 in _initial_iterates(A, config):
        trial = _iterate_single_unit(
            A, x0, gamma, config.penalty, config.tol, config.max_iter, plan
        )
        if best is None or trial[1][-1] > best[1][-1]:
            best = trial
    if config.refine:
        best = _refine_support(A, best, gamma, config, plan)
    x, history, converged = best
    z = _RECOVER[config.penalty](A, x, gamma, plan)
    return z, history, converged, x


def deflate(A, x):
    """Project the component direction out of the data: (I - xx')A.

    The returned matrix is exactly orthogonal to x (x'A' = 0) and
    deflating twice with the same x is a no-op.
    """
    A = as_data_matrix(A)
    x = _check_unit(x, A.p)
    x = x / np.linalg.norm(x)
    return as_data_matrix(A.values - np.outer(x, x @ A.values))


def solve_multi_sequential(A, config, plan=DEFAULT_PLAN):
    """Extract config.m components by repeated solve + deflate.

    Component j uses gamma_j.  If some component comes back all-zero the
    remaining ones are recorded as zero as well (deflation only shrinks
    activations), which is reported, not an error.
    """
    A = as_data_matrix(A)
    if config.mode != "single_unit":
        raise ValueError("solve_multi_sequential requires mode='single_unit'")
    start = time.perf_counter()
    columns = []
    histories = []
    converged_all = True
    current = A
    for j in range(config.m):
        z, history, converged, x = _solve_component(
            current, float(config.gamma[j]), config, plan
        )
        columns.append(z)
        histories.append(history)
        converged_all = converged_all and converged
        if not np.any(z):
            for _ in range(j + 1, config.m):
                columns.append(np.zeros(A.n))
                histories.append([0.0])
            break
        if j + 1 < config.m:
            current = deflate(current, x)
    loadings = SparseLoadings(np.column_stack(columns))
    return loadings, RunReport(
        objective_history=histories[0],
        iterations=sum(len(h) - 1 for h in histories),
        wall_time=time.perf_counter() - start,
        nnz_per_component=loadings.nnz_per_component(),
        converged=converged_all,
        component_histories=histories,
    )

"""Domain types and matrix utilities shared by every solver.

The data matrix convention throughout the package: A is a dense p x n
real matrix whose n columns a_1..a_n are the variables, each living in
the p-dimensional sample space.  Loading vectors z live in R^n, sphere
iterates x in R^p.  All arithmetic is double precision.
"""

from dataclasses import dataclass, field

import numpy as np

PENALTIES = ("l1", "l0")
MODES = ("single_unit", "block")
INITS = ("max_norm_column", "random_orthonormal", "user_supplied")
DEFLATIONS = ("orthogonal_projection",)

# Absolute tolerance for algebraic identities (unit norms, orthogonality,
# pattern/value agreement); solver convergence uses the relative tol in
# SolverConfig instead.
ALGEBRAIC_TOL = 1e-12
STIEFEL_TOL = 1e-10


class DataMatrix:
    """Dense p x n matrix with column-contiguous storage.

    Columns are the variables; column i is addressable as a contiguous
    view.  Instances are immutable: the underlying array is marked
    read-only so a matrix can be shared across concurrent workers.
    """

    __slots__ = ("values", "p", "n")

    def __init__(self, values):
        arr = np.array(values, dtype=np.float64, order="F", copy=True)
        if arr.ndim != 2:
            raise ValueError(f"expected a 2-d matrix, got ndim={arr.ndim}")
        p, n = arr.shape
        if p < 1 or n < 1:
            raise ValueError(f"matrix must be at least 1x1, got {p}x{n}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("matrix entries must be finite")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "n", n)

    def __setattr__(self, name, value):
        raise AttributeError("DataMatrix is immutable")

    def column(self, i):
        """Contiguous view of column a_i."""
        return self.values[:, i]

    @property
    def shape(self):
        return (self.p, self.n)

    def __repr__(self):
        return f"DataMatrix(p={self.p}, n={self.n})"


def as_data_matrix(A):
    """Coerce an array-like (or pass through a DataMatrix) to DataMatrix."""
    if isinstance(A, DataMatrix):
        return A
    return DataMatrix(A)


class SparseLoadings:
    """n x m loadings matrix with unit-norm-or-zero columns.

    The explicit sparsity pattern (per-column index arrays of the
    nonzero entries) is derived from the values at construction and is
    guaranteed to match them exactly.
    """

    __slots__ = ("values", "pattern", "m")

    def __init__(self, values):
        arr = np.array(values, dtype=np.float64, copy=True)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2:
            raise ValueError("loadings must be a vector or a 2-d matrix")
        norms = np.linalg.norm(arr, axis=0)
        bad = (norms > 0) & (np.abs(norms - 1.0) > ALGEBRAIC_TOL)
        if np.any(bad):
            raise ValueError(
                f"columns {np.nonzero(bad)[0].tolist()} are neither zero nor unit norm"
            )
        pattern = tuple(np.nonzero(arr[:, j])[0] for j in range(arr.shape[1]))
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "pattern", pattern)
        object.__setattr__(self, "m", arr.shape[1])

    def __setattr__(self, name, value):
        raise AttributeError("SparseLoadings is immutable")

    @property
    def n(self):
        return self.values.shape[0]

    def nnz_per_component(self):
        return [int(idx.size) for idx in self.pattern]

    def __repr__(self):
        return f"SparseLoadings(n={self.n}, m={self.m}, nnz={self.nnz_per_component()})"


class StiefelPoint:
    """p x m matrix with orthonormal columns; for m=1 a unit vector."""

    __slots__ = ("values",)

    def __init__(self, values, tol=STIEFEL_TOL):
        arr = np.array(values, dtype=np.float64, copy=True)
        if arr.ndim == 1:
            arr = arr[:, None]
        p, m = arr.shape
        if m > p:
            raise ValueError(f"need m <= p, got p={p}, m={m}")
        err = np.linalg.norm(arr.T @ arr - np.eye(m))
        if err > tol:
            raise ValueError(f"columns not orthonormal: ||X'X - I||_F = {err:.3e}")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    def __setattr__(self, name, value):
        raise AttributeError("StiefelPoint is immutable")

    @property
    def p(self):
        return self.values.shape[0]

    @property
    def m(self):
        return self.values.shape[1]


def _as_length_m(value, m, name):
    vec = np.atleast_1d(np.asarray(value, dtype=np.float64))
    if vec.size == 1:
        vec = np.full(m, vec[0])
    if vec.shape != (m,):
        raise ValueError(f"{name} must be a scalar or length-{m} vector")
    return vec


@dataclass(frozen=True)
class SolverConfig:
    """Settings for one solve: penalty, mode, thresholds, stopping rule.

    gamma and mu accept a scalar or a length-m sequence and are stored
    as length-m vectors (gamma_j >= 0, mu_j > 0).  x0 is only consulted
    when init="user_supplied".
    """

    penalty: str = "l1"
    mode: str = "single_unit"
    m: int = 1
    gamma: object = 0.0
    mu: object = 1.0
    tol: float = 1e-6
    max_iter: int = 1000
    init: str = "max_norm_column"
    deflation: str = "orthogonal_projection"
    seed: int = 0
    x0: object = None
    # Robustness knobs for the single-unit solvers; the defaults keep the
    # canonical single-start behavior.  restarts>1 climbs from that many
    # initial directions and keeps the best final objective; refine=True
    # additionally re-climbs from supports adjacent to the converged one
    # (thresholds relaxed/tightened), which matters when near-threshold
    # columns create closely spaced local maxima.
    restarts: int = 1
    refine: bool = False

    def __post_init__(self):
        if self.penalty not in PENALTIES:
            raise ValueError(f"penalty must be one of {PENALTIES}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.init not in INITS:
            raise ValueError(f"init must be one of {INITS}")
        if self.deflation not in DEFLATIONS:
            raise ValueError(f"deflation must be one of {DEFLATIONS}")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        gamma = _as_length_m(self.gamma, self.m, "gamma")
        if np.any(gamma < 0):
            raise ValueError("gamma entries must be >= 0")
        mu = _as_length_m(self.mu, self.m, "mu")
        if np.any(mu <= 0):
            raise ValueError("mu entries must be > 0")
        gamma.flags.writeable = False
        mu.flags.writeable = False
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "mu", mu)
        if self.init == "user_supplied" and self.x0 is None:
            raise ValueError("init='user_supplied' requires x0")


@dataclass(frozen=True)
class RunReport:
    """Per-solve diagnostics: objective trace, timing, sparsity counts.

    objective_history is non-decreasing for a single ascent run; for
    sequential multi-component extraction it holds the first component's
    trace and component_histories keeps one trace per component.
    """

    objective_history: list = field(default_factory=list)
    iterations: int = 0
    wall_time: float = 0.0
    nnz_per_component: list = field(default_factory=list)
    converged: bool = False
    component_histories: list = None


def positive_part(t):
    """max(0, t), elementwise on arrays."""
    return np.maximum(t, 0.0)


def center_columns(A):
    """Subtract each column's mean; returns a new DataMatrix.

    With samples-as-rows data this gives every variable zero mean.
    """
    A = as_data_matrix(A)
    return DataMatrix(A.values - A.values.mean(axis=0, keepdims=True))


def column_norms(A):
    """Euclidean norm of every column a_i, as a length-n vector."""
    A = as_data_matrix(A)
    return np.linalg.norm(A.values, axis=0)


def gram_quadratic(A, z):
    """z' (A'A) z evaluated as ||Az||^2, never forming the Gram matrix."""
    A = as_data_matrix(A)
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (A.n,):
        raise ValueError(f"z must have length n={A.n}, got shape {z.shape}")
    v = A.values @ z
    return float(v @ v)

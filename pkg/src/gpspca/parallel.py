"""Deterministic data-parallel kernels over column chunks.

Every solver funnels its column-indexed inner loops through the three
kernels here: batched column dot products (par_matvec_t), weighted
column accumulation (par_gram_apply), and thresholded gradient
accumulation (par_threshold_accumulate).  Work is split into fixed-size
column chunks; partial results are combined by a pairwise tree whose
shape depends only on (n, chunk), never on scheduling, so kernel output
is bitwise identical for any worker count.
"""

import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import as_data_matrix

KERNELS = ("matvec_t", "gram_apply", "threshold_accumulate")


@dataclass(frozen=True)
class KernelPlan:
    """Execution plan: worker count, columns per task, reduction order."""

    workers: int = 1
    chunk: int = 256
    reduction: str = "pairwise_tree"

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.chunk < 1:
            raise ValueError("chunk must be >= 1")
        if self.reduction != "pairwise_tree":
            raise ValueError("only the pairwise_tree reduction is supported")


DEFAULT_PLAN = KernelPlan()


def _chunk_bounds(n, chunk):
    return [(lo, min(lo + chunk, n)) for lo in range(0, n, chunk)]


# Worker pools are kept alive per worker count: pool start-up costs about
# a millisecond, which would swamp kernels in the low-millisecond range.
_POOLS = {}
_POOLS_LOCK = threading.Lock()


def _pool(workers):
    with _POOLS_LOCK:
        pool = _POOLS.get(workers)
        if pool is None:
            pool = ThreadPoolExecutor(
                max_workers=workers, thread_name_prefix=f"gpspca-{workers}"
            )
            _POOLS[workers] = pool
        return pool


def _map_chunks(fn, bounds, workers):
    # Each task writes only its own partial; results come back in chunk
    # order regardless of which worker ran them.
    if workers == 1 or len(bounds) == 1:
        return [fn(lo, hi) for lo, hi in bounds]
    return list(_pool(workers).map(lambda b: fn(*b), bounds))


def _pairwise_combine(parts):
    # Fixed-shape binary tree over the chunk index; summation order is a
    # function of the chunk count alone.
    while len(parts) > 1:
        merged = [parts[i] + parts[i + 1] for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            merged.append(parts[-1])
        parts = merged
    return parts[0]


def par_matvec_t(A, x, plan=DEFAULT_PLAN):
    """All column dot products a_i'x, returned as a length-n vector."""
    A = as_data_matrix(A)
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (A.p,):
        raise ValueError(f"x must have length p={A.p}, got shape {x.shape}")
    bounds = _chunk_bounds(A.n, plan.chunk)
    values = A.values
    parts = _map_chunks(lambda lo, hi: values[:, lo:hi].T @ x, bounds, plan.workers)
    out = np.empty(A.n)
    for (lo, hi), part in zip(bounds, parts):
        out[lo:hi] = part
    return out


def _accumulate_columns(values, weights, plan):
    bounds = _chunk_bounds(values.shape[1], plan.chunk)
    parts = _map_chunks(
        lambda lo, hi: values[:, lo:hi] @ weights[lo:hi], bounds, plan.workers
    )
    return _pairwise_combine(parts)


def par_gram_apply(A, coefficients, plan=DEFAULT_PLAN):
    """Weighted column sum sum_i c_i a_i (i.e. the product A c)."""
    A = as_data_matrix(A)
    c = np.asarray(coefficients, dtype=np.float64)
    if c.shape != (A.n,):
        raise ValueError(f"coefficients must have length n={A.n}, got shape {c.shape}")
    return _accumulate_columns(A.values, c, plan)


def threshold_weights(correlations, gamma, penalty):
    """Per-column gradient weights w(c_i, gamma) for the given penalty.

    l1: sign(c_i) * max(|c_i| - gamma, 0); l0: c_i where c_i^2 > gamma,
    else 0 (ties at the threshold count as inactive).
    """
    c = np.asarray(correlations, dtype=np.float64)
    if penalty == "l1":
        return np.sign(c) * np.maximum(np.abs(c) - gamma, 0.0)
    if penalty == "l0":
        return np.where(c * c > gamma, c, 0.0)
    raise ValueError(f"unknown penalty {penalty!r}")


def par_threshold_accumulate(A, correlations, gamma, penalty, plan=DEFAULT_PLAN):
    """Thresholded gradient accumulation sum_i w(c_i, gamma) a_i.

    correlations must be the par_matvec_t output for the current iterate;
    the result is the ascent direction up to the scheme's constant factor.
    """
    A = as_data_matrix(A)
    c = np.asarray(correlations, dtype=np.float64)
    if c.shape != (A.n,):
        raise ValueError(f"correlations must have length n={A.n}, got shape {c.shape}")
    w = threshold_weights(c, gamma, penalty)
    return _accumulate_columns(A.values, w, plan)


def check_allocation(P, N):
    """Raise MemoryError before allocating if a P x N float64 matrix
    cannot plausibly fit in physical memory."""
    needed = int(P) * int(N) * 8
    try:
        available = os.sysconf("SC_AVPHYS_PAGES") * os.sysconf("SC_PAGE_SIZE")
    except (ValueError, OSError, AttributeError):
        return
    if needed > available:
        raise MemoryError(
            f"a {P}x{N} matrix needs {needed} bytes but only {available} are available"
        )


def _kernel_invocation(kernel, A, rng):
    if kernel == "matvec_t":
        x = rng.standard_normal(A.p)
        return lambda plan: par_matvec_t(A, x, plan)
    if kernel == "gram_apply":
        z = rng.standard_normal(A.n)
        return lambda plan: par_gram_apply(A, z, plan)
    if kernel == "threshold_accumulate":
        x = rng.standard_normal(A.p)
        c = par_matvec_t(A, x)
        gamma = 0.05 * float(np.max(np.abs(c)))
        return lambda plan: par_threshold_accumulate(A, c, gamma, "l1", plan)
    raise ValueError(f"unknown kernel {kernel!r}; expected one of {KERNELS}")


def measure_scaling(kernel, sizes, workers, instances=20, chunk=256, seed=0):
    """Median kernel wall times over a (P, N) size grid and worker counts.

    Returns a list of row dicts (kernel, N, P, workers, median_seconds,
    speedup) sorted by N then workers, where speedup is relative to the
    workers=1 median for the same size.  instances independent random
    matrices are timed per size.
    """
    if not sizes:
        raise ValueError("sizes must be nonempty")
    if instances < 1:
        raise ValueError("instances must be >= 1")
    workers = sorted(set(int(w) for w in workers))
    if 1 not in workers:
        workers = [1] + workers
    rows = []
    for P, N in sorted(sizes, key=lambda s: s[1]):
        check_allocation(P, N)
        times = {w: [] for w in workers}
        for instance in range(instances):
            rng = np.random.default_rng([seed, N, instance])
            A = as_data_matrix(rng.standard_normal((P, N)))
            run = _kernel_invocation(kernel, A, rng)
            for w in workers:
                plan = KernelPlan(workers=w, chunk=chunk)
                start = time.perf_counter()
                run(plan)
                times[w].append(time.perf_counter() - start)
        base = float(np.median(times[1]))
        for w in workers:
            med = float(np.median(times[w]))
            rows.append(
                {
                    "kernel": kernel,
                    "N": N,
                    "P": P,
                    "workers": w,
                    "median_seconds": med,
                    "speedup": base / med if med > 0 else float("nan"),
                }
            )
    return rows

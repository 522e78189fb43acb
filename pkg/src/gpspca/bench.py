"""Benchmark harness: timing sweeps and recognition experiments.

This module owns the samples-as-rows boundary: data is centered with
training-set feature means here, solvers consume the centered matrix
directly (training samples are the sphere dimension, features are the
variables), and PCA components and sparse loadings end up in the same
feature space.
"""

import sys
import time
from dataclasses import dataclass, field

import numpy as np

from .block import solve_block
from .core import SolverConfig
from .datasets import (
    FixedSplit,
    GroupedSplit,
    PerClassCount,
    knn_classify,
    load_dataset,
    make_splits,
)
from .parallel import KernelPlan, check_allocation
from .pca import pca_fit, project
from .single_unit import solve_multi_sequential

SPCA_VARIANTS = ("sl1", "sl0", "bl1", "bl0")
VARIANTS = SPCA_VARIANTS + ("pca",)


@dataclass
class ExperimentConfig:
    """Settings for one experiment sweep; seed fixes all randomness."""

    dataset: str = None
    format: str = "csv_labeled"
    variant: str = "sl1"
    m: tuple = (5,)
    gamma: float = 0.1
    mu: float = 1.0
    repetitions: int = 1
    seed: int = 0
    out: str = None
    workers: int = 1
    chunk: int = 256
    tol: float = 1e-6
    max_iter: int = 1000
    knn_k: int = 1
    split: object = None
    # Writing 0.0 instead of measured fit seconds makes the CSV
    # bit-reproducible end to end (wall clock is the one nondeterministic
    # column).
    report_timing: bool = True
    timing_sizes: tuple = (500, 1000, 2000)
    timing_gammas: tuple = (0.01, 0.05)
    timing_variants: tuple = SPCA_VARIANTS
    timing_instances: int = 20
    timing_workers: tuple = None

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if isinstance(self.m, int):
            self.m = (self.m,)
        self.m = tuple(int(v) for v in self.m)
        if any(v < 1 for v in self.m):
            raise ValueError("m values must be >= 1")

    def plan(self):
        return KernelPlan(workers=self.workers, chunk=self.chunk)


def fit_projection(train_samples, variant, m, gamma, mu=1.0, tol=1e-6, max_iter=1000,
                   seed=0, plan=None, center=True):
    """Learn an n x m projection from training rows.

    Returns (loadings, mean, report) where report is None for the PCA
    baseline.  Sparse variants consume the centered training matrix
    as-is: its rows are the sphere dimension, its columns the variables.
    center=False hands the matrix to the solver untouched (timing runs
    on raw synthetic instances).
    """
    plan = plan or KernelPlan()
    train_samples = np.asarray(train_samples, dtype=np.float64)
    if variant == "pca":
        model = pca_fit(train_samples, m)
        return model.components, model.mean, None
    if variant not in SPCA_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if center:
        mean = train_samples.mean(axis=0)
        centered = train_samples - mean
    else:
        mean = np.zeros(train_samples.shape[1])
        centered = train_samples
    penalty = "l1" if variant.endswith("1") else "l0"
    if variant.startswith("s"):
        config = SolverConfig(
            penalty=penalty, mode="single_unit", m=m, gamma=gamma, mu=mu,
            tol=tol, max_iter=max_iter, seed=seed,
        )
        loadings, report = solve_multi_sequential(centered, config, plan)
    else:
        config = SolverConfig(
            penalty=penalty, mode="block", m=m, gamma=gamma, mu=mu,
            tol=tol, max_iter=max_iter, init="random_orthonormal", seed=seed,
        )
        loadings, report = solve_block(centered, config, plan)
    return loadings.values, mean, report


def _per_class_accuracy(predictions, test_labels, all_labels):
    out = {}
    for label in all_labels:
        mask = test_labels == label
        key = f"acc_class_{label}"
        out[key] = float(np.mean(predictions[mask] == label)) if mask.any() else None
    return out


def run_recognition_experiment(config, dataset=None):
    """Fit on train, embed everything, 1-NN classify; repeat and sweep m.

    Returns the CSV rows (one per repetition and m, mean rows appended)
    and writes them to config.out when set.  Solver failures are
    recorded in the row's error column, not raised.
    """
    if dataset is None:
        dataset = load_dataset(config.dataset, config.format)
    if config.split is None:
        raise ValueError("recognition experiment needs a split policy")
    plan = config.plan()
    all_labels = np.unique(dataset.labels)
    rows = []
    for rep in range(config.repetitions):
        split = make_splits(dataset, config.split, seed=[config.seed, rep])
        train_x, train_y = split.train()
        test_x, test_y = split.test()
        for m in config.m:
            row = {
                "method": config.variant,
                "m": m,
                "gamma": _render_gamma(config.gamma),
                "repetition": rep,
                "overall_accuracy": None,
            }
            row.update({f"acc_class_{label}": None for label in all_labels})
            row.update({"nnz_per_component": "", "fit_seconds": None, "error": ""})
            try:
                start = time.perf_counter()
                loadings, mean, _ = fit_projection(
                    train_x, config.variant, m, config.gamma, config.mu,
                    config.tol, config.max_iter, seed=[config.seed, rep], plan=plan,
                )
                fit_seconds = time.perf_counter() - start
                train_emb = project(train_x, loadings, mean)
                test_emb = project(test_x, loadings, mean)
                predictions, accuracy = knn_classify(
                    train_emb, train_y, test_emb, test_y, k=config.knn_k
                )
                row["overall_accuracy"] = accuracy
                row.update(_per_class_accuracy(predictions, test_y, all_labels))
                nnz = np.count_nonzero(loadings, axis=0)
                row["nnz_per_component"] = ";".join(str(int(v)) for v in nnz)
                row["fit_seconds"] = fit_seconds if config.report_timing else 0.0
            except Exception as err:  # recorded per repetition, sweep continues
                row["error"] = f"{type(err).__name__}: {err}"
            rows.append(row)
    rows.extend(_mean_rows(rows, all_labels, config))
    if config.out:
        emit_report(rows, config.out)
    return rows


def _render_gamma(gamma):
    if np.ndim(gamma) == 0:
        return float(gamma)
    return ";".join(f"{float(g):.17g}" for g in np.asarray(gamma).ravel())


def _mean_rows(rows, all_labels, config):
    means = []
    for m in config.m:
        group = [
            r for r in rows
            if r["m"] == m and r["repetition"] != "mean" and not r["error"]
        ]
        if not group:
            continue
        row = {
            "method": config.variant,
            "m": m,
            "gamma": group[0]["gamma"],
            "repetition": "mean",
            "overall_accuracy": float(np.mean([r["overall_accuracy"] for r in group])),
        }
        for label in all_labels:
            key = f"acc_class_{label}"
            vals = [r[key] for r in group if r[key] is not None]
            row[key] = float(np.mean(vals)) if vals else None
        nnz = [
            np.array([int(v) for v in r["nnz_per_component"].split(";")])
            for r in group
        ]
        row["nnz_per_component"] = ";".join(
            f"{v:.17g}" for v in np.mean(nnz, axis=0)
        )
        row["fit_seconds"] = float(np.mean([r["fit_seconds"] for r in group]))
        row["error"] = ""
        means.append(row)
    return means


def run_timing_experiment(config):
    """Wall-time sweep over random dense instances on the (N, P=N/10) grid.

    Every instance matrix is shared by all variants and gammas so the
    comparison is paired; rows carry per-solve seconds and iteration
    counts, with per-cell medians appended.  Allocation failures skip
    the size and the sweep continues.
    """
    m = config.m[0]
    worker_counts = config.timing_workers or (config.workers,)
    rows = []
    for N in sorted(config.timing_sizes):
        if N % 10:
            raise ValueError(f"size {N} violates the P = N/10 grid")
        P = N // 10
        try:
            check_allocation(P, N)
        except MemoryError as err:
            print(f"skipping N={N}: {err}", file=sys.stderr)
            continue
        for variant in config.timing_variants:
            for gamma in config.timing_gammas:
                for workers in worker_counts:
                    plan = KernelPlan(workers=workers, chunk=config.chunk)
                    seconds, iterations = [], []
                    for instance in range(config.timing_instances):
                        rng = np.random.default_rng([config.seed, N, instance])
                        A = rng.standard_normal((P, N))
                        start = time.perf_counter()
                        _, _, report = fit_projection(
                            A, variant, m, gamma, config.mu, config.tol,
                            config.max_iter, seed=[config.seed, N, instance],
                            plan=plan, center=False,
                        )
                        elapsed = time.perf_counter() - start
                        seconds.append(elapsed)
                        iterations.append(report.iterations if report else 0)
                        rows.append({
                            "variant": variant, "N": N, "P": P, "gamma": gamma,
                            "workers": workers, "instance": instance,
                            "seconds": elapsed, "iterations": report.iterations,
                        })
                    rows.append({
                        "variant": variant, "N": N, "P": P, "gamma": gamma,
                        "workers": workers, "instance": "median",
                        "seconds": float(np.median(seconds)),
                        "iterations": float(np.median(iterations)),
                    })
    if config.out:
        emit_report(rows, config.out)
    return rows


def emit_report(rows, path):
    """Write rows as UTF-8 CSV: header, LF endings, round-trippable floats."""
    if not rows:
        raise ValueError("nothing to report")
    fields = list(rows[0].keys())
    for i, row in enumerate(rows):
        if list(row.keys()) != fields:
            raise ValueError(f"row {i} does not match the header {fields}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(fields) + "\n")
        for row in rows:
            fh.write(",".join(_render_field(row[k]) for k in fields) + "\n")


def _render_field(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.17g}"
    if isinstance(value, (np.floating,)):
        return f"{float(value):.17g}"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    text = str(value)
    if "," in text or '"' in text or "\n" in text:
        text = '"' + text.replace('"', '""') + '"'
    return text

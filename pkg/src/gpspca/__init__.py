"""Sparse principal component analysis by generalized power iteration.

Four penalized formulations (single-unit and block, l1 and l0), a dense
PCA baseline, a deterministic data-parallel kernel engine, and a
benchmark harness with a CLI.
"""

from .block import (
    BlockState,
    RankDeficiencyError,
    ascent_direction_block,
    objective_bl0,
    objective_bl1,
    polar_projection,
    solve_block,
)
from .core import (
    DataMatrix,
    RunReport,
    SolverConfig,
    SparseLoadings,
    StiefelPoint,
    center_columns,
    column_norms,
    gram_quadratic,
    positive_part,
)
from .datasets import (
    DatasetFormatError,
    FixedSplit,
    GroupedSplit,
    LabeledDataset,
    PerClassCount,
    knn_classify,
    load_dataset,
    load_matrix_csv,
    make_splits,
    synthetic_sparse_factors,
)
from .bench import (
    ExperimentConfig,
    emit_report,
    fit_projection,
    run_recognition_experiment,
    run_timing_experiment,
)
from .parallel import (
    KernelPlan,
    measure_scaling,
    par_gram_apply,
    par_matvec_t,
    par_threshold_accumulate,
)
from .pca import PcaModel, explained_variance, pca_fit, project
from .single_unit import (
    SingleUnitState,
    ascent_direction_sl0,
    ascent_direction_sl1,
    deflate,
    objective_sl0,
    objective_sl1,
    power_step,
    recover_pattern_sl0,
    recover_pattern_sl1,
    solve_multi_sequential,
    solve_single_unit,
)

__version__ = "0.1.0"

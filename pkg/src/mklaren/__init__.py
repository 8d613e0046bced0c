"""Multiple-kernel low-rank regression with least-angle pivot selection."""

from .errors import (
    CollinearColumnsError,
    DataError,
    DegeneratePivotError,
    InputError,
    MklarenError,
    NumericalError,
)
from .kernels import (
    KernelColumnOracle,
    KernelFunction,
    gaussian_bank,
    kernel_from_config,
    rank_one_bank,
)
from .lar import LarState, bisector, lar_path, step_size
from .lowrank import (
    CholeskyFactor,
    cholesky_step,
    incomplete_cholesky,
    init_factor,
    nystrom_approximation,
    refresh_lookahead,
)
from .mklaren import (
    CombinedFeatureSpace,
    Mklaren,
    candidate_column,
    candidate_scores,
    select_kernel_pivot,
    solve_coefficients,
)
from .inference import (
    compute_transform,
    dual_coefficients,
    load_model,
    predict,
    primal_weights,
    save_model,
)

__all__ = [
    "CholeskyFactor",
    "CollinearColumnsError",
    "CombinedFeatureSpace",
    "DataError",
    "DegeneratePivotError",
    "InputError",
    "KernelColumnOracle",
    "KernelFunction",
    "LarState",
    "Mklaren",
    "MklarenError",
    "NumericalError",
    "bisector",
    "candidate_column",
    "candidate_scores",
    "cholesky_step",
    "compute_transform",
    "dual_coefficients",
    "gaussian_bank",
    "incomplete_cholesky",
    "init_factor",
    "kernel_from_config",
    "lar_path",
    "load_model",
    "nystrom_approximation",
    "predict",
    "primal_weights",
    "rank_one_bank",
    "refresh_lookahead",
    "save_model",
    "select_kernel_pivot",
    "solve_coefficients",
    "step_size",
]

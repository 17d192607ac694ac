"""Iterative, division-free L2/layer normalization with bit-exact floating
point format emulation, baselines, and a macro latency model."""

__version__ = "0.1.0"

from .errors import DataFormatError, RangeOverflowError, UsageError
from .fpformat import (
    BF16,
    FP16,
    FP32,
    FORMATS,
    FormatSpec,
    FpScalar,
    compose,
    decompose,
    emu_add,
    emu_mul,
    emu_sub,
    round_array,
    round_binary,
    round_value,
    tree_sum,
    tree_sum_values,
)
from .norm_core import (
    FixedSteps,
    IterState,
    NormConfig,
    NormInputs,
    NormResult,
    Threshold,
    init_a,
    iterate_a,
    layernorm_iterl2,
    mean_shift,
    normalize_batch,
    select_lambda,
    squared_norm,
)
from .dynamics import (
    DynamicsParams,
    analytic_a,
    k_fixed_points,
    lambda_lower_bound,
    simulate_vector_recursion,
    steady_norm_sq,
)
from .baselines import (
    FisrSpec,
    fisr_inv_sqrt,
    layernorm_fisr,
    layernorm_reference,
    reference_batch,
)
from .latency import CycleReport, MacroGeometry, StageCosts, estimate_cycles

__all__ = [
    "__version__",
    "UsageError", "DataFormatError", "RangeOverflowError",
    "FormatSpec", "FpScalar", "FP32", "FP16", "BF16", "FORMATS",
    "decompose", "compose", "round_binary", "round_value", "round_array",
    "emu_add", "emu_sub", "emu_mul", "tree_sum", "tree_sum_values",
    "NormInputs", "NormConfig", "FixedSteps", "Threshold", "IterState", "NormResult",
    "mean_shift", "squared_norm", "init_a", "select_lambda", "iterate_a",
    "layernorm_iterl2", "normalize_batch",
    "DynamicsParams", "k_fixed_points", "steady_norm_sq", "analytic_a",
    "lambda_lower_bound", "simulate_vector_recursion",
    "FisrSpec", "fisr_inv_sqrt", "layernorm_fisr", "layernorm_reference",
    "reference_batch",
    "MacroGeometry", "StageCosts", "CycleReport", "estimate_cycles",
]

# Core package initialization
from .errors import (DivergenceError, FormatError, IndexBoundsError,
                     NumericalError, PermutationError, ShapeError, SpecError,
                     TensorRecoveryError, UnfoldingError, ValueDomainError)
from .metrics import MetricReport, evaluate
from .solvers import (RecoveryResult, SolverConfig, default_lambda,
                      resolve_lambda, rtrc, summed_lambda, trrpca)
from .tensor import DenseTensor, Matrixization, SamplingMask
from .tensor_ring import TrCores, compose, random_tr_tensor

__all__ = [
    "DenseTensor",
    "Matrixization",
    "SamplingMask",
    "TrCores",
    "compose",
    "random_tr_tensor",
    "SolverConfig",
    "RecoveryResult",
    "default_lambda",
    "summed_lambda",
    "resolve_lambda",
    "trrpca",
    "rtrc",
    "MetricReport",
    "evaluate",
    "TensorRecoveryError",
    "ShapeError",
    "IndexBoundsError",
    "PermutationError",
    "UnfoldingError",
    "ValueDomainError",
    "FormatError",
    "NumericalError",
    "SpecError",
    "DivergenceError",
]

"""Exception hierarchy shared by every module of the recovery library."""
from typing import Optional


class TensorRecoveryError(Exception):
    """Base class for all library errors"""


class ShapeError(TensorRecoveryError):
    """Dimension vectors are invalid, incongruent, or cores do not chain"""


class IndexBoundsError(TensorRecoveryError):
    """A multi-index component lies outside 1..n_i"""


class PermutationError(TensorRecoveryError):
    """A mode order is not a bijection on 1..d"""


class UnfoldingError(TensorRecoveryError):
    """Mode, shift or split parameter out of range for the tensor order"""


class ValueDomainError(TensorRecoveryError):
    """Non-finite data, non-binary mask, zero divisor or out-of-range parameter"""


class FormatError(TensorRecoveryError):
    """Malformed TRT1/TRC1/PPM payload or key/value document"""


class NumericalError(TensorRecoveryError):
    """A LAPACK routine failed to converge"""


class SpecError(TensorRecoveryError):
    """Invalid experiment or solver specification"""


class DivergenceError(TensorRecoveryError):
    """A solver iterate became non-finite"""

    def __init__(self, message: str, iteration: Optional[int] = None):
        super().__init__(message)
        self.iteration = iteration

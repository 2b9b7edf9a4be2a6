"""
Dense tensor value type and the unfolding families

Storage is first-index-fastest: entry (j_1, ..., j_d) lives at linear position
1 + sum_i (j_i - 1) * prod_{m<i} n_m.  Every unfolding is a transpose followed by a
Fortran-order reshape, so fold(unfold(X)) reproduces X bit for bit.

Public indices (modes, shifts, multi-indices) are 1-based.
"""
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from .errors import (IndexBoundsError, PermutationError, ShapeError,
                     UnfoldingError, ValueDomainError)
from .utils import DataValidator

Dims = Tuple[int, ...]


def _check_dims(dims: Sequence[int]) -> Dims:
    dims = tuple(int(n) for n in dims)
    if len(dims) < 1:
        raise ShapeError("tensor order must be at least 1")
    if any(n < 1 for n in dims):
        raise ShapeError(f"every dimension must be >= 1, got {dims}")
    return dims


@dataclass(frozen=True)
class DenseTensor:
    """Immutable d-order real tensor"""

    data: np.ndarray

    def __post_init__(self):
        array = np.array(self.data, dtype=np.float64, copy=True)
        if array.ndim < 1:
            raise ShapeError("tensor order must be at least 1")
        _check_dims(array.shape)
        array.setflags(write=False)
        object.__setattr__(self, "data", array)

    @classmethod
    def from_flat(cls, dims: Sequence[int], flat: Sequence[float]) -> "DenseTensor":
        """Build from a first-index-fastest flat vector"""
        dims = _check_dims(dims)
        flat = np.asarray(flat, dtype=np.float64).ravel()
        if flat.size != math.prod(dims):
            raise ShapeError(
                f"data length {flat.size} does not match prod{dims} = {math.prod(dims)}"
            )
        return cls(flat.reshape(dims, order="F"))

    @classmethod
    def zeros(cls, dims: Sequence[int]) -> "DenseTensor":
        return cls(np.zeros(_check_dims(dims)))

    @classmethod
    def ones(cls, dims: Sequence[int]) -> "DenseTensor":
        return cls(np.ones(_check_dims(dims)))

    @property
    def dims(self) -> Dims:
        return tuple(self.data.shape)

    @property
    def order(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def flat(self) -> np.ndarray:
        """Entries in first-index-fastest order"""
        return self.data.ravel(order="F")

    def entry(self, multi_index: Sequence[int]) -> float:
        """Entry at a 1-based multi-index"""
        _check_index(self.dims, multi_index)
        return float(self.data[tuple(j - 1 for j in multi_index)])

    def __eq__(self, other) -> bool:
        if not isinstance(other, DenseTensor):
            return NotImplemented
        return self.dims == other.dims and bool(np.array_equal(self.data, other.data))


@dataclass(frozen=True, eq=False)
class Matrixization:
    """
    A tensor flattened into a matrix

    ``modes`` lists the 1-based source modes in row-then-column order and
    ``row_modes`` how many of them form the rows; with ``tensor_dims`` this is
    enough for ``fold`` to invert any unfolding family.
    """

    data: np.ndarray
    tensor_dims: Optional[Dims] = None
    modes: Optional[Tuple[int, ...]] = None
    row_modes: int = 1
    meta: Dict[str, int] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        array = np.array(self.data, dtype=np.float64, copy=True)
        if array.ndim != 2 or array.shape[0] < 1 or array.shape[1] < 1:
            raise ShapeError(f"matrix must be 2-D with positive sides, got {array.shape}")
        array.setflags(write=False)
        object.__setattr__(self, "data", array)

    @property
    def rows(self) -> int:
        return int(self.data.shape[0])

    @property
    def cols(self) -> int:
        return int(self.data.shape[1])

    @property
    def flat(self) -> np.ndarray:
        """Entries column-major (row index fastest)"""
        return self.data.ravel(order="F")

    def with_data(self, data: np.ndarray) -> "Matrixization":
        """Same folding metadata, new values"""
        if tuple(np.shape(data)) != self.data.shape:
            raise ShapeError(f"replacement shape {np.shape(data)} != {self.data.shape}")
        return Matrixization(data, self.tensor_dims, self.modes, self.row_modes, dict(self.meta))


# ---------------------------------------------------------------------------
# Indexing
# ---------------------------------------------------------------------------


def _check_index(dims: Dims, multi_index: Sequence[int]):
    if len(multi_index) != len(dims):
        raise IndexBoundsError(
            f"index has {len(multi_index)} components, tensor order is {len(dims)}"
        )
    for i, (j, n) in enumerate(zip(multi_index, dims), start=1):
        if not 1 <= int(j) <= n:
            raise IndexBoundsError(f"index component {i} = {j} outside 1..{n}")


def linear_index(dims: Sequence[int], multi_index: Sequence[int]) -> int:
    """1-based linear position of a 1-based multi-index, first index fastest"""
    dims = _check_dims(dims)
    _check_index(dims, multi_index)
    offset = np.ravel_multi_index(tuple(int(j) - 1 for j in multi_index), dims, order="F")
    return int(offset) + 1


def multi_index(dims: Sequence[int], linear: int) -> Tuple[int, ...]:
    """Inverse of ``linear_index``"""
    dims = _check_dims(dims)
    if not 1 <= int(linear) <= math.prod(dims):
        raise IndexBoundsError(f"linear index {linear} outside 1..{math.prod(dims)}")
    offsets = np.unravel_index(int(linear) - 1, dims, order="F")
    return tuple(int(j) + 1 for j in offsets)


# ---------------------------------------------------------------------------
# Permutation and the unfolding families
# ---------------------------------------------------------------------------


def _check_order(order: Sequence[int], d: int) -> Tuple[int, ...]:
    order = tuple(int(o) for o in order)
    if sorted(order) != list(range(1, d + 1)):
        raise PermutationError(f"{order} is not a permutation of 1..{d}")
    return order


def permute(X: DenseTensor, order: Sequence[int]) -> DenseTensor:
    """Reorder modes: result mode k is source mode order[k]"""
    order = _check_order(order, X.order)
    return DenseTensor(np.transpose(X.data, [o - 1 for o in order]))


def _matricize(array: np.ndarray, modes: Tuple[int, ...], row_modes: int) -> np.ndarray:
    moved = np.transpose(array, [m - 1 for m in modes])
    rows = math.prod(moved.shape[:row_modes])
    return moved.reshape((rows, -1), order="F")


def _tensorize(matrix: np.ndarray, dims: Dims, modes: Tuple[int, ...]) -> np.ndarray:
    moved = matrix.reshape(tuple(dims[m - 1] for m in modes), order="F")
    return np.transpose(moved, np.argsort([m - 1 for m in modes]))


def fold(M: Matrixization) -> DenseTensor:
    """Invert whichever unfolding produced ``M``"""
    if M.tensor_dims is None or M.modes is None:
        raise UnfoldingError("matrix carries no folding metadata")
    expected = (
        math.prod(M.tensor_dims[m - 1] for m in M.modes[: M.row_modes]),
        math.prod(M.tensor_dims[m - 1] for m in M.modes[M.row_modes :]),
    )
    if M.data.shape != expected:
        raise ShapeError(f"matrix shape {M.data.shape} does not fold to {M.tensor_dims}")
    return DenseTensor(_tensorize(M.data, M.tensor_dims, M.modes))


def _mode_modes(d: int, i: int) -> Tuple[int, ...]:
    if not 1 <= i <= d:
        raise UnfoldingError(f"mode {i} outside 1..{d}")
    return (i,) + tuple(m for m in range(1, d + 1) if m != i)


def mode_unfold(X: DenseTensor, i: int) -> Matrixization:
    """Mode-i unfolding: n_i x prod_{m != i} n_m, remaining modes in ascending order"""
    modes = _mode_modes(X.order, i)
    return Matrixization(_matricize(X.data, modes, 1), X.dims, modes, 1, {"mode": i})


def mode_fold(M: Matrixization, i: int, dims: Sequence[int]) -> DenseTensor:
    dims = _check_dims(dims)
    modes = _mode_modes(len(dims), i)
    return fold(Matrixization(M.data, dims, modes, 1))


def _shift_modes(d: int, k: int, l: int) -> Tuple[int, ...]:
    if not 1 <= k <= d:
        raise UnfoldingError(f"shift {k} outside 1..{d}")
    if not 1 <= l <= d - 1:
        raise UnfoldingError(f"split {l} outside 1..{d - 1}")
    return tuple((k - 1 + t) % d + 1 for t in range(d))


def shift_matricize(X: DenseTensor, k: int, l: int) -> Matrixization:
    """
    k-shifting l-matricization

    Modes are cyclically reordered to [k, ..., d, 1, ..., k-1]; the first l of
    them index the rows, the rest the columns.
    """
    modes = _shift_modes(X.order, k, l)
    return Matrixization(
        _matricize(X.data, modes, l), X.dims, modes, l, {"shift": k, "split": l}
    )


def shift_fold(M: Matrixization, k: int, l: int, dims: Sequence[int]) -> DenseTensor:
    dims = _check_dims(dims)
    modes = _shift_modes(len(dims), k, l)
    return fold(Matrixization(M.data, dims, modes, l))


def balanced_split(d: int) -> int:
    return math.ceil(d / 2)


def balanced_unfold(X: DenseTensor, k: int) -> Matrixization:
    """k-shifting balanced unfolding (split ceil(d/2))"""
    if X.order < 2:
        raise UnfoldingError("balanced unfolding needs order >= 2")
    return shift_matricize(X, k, balanced_split(X.order))


def balanced_fold(M: Matrixization, k: int, dims: Sequence[int]) -> DenseTensor:
    return shift_fold(M, k, balanced_split(len(dims)), dims)


def balanced_shape(dims: Sequence[int], k: int = 1) -> Tuple[int, int]:
    """(rows, cols) of the k-shifting balanced unfolding without building it"""
    dims = _check_dims(dims)
    if len(dims) < 2:
        raise UnfoldingError("balanced unfolding needs order >= 2")
    modes = _shift_modes(len(dims), k, balanced_split(len(dims)))
    l = balanced_split(len(dims))
    rows = math.prod(dims[m - 1] for m in modes[:l])
    return rows, math.prod(dims) // rows


# ---------------------------------------------------------------------------
# Elementwise algebra
# ---------------------------------------------------------------------------


def _safe_divide(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    if np.any(y == 0):
        raise ValueDomainError("safe_divide: divisor has zero entries")
    return x / y


_ELEMENTWISE: Dict[str, Callable[[np.ndarray, np.ndarray], np.ndarray]] = {
    "add": np.add,
    "sub": np.subtract,
    "hadamard": np.multiply,
    "safe_divide": _safe_divide,
}


def elementwise(X: DenseTensor, Y: DenseTensor, op: str) -> DenseTensor:
    """Entrywise add, sub, hadamard or safe_divide of congruent tensors"""
    if op not in _ELEMENTWISE:
        raise ValueDomainError(f"unknown elementwise op {op!r}")
    DataValidator.require_congruent(X.dims, Y.dims)
    return DenseTensor(_ELEMENTWISE[op](X.data, Y.data))


def add(X: DenseTensor, Y: DenseTensor) -> DenseTensor:
    return elementwise(X, Y, "add")


def sub(X: DenseTensor, Y: DenseTensor) -> DenseTensor:
    return elementwise(X, Y, "sub")


def hadamard(X: DenseTensor, Y: DenseTensor) -> DenseTensor:
    return elementwise(X, Y, "hadamard")


def safe_divide(X: DenseTensor, Y: DenseTensor) -> DenseTensor:
    return elementwise(X, Y, "safe_divide")


def inner(X: DenseTensor, Y: DenseTensor) -> float:
    DataValidator.require_congruent(X.dims, Y.dims)
    return float(np.vdot(X.data, Y.data))


def frobenius(X: DenseTensor) -> float:
    return math.sqrt(inner(X, X))


class SamplingMask(DenseTensor):
    """Binary tensor P; its ones mark the observed support"""

    def __post_init__(self):
        super().__post_init__()
        if not np.all((self.data == 0) | (self.data == 1)):
            raise ValueDomainError("sampling mask must be binary (0/1)")

    @classmethod
    def full(cls, dims: Sequence[int]) -> "SamplingMask":
        return cls(np.ones(_check_dims(dims)))

    @property
    def observed(self) -> int:
        return int(np.count_nonzero(self.data))

    @property
    def sampling_ratio(self) -> float:
        """|Omega| / prod(dims)"""
        return self.observed / self.size

"""
Visual data tensorization (VDT)

An M x N image with trailing axes (channels, frames) is addressed block-wise:
row index i = i_1 + m_1 (i_2 + m_2 (...)) and column index j likewise, then the
(i_k, j_k) pairs are merged into modes of size m_k n_k with i_k fastest.
"""
import math
from typing import Sequence, Tuple

import numpy as np

from .errors import ShapeError
from .tensor import DenseTensor


def _check_factors(dims: Tuple[int, ...], m: Sequence[int], n: Sequence[int]):
    if len(m) != len(n) or len(m) == 0:
        raise ShapeError(f"need the same positive number of row and column factors, got {m} / {n}")
    if any(f < 1 for f in list(m) + list(n)):
        raise ShapeError("block factors must be >= 1")
    if len(dims) < 2 or math.prod(m) != dims[0] or math.prod(n) != dims[1]:
        raise ShapeError(f"factors {tuple(m)} x {tuple(n)} do not factor image dims {dims[:2]}")


def _interleave(K: int, trailing: int) -> Tuple[int, ...]:
    pairs = [axis for k in range(K) for axis in (k, K + k)]
    return tuple(pairs) + tuple(range(2 * K, 2 * K + trailing))


def vdt_forward(image: DenseTensor, m: Sequence[int], n: Sequence[int]) -> DenseTensor:
    """(M, N, *rest) -> (m_1 n_1, ..., m_K n_K, *rest)"""
    m, n = tuple(int(f) for f in m), tuple(int(f) for f in n)
    _check_factors(image.dims, m, n)
    rest = image.dims[2:]
    blocks = image.data.reshape(m + n + rest, order="F")
    paired = np.transpose(blocks, _interleave(len(m), len(rest)))
    merged = tuple(a * b for a, b in zip(m, n)) + rest
    return DenseTensor(paired.reshape(merged, order="F"))


def vdt_inverse(tensor: DenseTensor, m: Sequence[int], n: Sequence[int]) -> DenseTensor:
    """Inverse of ``vdt_forward``"""
    m, n = tuple(int(f) for f in m), tuple(int(f) for f in n)
    K = len(m)
    merged = tuple(a * b for a, b in zip(m, n))
    if len(m) != len(n) or tensor.dims[:K] != merged:
        raise ShapeError(f"tensor dims {tensor.dims} do not match factors {m} x {n}")
    rest = tensor.dims[K:]
    paired = tensor.data.reshape(tuple(f for pair in zip(m, n) for f in pair) + rest, order="F")
    blocks = np.transpose(paired, np.argsort(_interleave(K, len(rest))))
    return DenseTensor(blocks.reshape((math.prod(m), math.prod(n)) + rest, order="F"))


def parse_factors(text: str) -> Tuple[int, ...]:
    """``2,2,4`` or ``2x2x4`` or ``2*8`` (eight twos)"""
    text = text.strip().replace("x", ",")
    if "*" in text and "," not in text:
        base, count = text.split("*", 1)
        return (int(base),) * int(count)
    return tuple(int(f) for f in text.split(",") if f.strip())

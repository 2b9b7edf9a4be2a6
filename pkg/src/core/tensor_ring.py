"""
Tensor-ring cores

Core k has dims (r_k, n_k, r_{k+1}) with r_{d+1} = r_1, and
x_{j_1...j_d} = tr(G1[:, j_1, :] @ ... @ Gd[:, j_d, :]).
"""
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import structlog

from config.settings import settings

from .errors import ShapeError, UnfoldingError, ValueDomainError
from .prox import singular_values
from .tensor import DenseTensor, balanced_split, shift_matricize

logger = structlog.get_logger(__name__)


@dataclass(frozen=True, eq=False)
class TrCores:
    """Ordered ring of 3-order cores"""

    cores: Tuple[DenseTensor, ...]

    def __post_init__(self):
        cores = tuple(c if isinstance(c, DenseTensor) else DenseTensor(c) for c in self.cores)
        if len(cores) < 2:
            raise ShapeError("a tensor ring needs at least 2 cores")
        for k, core in enumerate(cores, start=1):
            if core.order != 3:
                raise ShapeError(f"core {k} has order {core.order}, expected 3")
        for k, core in enumerate(cores):
            following = cores[(k + 1) % len(cores)]
            if core.dims[2] != following.dims[0]:
                raise ShapeError(
                    f"core {k + 1} right rank {core.dims[2]} != "
                    f"core {(k + 1) % len(cores) + 1} left rank {following.dims[0]}"
                )
        object.__setattr__(self, "cores", cores)

    @property
    def order(self) -> int:
        return len(self.cores)

    @property
    def ranks(self) -> Tuple[int, ...]:
        """(r_1, ..., r_d); r_{d+1} = r_1 is implied"""
        return tuple(core.dims[0] for core in self.cores)

    @property
    def dims(self) -> Tuple[int, ...]:
        return tuple(core.dims[1] for core in self.cores)

    def __len__(self) -> int:
        return len(self.cores)

    def __iter__(self):
        return iter(self.cores)


def _chain(cores: Sequence[np.ndarray]) -> np.ndarray:
    """
    Contract a chain of cores into one (r_first, prod n, r_last) core

    The merged middle index runs first-index-fastest over the chained modes.
    """
    merged = cores[0]
    for core in cores[1:]:
        r_a, n_a, _ = merged.shape
        _, n_b, r_c = core.shape
        # (a, i, s) x (s, j, c) -> (a, i, j, c); i is faster than j after Fortran reshape
        step = np.einsum("ais,sjc->aijc", merged, core)
        merged = step.reshape((r_a, n_a * n_b, r_c), order="F")
    return merged


def compose(cores: TrCores) -> DenseTensor:
    """Full tensor from its ring by sequential core contraction"""
    merged = _chain([core.data for core in cores])
    closed = np.einsum("aja->j", merged)
    return DenseTensor.from_flat(cores.dims, closed)


def scalar_entry(cores: TrCores, multi_index: Sequence[int]) -> float:
    """Trace of the slice product at a 1-based multi-index"""
    if len(multi_index) != cores.order:
        raise ShapeError("index length does not match ring order")
    product = np.eye(cores.ranks[0])
    for core, j in zip(cores, multi_index):
        product = product @ core.data[:, int(j) - 1, :]
    return float(np.trace(product))


def _check_span(d: int, a: int, b: int) -> List[int]:
    if not (1 <= a <= d and 1 <= b <= d):
        raise UnfoldingError(f"span ({a}, {b}) outside 1..{d}")
    length = (b - a) % d + 1
    if length >= d:
        raise UnfoldingError(f"span ({a}, {b}) covers the whole ring")
    return [(a - 1 + t) % d for t in range(length)]


def connect(cores: TrCores, a: int, b: int) -> DenseTensor:
    """
    Tensor connection product of cores a..b (1-based, cyclic)

    Returns a core of dims (r_a, prod_{i=a}^{b} n_i, r_{b+1}).
    """
    span = _check_span(cores.order, a, b)
    return DenseTensor(_chain([cores.cores[k].data for k in span]))


def reduce_ring(cores: TrCores, a: int, b: int) -> TrCores:
    """Ring with cores a..b replaced by their connection product, rotated to start at a"""
    span = _check_span(cores.order, a, b)
    merged = connect(cores, a, b)
    rest = [cores.cores[(span[-1] + 1 + t) % cores.order] for t in range(cores.order - len(span))]
    return TrCores(tuple([merged] + rest))


def rotate_ring(cores: TrCores, shift: int) -> TrCores:
    """Ring starting at core ``shift`` (1-based)"""
    d = cores.order
    if not 1 <= shift <= d:
        raise UnfoldingError(f"shift {shift} outside 1..{d}")
    return TrCores(tuple(cores.cores[(shift - 1 + t) % d] for t in range(d)))


# ---------------------------------------------------------------------------
# Rank structure
# ---------------------------------------------------------------------------


def _unfolding_side(dims: Sequence[int], k: int, l: int) -> Tuple[int, int]:
    d = len(dims)
    rows = math.prod(dims[(k - 1 + t) % d] for t in range(l))
    return rows, math.prod(dims) // rows


def is_subcritical(dims: Sequence[int], ranks: Sequence[int], l: Optional[int] = None) -> bool:
    """r_k * r_{k+l} <= min side of every k-shifting l-matricization"""
    d = len(dims)
    if len(ranks) != d:
        raise ShapeError(f"{len(ranks)} ranks for {d} dims")
    l = balanced_split(d) if l is None else l
    for k in range(1, d + 1):
        rows, cols = _unfolding_side(dims, k, l)
        if ranks[k - 1] * ranks[(k - 1 + l) % d] > min(rows, cols):
            return False
    return True


def random_tr_tensor(
    dims: Sequence[int], ranks: Sequence[int], seed: Optional[int] = None
) -> Tuple[DenseTensor, TrCores]:
    """Standard-normal cores from a seeded generator and their composition"""
    dims = tuple(int(n) for n in dims)
    ranks = tuple(int(r) for r in ranks)
    if len(dims) < 2 or len(ranks) != len(dims):
        raise ShapeError(f"need d >= 2 dims and d ranks, got {dims} / {ranks}")
    if any(r < 1 for r in ranks):
        raise ShapeError(f"ranks must be >= 1, got {ranks}")
    if not is_subcritical(dims, ranks):
        raise ShapeError(f"rank vector {ranks} is not subcritical for dims {dims}")

    logger.debug("random_tr_tensor", dims=dims, ranks=ranks, seed=seed)
    rng = np.random.default_rng(seed)
    d = len(dims)
    cores = TrCores(
        tuple(
            DenseTensor(rng.standard_normal((ranks[k], dims[k], ranks[(k + 1) % d])))
            for k in range(d)
        )
    )
    return compose(cores), cores


def unfolding_rank_check(
    X: DenseTensor, k: int, l: int, tol: Optional[float] = None
) -> int:
    """Count singular values of the k-shifting l-matricization above tol * sigma_max"""
    tol = settings.rank_tolerance if tol is None else tol
    if tol <= 0:
        raise ValueDomainError("rank tolerance must be positive")
    sigma = singular_values(shift_matricize(X, k, l).data)
    if sigma.size == 0 or sigma[0] == 0:
        return 0
    return int(np.count_nonzero(sigma > tol * sigma[0]))

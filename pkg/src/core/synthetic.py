"""
Synthetic problem generators: Bernoulli sampling masks and sparse corruption
"""
import math
from dataclasses import dataclass
from typing import Literal, Optional, Sequence

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, field_validator

from .errors import ShapeError, ValueDomainError
from .tensor import DenseTensor, SamplingMask
from .utils import DataValidator

logger = structlog.get_logger(__name__)


class CorruptionSpec(BaseModel):
    """Sparse outliers: fraction of entries, value model and seed"""

    model_config = ConfigDict(frozen=True)

    fraction: float = 0.1
    value_model: Literal["signed_unit", "uniform_0_255", "gaussian"] = "signed_unit"
    sigma: float = 1.0  # gaussian only
    shared_channels: bool = False  # last axis holds channels sharing one support
    seed: Optional[int] = None

    @field_validator("fraction")
    @classmethod
    def _fraction_range(cls, value):
        if not 0 <= value < 0.5:
            raise ValueError("corruption fraction must lie in [0, 0.5)")
        return value

    @field_validator("sigma")
    @classmethod
    def _positive_sigma(cls, value):
        if not value > 0:
            raise ValueError("sigma must be > 0")
        return value


@dataclass(frozen=True, eq=False)
class Corruption:
    corrupted: DenseTensor
    sparse: DenseTensor  # S0 = corrupted - clean
    support: SamplingMask


def gen_mask(dims: Sequence[int], sr: float, seed: Optional[int] = None) -> SamplingMask:
    """i.i.d. Bernoulli(sr) sampling mask"""
    if not 0 < sr <= 1:
        raise ValueDomainError(f"sampling ratio must lie in (0, 1], got {sr}")
    rng = np.random.default_rng(seed)
    mask = SamplingMask((rng.random(tuple(dims)) < sr).astype(np.float64))
    logger.debug("mask_generated", dims=tuple(dims), sr=sr, realized=mask.sampling_ratio)
    return mask


def corrupt(
    X: DenseTensor, spec: CorruptionSpec, within: Optional[DenseTensor] = None
) -> Corruption:
    """
    Corrupt exactly floor(fraction * card) entries chosen without replacement

    ``within`` restricts the candidates to an observed support (card = |Omega|).
    With ``shared_channels`` the draw is over pixels and every channel of a chosen
    pixel is corrupted.
    """
    rng = np.random.default_rng(spec.seed)
    if spec.shared_channels:
        if X.order < 2:
            raise ShapeError("shared-channel corruption needs a channel axis")
        site_shape = X.dims[:-1]
    else:
        site_shape = X.dims

    if within is None:
        candidates = np.arange(math.prod(site_shape))
    else:
        DataValidator.require_congruent(within.dims, X.dims, "support and tensor")
        observed = within.data.reshape(X.dims)
        if spec.shared_channels:
            observed = observed.all(axis=-1)
        candidates = np.flatnonzero(observed.ravel(order="F"))

    count = math.floor(spec.fraction * candidates.size)
    chosen = rng.choice(candidates, size=count, replace=False)
    sites = np.zeros(math.prod(site_shape), dtype=bool)
    sites[chosen] = True
    sites = sites.reshape(site_shape, order="F")
    support = np.broadcast_to(sites[..., None], X.dims) if spec.shared_channels else sites

    corrupted = X.data.copy()
    if spec.value_model == "uniform_0_255":
        corrupted[support] = rng.uniform(0.0, 255.0, size=int(support.sum()))
    elif spec.value_model == "signed_unit":
        corrupted[support] += rng.choice((-1.0, 1.0), size=int(support.sum()))
    else:
        corrupted[support] += spec.sigma * rng.standard_normal(int(support.sum()))

    logger.debug(
        "corruption_applied", fraction=spec.fraction, entries=int(support.sum()), model=spec.value_model
    )
    return Corruption(
        corrupted=DenseTensor(corrupted),
        sparse=DenseTensor(corrupted - X.data),
        support=SamplingMask(support.astype(np.float64)),
    )

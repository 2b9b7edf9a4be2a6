"""
Recovery quality metrics: RE, MSE, PSNR and block-window SSIM
"""
import math
from typing import Dict, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .errors import ShapeError, ValueDomainError
from .tensor import DenseTensor, balanced_unfold
from .utils import DataValidator

PSNR_CAP_DB = 200.0
SSIM_WINDOW = 8


class MetricReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    re: float = Field(ge=0)
    mse: float = Field(ge=0)
    psnr_db: float
    ssim: float = Field(ge=-1.0, le=1.0)
    sr: float = Field(ge=0, le=1)
    ssim_window: int = SSIM_WINDOW
    peak: float = 255.0

    def record(self) -> Dict[str, float]:
        return self.model_dump()


def _congruent(estimate: DenseTensor, truth: DenseTensor):
    DataValidator.require_congruent(estimate.dims, truth.dims, "estimate and truth")


def metric_re(estimate: DenseTensor, truth: DenseTensor) -> float:
    """||X_hat - X||_F / ||X||_F"""
    _congruent(estimate, truth)
    reference = float(np.linalg.norm(truth.data))
    if reference == 0:
        raise ValueDomainError("relative error is undefined for a zero reference")
    return float(np.linalg.norm(estimate.data - truth.data)) / reference


def metric_mse(estimate: DenseTensor, truth: DenseTensor) -> float:
    _congruent(estimate, truth)
    return float(np.mean((estimate.data - truth.data) ** 2))


def metric_psnr(estimate: DenseTensor, truth: DenseTensor, peak: float = 255.0) -> float:
    """20 log10(peak / sqrt(MSE)) in dB, capped at 200 dB"""
    if not peak > 0:
        raise ValueDomainError("PSNR peak must be > 0")
    mse = metric_mse(estimate, truth)
    if mse == 0:
        return PSNR_CAP_DB
    return min(20.0 * math.log10(peak / math.sqrt(mse)), PSNR_CAP_DB)


def metric_ssim(
    estimate: DenseTensor,
    truth: DenseTensor,
    window: int = SSIM_WINDOW,
    k1: float = 0.01,
    k2: float = 0.03,
    dynamic_range: float = 255.0,
) -> float:
    """
    Mean SSIM over non-overlapping window x window blocks

    The first two axes are spatial, any further axes are treated as channels.
    Plain (unweighted) block means and population variances; ragged edges that do
    not fill a whole window are skipped.
    """
    _congruent(estimate, truth)
    if estimate.order < 2:
        raise ShapeError("SSIM needs at least two spatial axes")
    if window < 1 or window > min(estimate.dims[:2]):
        raise ValueDomainError(f"window {window} does not fit spatial dims {estimate.dims[:2]}")
    if not dynamic_range > 0:
        raise ValueDomainError("SSIM dynamic range must be > 0")

    c1 = (k1 * dynamic_range) ** 2
    c2 = (k2 * dynamic_range) ** 2
    rows, cols = estimate.dims[0] // window, estimate.dims[1] // window

    def blocks(tensor: DenseTensor) -> np.ndarray:
        cropped = tensor.data[: rows * window, : cols * window].reshape(
            rows * window, cols * window, -1
        )
        return cropped.reshape(rows, window, cols, window, -1)

    x, y = blocks(estimate), blocks(truth)
    mu_x, mu_y = x.mean(axis=(1, 3)), y.mean(axis=(1, 3))
    dx = x - mu_x[:, None, :, None, :]
    dy = y - mu_y[:, None, :, None, :]
    var_x, var_y = (dx**2).mean(axis=(1, 3)), (dy**2).mean(axis=(1, 3))
    cov = (dx * dy).mean(axis=(1, 3))

    index = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / (
        (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
    )
    return float(np.clip(index.mean(), -1.0, 1.0))


def evaluate(
    estimate: DenseTensor,
    truth: DenseTensor,
    sr: float = 1.0,
    image: bool = False,
    peak: Optional[float] = None,
) -> MetricReport:
    """
    Full report for an estimate against ground truth

    Images use peak 255 and SSIM on the pixel grid; other tensors use the
    reference range as peak and SSIM on the 1-shifting balanced unfolding.
    """
    if image:
        peak = 255.0 if peak is None else peak
        est_view, truth_view = estimate, truth
    else:
        spread = float(truth.data.max() - truth.data.min())
        peak = (spread if spread > 0 else 1.0) if peak is None else peak
        if truth.order >= 2:
            est_view = DenseTensor(balanced_unfold(estimate, 1).data)
            truth_view = DenseTensor(balanced_unfold(truth, 1).data)
        else:
            est_view = DenseTensor(estimate.data[:, None])
            truth_view = DenseTensor(truth.data[:, None])
    window = min(SSIM_WINDOW, *truth_view.dims[:2])
    return MetricReport(
        re=metric_re(estimate, truth),
        mse=metric_mse(estimate, truth),
        psnr_db=metric_psnr(estimate, truth, peak),
        ssim=metric_ssim(est_view, truth_view, window=window, dynamic_range=peak),
        sr=sr,
        ssim_window=window,
        peak=peak,
    )

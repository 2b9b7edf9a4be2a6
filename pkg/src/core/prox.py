"""
Proximal operators shared by both solvers

svt                    prox of tau * nuclear norm (singular value thresholding)
soft_threshold         prox of tau * l1 norm
masked_soft_threshold  minimizer of 0.5 * ||P * (X - B)||^2 + tau * ||X||_1
"""
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import scipy.linalg
import structlog

from .errors import NumericalError, ValueDomainError
from .tensor import DenseTensor, Matrixization, fold
from .utils import DataValidator

logger = structlog.get_logger(__name__)


@dataclass(frozen=True, eq=False)
class SvtResult:
    """Thresholded reconstruction and the spectrum it came from"""

    value: DenseTensor
    matrix: Matrixization
    retained_rank: int
    singular_values: np.ndarray


def _check_tau(tau: float):
    if not np.isfinite(tau) or tau < 0:
        raise ValueDomainError(f"threshold must be finite and >= 0, got {tau}")


def svd(matrix: np.ndarray, compute_uv: bool = True):
    """Thin SVD, retrying with the QR-iteration driver if divide-and-conquer fails"""
    for driver in ("gesdd", "gesvd"):
        try:
            return scipy.linalg.svd(
                matrix,
                full_matrices=False,
                compute_uv=compute_uv,
                check_finite=False,
                lapack_driver=driver,
            )
        except np.linalg.LinAlgError as e:
            logger.warning("svd_failed", driver=driver, shape=matrix.shape, error=str(e))
    raise NumericalError(f"SVD of a {matrix.shape} matrix did not converge")


def singular_values(matrix: np.ndarray) -> np.ndarray:
    return svd(matrix, compute_uv=False)


def shrink_spectrum(matrix: np.ndarray, tau: float) -> Tuple[np.ndarray, int, np.ndarray]:
    """U diag(max(sigma - tau, 0)) V^T, the retained rank and sigma"""
    U, sigma, Vt = svd(matrix)
    shrunk = np.maximum(sigma - tau, 0.0)
    rank = int(np.count_nonzero(shrunk))
    reconstruction = (U[:, :rank] * shrunk[:rank]) @ Vt[:rank, :]
    return reconstruction, rank, sigma


def svt(M: Matrixization, tau: float) -> SvtResult:
    """Singular value thresholding D_tau; values with sigma == tau shrink to exactly 0"""
    _check_tau(tau)
    DataValidator.require_finite(M.data, "matrix")
    reconstruction, rank, sigma = shrink_spectrum(M.data, tau)
    matrix = M.with_data(reconstruction)
    value = fold(matrix) if matrix.tensor_dims is not None else DenseTensor(reconstruction)
    return SvtResult(value=value, matrix=matrix, retained_rank=rank, singular_values=sigma)


def soft_threshold_array(values: np.ndarray, tau: float) -> np.ndarray:
    return np.sign(values) * np.maximum(np.abs(values) - tau, 0.0)


def soft_threshold(X: DenseTensor, tau: float) -> DenseTensor:
    """Entrywise sign(x) * max(|x| - tau, 0)"""
    _check_tau(tau)
    return DenseTensor(soft_threshold_array(X.data, tau))


def masked_soft_threshold(B: DenseTensor, P: DenseTensor, tau: float) -> DenseTensor:
    """S_tau(P * B): exact zeros off the support of P"""
    _check_tau(tau)
    DataValidator.require_congruent(B.dims, P.dims, "tensor and mask")
    DataValidator.require_binary(P.data)
    return DenseTensor(soft_threshold_array(P.data * B.data, tau))


def nuclear_norm(M: Matrixization) -> float:
    return float(np.sum(singular_values(M.data)))


def l1_norm(X: DenseTensor) -> float:
    return float(np.sum(np.abs(X.data)))

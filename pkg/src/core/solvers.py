"""
ADMM solvers over balanced TR-unfoldings

trrpca  fully observed T = L + S, one consensus copy X^(i) of L per unfolding
rtrc    partially observed P * T = P * (L + S), with an explicit L and a data dual W
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .errors import DivergenceError, ShapeError, ValueDomainError
from .prox import masked_soft_threshold, soft_threshold_array, svt
from .tensor import (DenseTensor, SamplingMask, balanced_shape,
                     balanced_split, balanced_unfold, frobenius, safe_divide)
from .utils import DataValidator

logger = structlog.get_logger(__name__)


class SolverConfig(BaseModel):
    """ADMM parameters"""

    model_config = ConfigDict(populate_by_name=True, frozen=True)

    lam: Union[float, Literal["auto"]] = Field(default="auto", alias="lambda")
    lambda_scale: float = 2.0  # auto lambda = lambda_scale * sum_i w_i * lambda_i
    weights: Optional[Tuple[float, ...]] = None  # None -> w_i = 1
    mu0: float = 1e-3
    beta: float = 1.1
    mu_max: float = 1e10
    tol: float = 1e-5
    feas_tol: Optional[float] = 1e-6  # None -> stop on relative change alone
    max_iters: int = 100
    parallel_unfoldings: bool = Field(default=False, alias="parallel")
    unfoldings: Literal["balanced_all", "single"] = "balanced_all"

    @field_validator("lam")
    @classmethod
    def _positive_lambda(cls, value):
        if value != "auto" and not (math.isfinite(value) and value > 0):
            raise ValueError("lambda must be a positive real or 'auto'")
        return value

    @field_validator("weights")
    @classmethod
    def _positive_weights(cls, value):
        if value is not None and (len(value) == 0 or any(not w > 0 for w in value)):
            raise ValueError("weights must be positive")
        return value

    @field_validator("mu0", "mu_max", "tol", "lambda_scale")
    @classmethod
    def _positive(cls, value):
        if not value > 0:
            raise ValueError("must be > 0")
        return value

    @field_validator("feas_tol")
    @classmethod
    def _positive_or_none(cls, value):
        if value is not None and not value > 0:
            raise ValueError("must be > 0")
        return value

    @field_validator("beta")
    @classmethod
    def _beta_at_least_one(cls, value):
        if value < 1:
            raise ValueError("beta must be >= 1")
        return value

    @field_validator("max_iters")
    @classmethod
    def _positive_iters(cls, value):
        if value < 1:
            raise ValueError("max_iters must be >= 1")
        return value

    @model_validator(mode="after")
    def _mu_order(self):
        if self.mu0 > self.mu_max:
            raise ValueError("mu0 must not exceed mu_max")
        return self

    @classmethod
    def image_preset(cls, **overrides) -> "SolverConfig":
        """beta = 1.1, mu0 = 10^-3.2"""
        return cls(**{"mu0": 10 ** -3.2, "beta": 1.1, **overrides})

    @classmethod
    def from_kv(cls, document: Dict[str, List[str]]) -> "SolverConfig":
        """Build from a parsed key/value document; unknown keys are ignored"""
        values: Dict[str, object] = {}
        for key in (
            "lambda", "lambda_scale", "beta", "mu0", "mu_max", "tol", "max_iters", "parallel", "unfoldings"
        ):
            if key in document:
                values[key] = document[key][-1]
        if "feas_tol" in document:
            raw = document["feas_tol"][-1]
            values["feas_tol"] = None if raw.lower() in ("none", "off") else raw
        if "weights" in document:
            values["weights"] = tuple(
                float(w) for item in document["weights"] for w in item.split(",") if w.strip()
            )
        return cls.model_validate(values)

    def to_kv(self) -> Dict[str, object]:
        return {
            "lambda": self.lam,
            "lambda_scale": self.lambda_scale,
            "weights": self.weights,
            "mu0": self.mu0,
            "beta": self.beta,
            "mu_max": self.mu_max,
            "tol": self.tol,
            "feas_tol": "none" if self.feas_tol is None else self.feas_tol,
            "max_iters": self.max_iters,
            "parallel": self.parallel_unfoldings,
            "unfoldings": self.unfoldings,
        }

    def mu_at(self, iteration: int) -> float:
        """Penalty used in 1-based iteration k: min(mu0 * beta^(k-1), mu_max)"""
        return min(self.mu0 * self.beta ** (iteration - 1), self.mu_max)


@dataclass(frozen=True, eq=False)
class RecoveryResult:
    L: DenseTensor
    S: DenseTensor
    iterations: int
    rc_trace: np.ndarray
    converged: bool
    lam: float
    mu_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))
    residual_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))


def default_lambda(dims: Sequence[int], p: float = 1.0) -> float:
    """1 / sqrt(p * max side of the 1-shifting balanced unfolding)"""
    if not 0 < p <= 1:
        raise ValueDomainError(f"sampling probability must lie in (0, 1], got {p}")
    rows, cols = balanced_shape(dims, 1)
    return 1.0 / math.sqrt(p * max(rows, cols))


def summed_lambda(
    dims: Sequence[int],
    p: float = 1.0,
    shifts: Optional[Sequence[int]] = None,
    weights: Optional[Sequence[float]] = None,
) -> float:
    """sum_i w_i / sqrt(p * max side of the i-shifting balanced unfolding)"""
    if not 0 < p <= 1:
        raise ValueDomainError(f"sampling probability must lie in (0, 1], got {p}")
    shifts = unfolding_shifts(len(dims)) if shifts is None else tuple(shifts)
    weights = (1.0,) * len(shifts) if weights is None else tuple(weights)
    if len(weights) != len(shifts):
        raise ValueDomainError(f"{len(weights)} weights given for {len(shifts)} unfoldings")
    return sum(w / math.sqrt(p * max(balanced_shape(dims, k))) for k, w in zip(shifts, weights))


def resolve_lambda(cfg: SolverConfig, dims: Sequence[int], p: float = 1.0) -> float:
    """Explicit lambda as given; auto sums the per-unfolding weights over the solved unfoldings"""
    if cfg.lam != "auto":
        return float(cfg.lam)
    shifts = unfolding_shifts(len(dims), cfg.unfoldings)
    return cfg.lambda_scale * summed_lambda(dims, p, shifts, cfg.weights)


def _relative_change(current: np.ndarray, previous: np.ndarray) -> float:
    previous_norm = float(np.linalg.norm(previous))
    change = float(np.linalg.norm(current - previous))
    return change if previous_norm == 0 else change / previous_norm


def relative_change(X_k: DenseTensor, X_prev: DenseTensor) -> float:
    """||X_k - X_prev||_F / ||X_prev||_F, or the absolute change when X_prev = 0"""
    DataValidator.require_congruent(X_k.dims, X_prev.dims, "iterates")
    return _relative_change(X_k.data, X_prev.data)


def unfolding_shifts(order: int, unfoldings: str = "balanced_all") -> Tuple[int, ...]:
    if order < 2:
        raise ShapeError("solvers need a tensor of order >= 2")
    if unfoldings == "single":
        return (1,)
    return tuple(range(1, balanced_split(order) + 1))


class _UnfoldingProx:
    """X^(i) <- fold(D_{w_i/mu}(<arg_i>_(i))) for every unfolding shift i"""

    def __init__(self, dims: Tuple[int, ...], cfg: SolverConfig):
        self.dims = dims
        self.shifts = unfolding_shifts(len(dims), cfg.unfoldings)
        weights = cfg.weights if cfg.weights is not None else (1.0,) * len(self.shifts)
        if len(weights) != len(self.shifts):
            raise ValueDomainError(
                f"{len(weights)} weights given for {len(self.shifts)} unfoldings"
            )
        self.weights = tuple(weights)
        self.executor = (
            ThreadPoolExecutor(max_workers=len(self.shifts))
            if cfg.parallel_unfoldings and len(self.shifts) > 1
            else None
        )
        self.ranks = [0] * len(self.shifts)

    def _one(self, index: int, argument: np.ndarray, mu: float) -> np.ndarray:
        shift = self.shifts[index]
        result = svt(balanced_unfold(DenseTensor(argument), shift), self.weights[index] / mu)
        self.ranks[index] = result.retained_rank
        return result.value.data

    def __call__(self, arguments: List[np.ndarray], mu: float) -> List[np.ndarray]:
        indices = range(len(self.shifts))
        if self.executor is None:
            return [self._one(i, arguments[i], mu) for i in indices]
        return list(self.executor.map(lambda i: self._one(i, arguments[i], mu), indices))

    def close(self):
        if self.executor is not None:
            self.executor.shutdown(wait=True)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _check_finite(iteration: int, **iterates):
    for name, value in iterates.items():
        arrays = value if isinstance(value, list) else [value]
        if not all(np.all(np.isfinite(a)) for a in arrays):
            logger.error("solver_diverged", iteration=iteration, iterate=name)
            raise DivergenceError(
                f"non-finite {name} at iteration {iteration}; try a smaller mu0 or beta",
                iteration=iteration,
            )


def _scaled(residual: float, reference: float) -> float:
    return residual if reference == 0 else residual / reference


def _should_stop(cfg: SolverConfig, rc: float, residual: float) -> bool:
    if rc > cfg.tol:
        return False
    return cfg.feas_tol is None or residual <= cfg.feas_tol


def trrpca(T: DenseTensor, cfg: Optional[SolverConfig] = None) -> RecoveryResult:
    """Tensor-ring robust PCA: min sum_i w_i ||X_<i>||_* + lam ||S||_1  s.t. X^(i) + S = T"""
    cfg = cfg or SolverConfig()
    if T.order < 2:
        raise ShapeError("trrpca needs a tensor of order >= 2")
    DataValidator.require_finite(T.data, "input tensor")
    dims = T.dims
    data = T.data
    data_norm = float(np.linalg.norm(data))
    with _UnfoldingProx(dims, cfg) as prox:
        m = len(prox.shifts)
        lam = resolve_lambda(cfg, dims, 1.0)
        X = [data.copy() for _ in range(m)]
        Z = [np.zeros(dims) for _ in range(m)]
        S = np.zeros(dims)
        L_prev = data.copy()
        L = L_prev
        rc_trace, mu_trace, residual_trace = [], [], []
        converged = False

        logger.info("trrpca_start", dims=dims, unfoldings=m, lam=lam, mu0=cfg.mu0, beta=cfg.beta)
        for iteration in range(1, cfg.max_iters + 1):
            mu = cfg.mu_at(iteration)
            X = prox([data - S - Z[i] / mu for i in range(m)], mu)
            S = soft_threshold_array(
                sum(data - X[i] - Z[i] / mu for i in range(m)) / m, lam / (m * mu)
            )
            gaps = [X[i] + S - data for i in range(m)]
            for i in range(m):
                Z[i] = Z[i] + mu * gaps[i]
            L = sum(X) / m
            _check_finite(iteration, X=X, S=S, Z=Z)

            rc = _relative_change(L, L_prev)
            residual = _scaled(max(float(np.linalg.norm(g)) for g in gaps), data_norm)
            rc_trace.append(rc)
            mu_trace.append(mu)
            residual_trace.append(residual)
            logger.debug(
                "trrpca_iteration",
                iteration=iteration,
                mu=mu,
                rc=rc,
                residual=residual,
                ranks=list(prox.ranks),
            )
            if _should_stop(cfg, rc, residual):
                converged = True
                break
            L_prev = L

    logger.info(
        "trrpca_done", iterations=len(rc_trace), converged=converged, rc=rc_trace[-1]
    )
    return RecoveryResult(
        L=DenseTensor(L),
        S=DenseTensor(S),
        iterations=len(rc_trace),
        rc_trace=np.array(rc_trace),
        converged=converged,
        lam=lam,
        mu_trace=np.array(mu_trace),
        residual_trace=np.array(residual_trace),
    )


def rtrc(T: DenseTensor, P: DenseTensor, cfg: Optional[SolverConfig] = None) -> RecoveryResult:
    """
    Robust tensor-ring completion

    min sum_i w_i ||X_<i>||_* + lam ||S||_1  s.t. X^(i) = L,  P * (L + S) = P * T
    """
    cfg = cfg or SolverConfig()
    if T.order < 2:
        raise ShapeError("rtrc needs a tensor of order >= 2")
    DataValidator.require_congruent(T.dims, P.dims, "tensor and mask")
    mask = P if isinstance(P, SamplingMask) else SamplingMask(P.data)
    if mask.observed == 0:
        raise ValueDomainError("sampling mask observes no entries")
    dims = T.dims
    observed = mask.data * np.where(mask.data == 1, T.data, 0.0)
    DataValidator.require_finite(observed, "observed entries")
    p = mask.data
    observed_norm = float(np.linalg.norm(observed))
    with _UnfoldingProx(dims, cfg) as prox:
        m = len(prox.shifts)
        lam = resolve_lambda(cfg, dims, mask.sampling_ratio)
        denominator = DenseTensor(m + p)
        L = observed.copy()
        S = np.zeros(dims)
        X = [L.copy() for _ in range(m)]
        Z = [np.zeros(dims) for _ in range(m)]
        W = np.zeros(dims)
        L_prev = L
        rc_trace, mu_trace, residual_trace = [], [], []
        converged = False

        logger.info(
            "rtrc_start", dims=dims, unfoldings=m, lam=lam, sr=mask.sampling_ratio, mu0=cfg.mu0
        )
        for iteration in range(1, cfg.max_iters + 1):
            mu = cfg.mu_at(iteration)
            X = prox([L - Z[i] / mu for i in range(m)], mu)
            numerator = sum(X[i] + Z[i] / mu for i in range(m)) + p * (observed - S - W / mu)
            L = safe_divide(DenseTensor(numerator), denominator).data
            S = masked_soft_threshold(
                DenseTensor(observed - L - W / mu), mask, lam / mu
            ).data
            consensus = [X[i] - L for i in range(m)]
            for i in range(m):
                Z[i] = Z[i] + mu * consensus[i]
            data_gap = p * (L + S - observed)
            W = W + mu * data_gap
            _check_finite(iteration, X=X, L=L, S=S, Z=Z, W=W)

            rc = _relative_change(L, L_prev)
            residual = _scaled(
                max(
                    max(float(np.linalg.norm(c)) for c in consensus),
                    float(np.linalg.norm(data_gap)),
                ),
                observed_norm,
            )
            rc_trace.append(rc)
            mu_trace.append(mu)
            residual_trace.append(residual)
            logger.debug(
                "rtrc_iteration",
                iteration=iteration,
                mu=mu,
                rc=rc,
                residual=residual,
                ranks=list(prox.ranks),
            )
            if _should_stop(cfg, rc, residual):
                converged = True
                break
            L_prev = L

    logger.info("rtrc_done", iterations=len(rc_trace), converged=converged, rc=rc_trace[-1])
    return RecoveryResult(
        L=DenseTensor(L),
        S=DenseTensor(S),
        iterations=len(rc_trace),
        rc_trace=np.array(rc_trace),
        converged=converged,
        lam=lam,
        mu_trace=np.array(mu_trace),
        residual_trace=np.array(residual_trace),
    )


def feasibility_gap(result: RecoveryResult, T: DenseTensor, P: Optional[DenseTensor] = None) -> float:
    """||P * (L + S - T)||_F / ||P * T||_F (P = ones when omitted)"""
    p = np.ones(T.dims) if P is None else P.data
    gap = frobenius(DenseTensor(p * (result.L.data + result.S.data - T.data)))
    reference = frobenius(DenseTensor(p * T.data))
    return _scaled(gap, reference)

import numpy as np
import pytest

from src.core.errors import ShapeError, ValueDomainError
from src.core.prox import (l1_norm, masked_soft_threshold, nuclear_norm,
                           singular_values, soft_threshold, svt)
from src.core.tensor import (DenseTensor, Matrixization, SamplingMask,
                             balanced_unfold)


def svt_objective(Y: np.ndarray, M: np.ndarray, tau: float) -> float:
    return tau * float(np.sum(singular_values(Y))) + 0.5 * float(np.sum((Y - M) ** 2))


def l1_objective(Y: np.ndarray, X: np.ndarray, tau: float) -> float:
    return tau * float(np.sum(np.abs(Y))) + 0.5 * float(np.sum((Y - X) ** 2))


class TestSvt:
    """Singular value thresholding"""

    def test_zero_threshold_reproduces(self, rng):
        M = Matrixization(rng.standard_normal((6, 4)))
        result = svt(M, 0.0)
        assert np.linalg.norm(result.matrix.data - M.data) <= 1e-12 * np.linalg.norm(M.data)
        assert result.retained_rank == 4

    def test_diagonal(self):
        result = svt(Matrixization(np.diag([3.0, 1.0])), 2.0)
        np.testing.assert_allclose(result.matrix.data, np.diag([1.0, 0.0]), atol=1e-14)
        assert result.retained_rank == 1

    def test_threshold_equal_to_singular_value_drops_it(self):
        result = svt(Matrixization(np.diag([3.0, 1.0])), 1.0)
        assert result.retained_rank == 1

    def test_value_is_folded(self, rng):
        X = DenseTensor(rng.standard_normal((2, 3, 2, 3)))
        result = svt(balanced_unfold(X, 2), 0.0)
        assert result.value.dims == X.dims
        np.testing.assert_allclose(result.value.data, X.data, atol=1e-12)

    def test_negative_threshold(self):
        with pytest.raises(ValueDomainError):
            svt(Matrixization(np.eye(2)), -1.0)

    def test_non_finite_matrix(self):
        with pytest.raises(ValueDomainError):
            svt(Matrixization(np.array([[np.nan, 0.0], [0.0, 1.0]])), 1.0)

    @pytest.mark.parametrize("seed", range(20))
    def test_beats_random_perturbations(self, seed):
        rng = np.random.default_rng(seed)
        M = rng.standard_normal((5, 7))
        tau = float(rng.uniform(0.1, 2.0))
        best = svt(Matrixization(M), tau).matrix.data
        objective = svt_objective(best, M, tau)
        for _ in range(1000):
            candidate = best + 1e-2 * rng.standard_normal(best.shape)
            assert objective <= svt_objective(candidate, M, tau)

    def test_non_expansive(self, rng):
        A, B = rng.standard_normal((6, 5)), rng.standard_normal((6, 5))
        gap = np.linalg.norm(svt(Matrixization(A), 0.7).matrix.data - svt(Matrixization(B), 0.7).matrix.data)
        assert gap <= np.linalg.norm(A - B) + 1e-12

    @pytest.mark.parametrize("seed", range(10))
    def test_nuclear_norm_of_output(self, seed):
        rng = np.random.default_rng(300 + seed)
        M = Matrixization(rng.standard_normal((7, 5)))
        tau = float(rng.uniform(0.0, 2.0))
        result = svt(M, tau)
        expected = float(np.sum(np.maximum(singular_values(M.data) - tau, 0.0)))
        assert nuclear_norm(result.matrix) == pytest.approx(expected, rel=1e-10, abs=1e-12)

    def test_retained_rank_shrinks_with_threshold(self, rng):
        M = Matrixization(rng.standard_normal((8, 6)))
        ranks = [svt(M, tau).retained_rank for tau in np.linspace(0.0, 20.0, 41)]
        assert ranks[0] == 6
        assert ranks[-1] == 0
        assert all(later <= earlier for earlier, later in zip(ranks, ranks[1:]))


class TestSoftThreshold:
    def test_closed_form(self):
        out = soft_threshold(DenseTensor(np.array([5.0, -1.0, -4.0, 2.0])), 2.0)
        np.testing.assert_array_equal(out.data, [3.0, 0.0, -2.0, 0.0])

    def test_zero_threshold(self, rng):
        X = DenseTensor(rng.standard_normal((3, 4)))
        assert soft_threshold(X, 0.0) == X

    @pytest.mark.parametrize("seed", range(10))
    def test_commutes_with_permutation_and_sign(self, seed):
        rng = np.random.default_rng(400 + seed)
        values = rng.standard_normal(24)
        tau = float(rng.uniform(0.0, 1.5))
        order = rng.permutation(values.size)
        shrunk = soft_threshold(DenseTensor(values), tau).data
        np.testing.assert_array_equal(soft_threshold(DenseTensor(values[order]), tau).data, shrunk[order])
        np.testing.assert_array_equal(soft_threshold(DenseTensor(-values), tau).data, -shrunk)

    @pytest.mark.parametrize("seed", range(20))
    def test_beats_random_perturbations(self, seed):
        rng = np.random.default_rng(100 + seed)
        X = rng.standard_normal((4, 5))
        tau = float(rng.uniform(0.1, 1.5))
        best = soft_threshold(DenseTensor(X), tau).data
        objective = l1_objective(best, X, tau)
        for _ in range(1000):
            candidate = best + 1e-2 * rng.standard_normal(best.shape)
            assert objective <= l1_objective(candidate, X, tau)


class TestMaskedSoftThreshold:
    def test_full_mask_is_soft_threshold(self, rng):
        B = DenseTensor(rng.standard_normal((3, 4, 2)))
        assert masked_soft_threshold(B, SamplingMask.full(B.dims), 0.3) == soft_threshold(B, 0.3)

    def test_empty_mask_is_zero(self, rng):
        B = DenseTensor(rng.standard_normal((3, 4)))
        assert masked_soft_threshold(B, DenseTensor.zeros(B.dims), 0.3) == DenseTensor.zeros(B.dims)

    @pytest.mark.parametrize("seed", range(20))
    def test_per_entry_oracle(self, seed):
        rng = np.random.default_rng(200 + seed)
        B = rng.standard_normal((4, 3, 3))
        P = (rng.random(B.shape) < 0.5).astype(float)
        tau = float(rng.uniform(0.05, 1.0))
        out = masked_soft_threshold(DenseTensor(B), DenseTensor(P), tau).data
        # on the support: scalar soft threshold; off it only tau |x| remains, minimized at 0
        expected = np.where(P == 1, np.sign(B) * np.maximum(np.abs(B) - tau, 0.0), 0.0)
        np.testing.assert_allclose(out, expected, rtol=0, atol=1e-12)

    def test_rejects_non_binary_mask(self):
        with pytest.raises(ValueDomainError):
            masked_soft_threshold(DenseTensor.ones((2, 2)), DenseTensor(np.full((2, 2), 0.5)), 0.1)

    def test_rejects_dims_mismatch(self):
        with pytest.raises(ShapeError):
            masked_soft_threshold(DenseTensor.ones((2, 2)), DenseTensor.ones((2, 3)), 0.1)


class TestNorms:
    def test_nuclear_and_l1(self):
        assert nuclear_norm(Matrixization(np.diag([3.0, -1.0]))) == pytest.approx(4.0)
        assert l1_norm(DenseTensor(np.array([1.0, -2.0, 0.5]))) == 3.5

"""
End-to-end recovery experiments on synthetic tensor-ring data

These run the full solvers for a few hundred iterations on 6 x 6 x 6 x 6 tensors
and take the longest of the suite.
"""
import numpy as np
import pytest

from src.core.experiment import SweepSpec, sweep
from src.core.metrics import metric_re
from src.core.solvers import SolverConfig, feasibility_gap, rtrc, trrpca
from src.core.synthetic import CorruptionSpec, corrupt, gen_mask
from src.core.tensor import SamplingMask
from src.core.tensor_ring import random_tr_tensor

DIMS = (6, 6, 6, 6)
RANKS = (2, 2, 2, 2)
CONFIG = SolverConfig(max_iters=300)
# long fixed-penalty tail so both solvers settle on the same minimizer
TIGHT = SolverConfig(tol=1e-10, feas_tol=1e-10, mu_max=1.0, max_iters=3000)


def robust_instance(seed):
    truth, _ = random_tr_tensor(DIMS, RANKS, seed=seed)
    return truth, corrupt(truth, CorruptionSpec(fraction=0.05, seed=10_000 + seed)).corrupted


class TestExactRecovery:
    def test_trrpca_recovers_most_seeds(self):
        recovered = 0
        for seed in range(10):
            truth, T = robust_instance(seed)
            result = trrpca(T, CONFIG)
            assert result.iterations <= 300
            assert result.converged
            assert feasibility_gap(result, T) <= 1e-6
            recovered += metric_re(result.L, truth) <= 1e-3
        assert recovered >= 9

    def test_rtrc_recovers_most_seeds(self):
        recovered = 0
        for seed in range(10):
            truth, _ = random_tr_tensor(DIMS, RANKS, seed=seed)
            P = gen_mask(DIMS, 0.7, seed=20_000 + seed)
            T = corrupt(truth, CorruptionSpec(fraction=0.05, seed=30_000 + seed), within=P).corrupted
            result = rtrc(T, P, CONFIG)
            recovered += metric_re(result.L, truth) <= 1e-2
            assert result.converged
            assert feasibility_gap(result, T, P) <= 1e-6
        assert recovered >= 8

    @pytest.mark.parametrize("seed", range(5))
    def test_full_mask_completion_matches_robust_pca(self, seed):
        _, T = robust_instance(seed)
        robust = trrpca(T, TIGHT)
        completed = rtrc(T, SamplingMask.full(DIMS), TIGHT)
        assert metric_re(completed.L, robust.L) <= 1e-6


class TestScheduleAndStopping:
    def test_mu_trace_and_first_stop(self):
        _, T = robust_instance(42)
        cfg = SolverConfig(max_iters=300, feas_tol=None)
        result = trrpca(T, cfg)
        expected = [min(1e-3 * 1.1**k, 1e10) for k in range(result.iterations)]
        assert list(result.mu_trace) == expected
        assert np.all(result.rc_trace[:-1] > cfg.tol)
        assert result.converged
        assert result.rc_trace[-1] <= cfg.tol


class TestPhaseTransition:
    def test_success_non_decreasing_in_sampling_ratio(self, tmp_path):
        spec = SweepSpec(
            dims=DIMS,
            sr=(0.3, 0.5, 0.7, 0.9),
            gamma=(0.05,),
            rank=(RANKS,),
            reps=5,
            output_dir=tmp_path,
        )
        table = sweep(spec).sort_values("sr")
        successes = list(table["successes"])
        assert successes == sorted(successes)
        assert successes[-1] >= 4

from pathlib import Path

import numpy as np
import pandas as pd
import pytest

import src.core.experiment as experiment
from src.core.errors import DivergenceError, SpecError
from src.core.experiment import (EXIT_DIVERGED, EXIT_IO, EXIT_OK,
                                 RUN_COLUMNS, SWEEP_COLUMNS, ExperimentSpec,
                                 SweepSpec, build_problem, repetition_seeds,
                                 run, sweep)
from src.core.formats import (format_kv_document, load_ppm, load_tensor,
                              parse_kv_document, save_ppm)
from src.core.solvers import SolverConfig
from src.core.tensor import DenseTensor

SMALL_RUN = """
task = trrpca
dims = 6,6,6,6
rank = 2,2,2,2
gamma = 0.05
repetitions = 3
seed = 17
max_iters = 300
"""


def write_spec(tmp_path, text, name="spec.kv"):
    path = tmp_path / name
    path.write_text(text + f"output = {tmp_path / 'out'}\n")
    return path


class TestExperimentSpec:
    def test_from_file(self, tmp_path):
        spec = ExperimentSpec.from_file(write_spec(tmp_path, SMALL_RUN))
        assert spec.task == "trrpca"
        assert spec.dims == (6, 6, 6, 6)
        assert spec.rank == (2, 2, 2, 2)
        assert spec.corruption.fraction == 0.05
        assert spec.corruption.value_model == "signed_unit"
        assert spec.repetitions == 3
        assert spec.solver.max_iters == 300
        assert spec.solver.mu0 == 1e-3

    def test_image_defaults(self):
        spec = ExperimentSpec.from_kv(
            {"source": ["image"], "input": ["x.ppm"], "vdt_m": ["2*4"], "vdt_n": ["2*4"]}
        )
        assert spec.corruption.fraction == 0.1
        assert spec.corruption.value_model == "uniform_0_255"
        assert spec.corruption.shared_channels
        assert spec.solver.mu0 == 10 ** -3.2
        assert spec.vdt_m == (2, 2, 2, 2)

    @pytest.mark.parametrize(
        "document",
        [
            {"repetitions": ["0"]},
            {"task": ["trrpca"], "sr": ["0.5"]},
            {"source": ["tensor"]},
            {"dims": ["4,4,4"], "rank": ["1,1"]},
            {"beta": ["0.5"]},
            {"task": ["svd"]},
        ],
    )
    def test_invalid(self, document):
        with pytest.raises(SpecError):
            ExperimentSpec.from_kv(document)

    def test_frames_collect_every_input(self):
        spec = ExperimentSpec.from_kv(
            parse_kv_document("source = frames\ninput = a.ppm\ninput = b.ppm\ninput = c.ppm\n")
        )
        assert spec.frame_paths == (Path("a.ppm"), Path("b.ppm"), Path("c.ppm"))
        assert spec.input_path is None
        assert spec.corruption.value_model == "uniform_0_255"
        assert spec.corruption.shared_channels
        assert spec.solver.mu0 == 1e-3
        assert parse_kv_document(format_kv_document(spec.to_kv()))["input"] == ["a.ppm", "b.ppm", "c.ppm"]

    def test_frames_need_inputs(self):
        with pytest.raises(SpecError):
            ExperimentSpec.from_kv({"source": ["frames"]})

    def test_repetition_seeds_are_distinct(self):
        assert repetition_seeds(0, 0) != repetition_seeds(0, 1)
        assert repetition_seeds(3, 2) == repetition_seeds(3, 2)


class TestBuildProblem:
    def test_rtrc_corrupts_only_observed_entries(self):
        spec = ExperimentSpec(task="rtrc", dims=(5, 5, 5), rank=(1, 1, 1), sr=0.6, repetitions=1)
        problem = build_problem(spec, 0)
        changed = problem.sparse.data != 0
        assert np.all(problem.mask.data[changed] == 1)
        np.testing.assert_allclose(problem.observed.data, problem.truth.data + problem.sparse.data)

    def test_trrpca_mask_is_full(self):
        problem = build_problem(ExperimentSpec(dims=(4, 4, 4), rank=(1, 1, 1), repetitions=1), 0)
        assert problem.mask.sampling_ratio == 1.0


class TestRun:
    """Repeated runs and their report files"""

    def test_synthetic_run_writes_reports(self, tmp_path):
        outcome = run(ExperimentSpec.from_file(write_spec(tmp_path, SMALL_RUN)))
        assert outcome.exit_code == EXIT_OK
        out = tmp_path / "out"
        table = pd.read_csv(out / "runs.csv")
        assert list(table.columns) == RUN_COLUMNS
        assert len(table) == 3
        assert (table["re"] <= 1e-3).all()
        for rep in range(3):
            assert load_tensor(out / f"rep{rep:03d}_L.trt1").dims == (6, 6, 6, 6)
            assert (out / f"rep{rep:03d}_S.trt1").exists()
        manifest = parse_kv_document((out / "manifest.kv").read_text())
        assert len(manifest["resolved_lambda"]) == 3
        assert manifest["lambda"] == ["auto"]

    def test_clean_full_observation(self, tmp_path):
        spec = ExperimentSpec(
            dims=(4, 4, 4, 4),
            rank=(1, 1, 1, 1),
            corruption={"fraction": 0.0},
            solver=SolverConfig(tol=1e-8, feas_tol=1e-10, max_iters=500),
            repetitions=1,
            output_dir=tmp_path,
        )
        outcome = run(spec)
        assert outcome.rows[0]["converged"]
        assert outcome.rows[0]["re"] <= 1e-6

    def test_manifest_reproduces_run(self, tmp_path):
        first_dir, second_dir = tmp_path / "first", tmp_path / "second"
        spec = ExperimentSpec(
            task="rtrc",
            dims=(4, 4, 4, 4),
            rank=(1, 1, 1, 1),
            sr=0.8,
            solver=SolverConfig(max_iters=40),
            repetitions=2,
            output_dir=first_dir,
        )
        run(spec)
        replay = ExperimentSpec.from_file(first_dir / "manifest.kv").model_copy(
            update={"output_dir": second_dir}
        )
        run(replay)
        first = pd.read_csv(first_dir / "runs.csv").drop(columns="wall_seconds")
        second = pd.read_csv(second_dir / "runs.csv").drop(columns="wall_seconds")
        pd.testing.assert_frame_equal(first, second)

    def test_missing_input(self, tmp_path):
        out = tmp_path / "out"
        spec = ExperimentSpec(source="tensor", input_path=tmp_path / "absent.trt1", output_dir=out)
        outcome = run(spec)
        assert outcome.exit_code == EXIT_IO
        assert not out.exists()

    def test_divergence_exit_code(self, tmp_path, monkeypatch):
        def diverge(spec, problem):
            raise DivergenceError("non-finite X", iteration=3)

        monkeypatch.setattr(experiment, "solve", diverge)
        spec = ExperimentSpec(dims=(3, 3, 3), rank=(1, 1, 1), repetitions=2, output_dir=tmp_path)
        assert run(spec).exit_code == EXIT_DIVERGED

    def test_image_run(self, tmp_path, rng):
        save_ppm(DenseTensor(rng.integers(0, 256, size=(8, 8, 3)).astype(float)), tmp_path / "img.ppm")
        spec_path = tmp_path / "image.kv"
        spec_path.write_text(
            "source = image\n"
            f"input = {tmp_path / 'img.ppm'}\n"
            "vdt_m = 2,2,2\n"
            "vdt_n = 2,2,2\n"
            "repetitions = 1\n"
            "max_iters = 20\n"
            f"output = {tmp_path / 'out'}\n"
        )
        outcome = run(ExperimentSpec.from_file(spec_path))
        assert outcome.exit_code == EXIT_OK
        assert (tmp_path / "out" / "rep000_L.ppm").exists()
        assert load_tensor(tmp_path / "out" / "rep000_L.trt1").dims == (4, 4, 4, 3)
        assert outcome.rows[0]["sr"] == 1.0

    def test_frames_run(self, tmp_path, rng):
        lines = ["source = frames", "task = rtrc", "sr = 0.8"]
        for frame in range(3):
            path = tmp_path / f"frame{frame}.ppm"
            save_ppm(DenseTensor(rng.integers(0, 256, size=(8, 4, 3)).astype(float)), path)
            lines.append(f"input = {path}")
        lines += ["vdt_m = 2,4", "vdt_n = 2,2", "repetitions = 1", "max_iters = 20", f"output = {tmp_path / 'out'}"]
        spec_path = tmp_path / "video.kv"
        spec_path.write_text("\n".join(lines) + "\n")
        outcome = run(ExperimentSpec.from_file(spec_path))
        assert outcome.exit_code == EXIT_OK
        out = tmp_path / "out"
        assert load_tensor(out / "rep000_L.trt1").dims == (4, 8, 3, 3)
        for frame in range(3):
            assert load_ppm(out / f"rep000_L_f{frame:03d}.ppm").dims == (8, 4, 3)
        manifest = parse_kv_document((out / "manifest.kv").read_text())
        assert len(manifest["input"]) == 3

    def test_frames_share_corrupted_pixels(self, tmp_path, rng):
        paths = []
        for frame in range(2):
            paths.append(tmp_path / f"frame{frame}.ppm")
            save_ppm(DenseTensor(rng.integers(0, 256, size=(6, 6, 3)).astype(float)), paths[-1])
        spec = ExperimentSpec(
            source="frames",
            frame_paths=tuple(paths),
            corruption={"fraction": 0.1, "value_model": "uniform_0_255", "shared_channels": True},
            repetitions=1,
        )
        problem = build_problem(spec, 0, experiment.load_clean_input(spec))
        hit = problem.sparse.data != 0
        assert problem.truth.dims == (6, 6, 3, 2)
        assert hit.any()
        np.testing.assert_array_equal(hit.any(axis=2), hit.all(axis=2))

    def test_frames_size_mismatch(self, tmp_path):
        save_ppm(DenseTensor(np.zeros((4, 4, 3))), tmp_path / "a.ppm")
        save_ppm(DenseTensor(np.zeros((4, 6, 3))), tmp_path / "b.ppm")
        spec = ExperimentSpec(
            source="frames", frame_paths=(tmp_path / "a.ppm", tmp_path / "b.ppm"), output_dir=tmp_path / "out"
        )
        assert run(spec).exit_code == EXIT_IO


class TestSweep:
    def test_from_kv_lists(self):
        spec = SweepSpec.from_kv(
            parse_kv_document("sr = 0.3\nsr = 0.9\ngamma = 0.05\nrank = 1,1,1,1\nrank = 2,2,2,2\nreps = 2\n")
        )
        assert spec.sr == (0.3, 0.9)
        assert spec.rank == ((1, 1, 1, 1), (2, 2, 2, 2))
        assert spec.solver.max_iters == 300
        assert len(spec.cells()) == 4

    def test_rank_length_mismatch(self):
        with pytest.raises(SpecError):
            SweepSpec.from_kv({"rank": ["1,1,1"]})

    def test_trivial_cell_succeeds(self, tmp_path):
        spec = SweepSpec(
            sr=(1.0,), gamma=(0.0,), rank=((1, 1, 1, 1),), reps=2, output_dir=tmp_path
        )
        table = sweep(spec)
        assert list(table.columns) == SWEEP_COLUMNS
        assert table.loc[0, "successes"] == 2
        written = pd.read_csv(tmp_path / "sweep.csv")
        assert len(written) == 1
        assert (tmp_path / "manifest.kv").exists()

    def test_parallel_cells(self, tmp_path):
        spec = SweepSpec(
            dims=(4, 4, 4, 4),
            sr=(0.8, 1.0),
            gamma=(0.0,),
            rank=((1, 1, 1, 1),),
            reps=1,
            workers=2,
            solver=SolverConfig(max_iters=30),
            output_dir=tmp_path,
        )
        table = sweep(spec)
        assert sorted(table["sr"]) == [0.8, 1.0]
        assert len(pd.read_csv(tmp_path / "sweep.csv")) == 2

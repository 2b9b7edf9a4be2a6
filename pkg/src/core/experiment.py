"""
Experiment harness: repeated recovery runs and phase-transition sweeps

Specs are flat key/value documents (see ``formats.parse_kv_document``).  Every
repetition appends one CSV row as soon as it finishes, so interrupted runs keep
their completed rows.
"""
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
import pandas as pd
import structlog
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator, model_validator

from config.settings import settings

from .errors import DivergenceError, FormatError, ShapeError, SpecError
from .formats import (format_kv_document, load_ppm, load_ppm_sequence,
                      load_tensor, parse_kv_document, save_ppm, save_tensor)
from .metrics import MetricReport, evaluate
from .solvers import RecoveryResult, SolverConfig, rtrc, trrpca
from .synthetic import CorruptionSpec, corrupt, gen_mask
from .tensor import DenseTensor, SamplingMask
from .tensor_ring import random_tr_tensor
from .utils import ExperimentMonitor
from .vdt import parse_factors, vdt_forward, vdt_inverse

logger = structlog.get_logger(__name__)

RUN_COLUMNS = [
    "repetition",
    "seed",
    "task",
    "re",
    "mse",
    "psnr_db",
    "ssim",
    "sr",
    "iterations",
    "converged",
    "lam",
    "wall_seconds",
]
SWEEP_COLUMNS = ["sr", "gamma", "rank", "reps", "successes", "mean_re", "mean_iterations"]

EXIT_OK = 0
EXIT_DIVERGED = 1
EXIT_IO = 2


def _ints(text: str) -> Tuple[int, ...]:
    return tuple(int(v) for v in text.replace("x", ",").split(",") if v.strip())


def _last(document: Dict[str, List[str]], key: str, default=None):
    return document[key][-1] if key in document else default


def _solver_from_kv(document: Dict[str, List[str]], image: bool) -> SolverConfig:
    solver = SolverConfig.from_kv(document)
    if image and "mu0" not in document:
        return SolverConfig.image_preset(**solver.model_dump(exclude={"mu0"}))
    return solver


class ExperimentSpec(BaseModel):
    """One recovery workflow, repeated ``repetitions`` times"""

    model_config = ConfigDict(frozen=True)

    task: Literal["trrpca", "rtrc"] = "trrpca"
    source: Literal["synthetic", "tensor", "image", "frames"] = "synthetic"
    dims: Tuple[int, ...] = (6, 6, 6, 6)
    rank: Tuple[int, ...] = (2, 2, 2, 2)
    input_path: Optional[Path] = None
    frame_paths: Tuple[Path, ...] = ()
    vdt_m: Optional[Tuple[int, ...]] = None
    vdt_n: Optional[Tuple[int, ...]] = None
    corruption: CorruptionSpec = CorruptionSpec(fraction=0.05)
    sr: float = 1.0
    solver: SolverConfig = SolverConfig()
    repetitions: int = settings.default_repetitions
    seed: int = 0
    output_dir: Optional[Path] = None

    @field_validator("repetitions")
    @classmethod
    def _at_least_one(cls, value):
        if value < 1:
            raise ValueError("repetitions must be >= 1")
        return value

    @field_validator("sr")
    @classmethod
    def _sr_range(cls, value):
        if not 0 < value <= 1:
            raise ValueError("sr must lie in (0, 1]")
        return value

    @model_validator(mode="after")
    def _source_requirements(self):
        if self.source == "frames":
            if not self.frame_paths:
                raise ValueError("source frames needs at least one input frame")
        elif self.source != "synthetic" and self.input_path is None:
            raise ValueError(f"source {self.source} needs an input path")
        if self.source == "synthetic" and len(self.dims) != len(self.rank):
            raise ValueError("synthetic dims and rank must have the same length")
        if (self.vdt_m is None) != (self.vdt_n is None):
            raise ValueError("vdt_m and vdt_n go together")
        if self.task == "trrpca" and self.sr != 1.0:
            raise ValueError("trrpca is fully observed; use task = rtrc for sr < 1")
        return self

    @property
    def is_visual(self) -> bool:
        """8-bit pixel data: images and frame sequences"""
        return self.source in ("image", "frames")

    @classmethod
    def from_kv(cls, document: Dict[str, List[str]]) -> "ExperimentSpec":
        try:
            source = _last(document, "source", "synthetic")
            image = source == "image"
            visual = source in ("image", "frames")
            values: Dict[str, object] = {
                "task": _last(document, "task", "trrpca"),
                "source": source,
                "solver": _solver_from_kv(document, image),
                "corruption": CorruptionSpec(
                    fraction=float(_last(document, "gamma", 0.1 if visual else 0.05)),
                    value_model=_last(
                        document, "corruption", "uniform_0_255" if visual else "signed_unit"
                    ),
                    sigma=float(_last(document, "sigma", 1.0)),
                    shared_channels=visual,
                ),
            }
            for key in ("dims", "rank"):
                if key in document:
                    values[key] = _ints(document[key][-1])
            for key in ("vdt_m", "vdt_n"):
                if key in document:
                    values[key] = parse_factors(document[key][-1])
            if source == "frames":
                values["frame_paths"] = tuple(Path(p) for p in document.get("input", []))
            elif "input" in document:
                values["input_path"] = Path(document["input"][-1])
            if "output" in document:
                values["output_dir"] = Path(document["output"][-1])
            for key in ("sr", "repetitions", "seed"):
                if key in document:
                    values[key] = document[key][-1]
            return cls.model_validate(values)
        except (ValidationError, ValueError) as e:
            raise SpecError(f"invalid experiment spec: {e}") from e

    @classmethod
    def from_file(cls, path: Path) -> "ExperimentSpec":
        return cls.from_kv(parse_kv_document(Path(path).read_text()))

    def to_kv(self) -> Dict[str, object]:
        document: Dict[str, object] = {
            "task": self.task,
            "source": self.source,
            "input": self._input_entries(),
            "dims": self.dims if self.source == "synthetic" else None,
            "rank": self.rank if self.source == "synthetic" else None,
            "vdt_m": self.vdt_m,
            "vdt_n": self.vdt_n,
            "gamma": self.corruption.fraction,
            "corruption": self.corruption.value_model,
            "sigma": self.corruption.sigma,
            "sr": self.sr,
            "repetitions": self.repetitions,
            "seed": self.seed,
        }
        document.update(self.solver.to_kv())
        return document

    def _input_entries(self):
        if self.source == "frames":
            return [str(p) for p in self.frame_paths]
        return str(self.input_path) if self.input_path else None


def resolve_output_dir(spec_dir: Optional[Path]) -> Path:
    """TRR_OUTPUT_DIR wins, then the spec's ``output``, then the settings default"""
    if "output_dir" in settings.model_fields_set or spec_dir is None:
        return Path(settings.output_dir)
    return Path(spec_dir)


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    truth: DenseTensor
    observed: DenseTensor
    mask: SamplingMask
    sparse: DenseTensor


@dataclass
class RunOutcome:
    exit_code: int
    output_dir: Optional[Path] = None
    rows: List[Dict[str, object]] = field(default_factory=list)


def repetition_seeds(base: int, repetition: int) -> Tuple[int, int, int]:
    """Independent (truth, mask, corruption) seeds for one repetition"""
    truth, mask, noise = np.random.SeedSequence([base, repetition]).generate_state(3)
    return int(truth), int(mask), int(noise)


def load_clean_input(spec: ExperimentSpec) -> Optional[DenseTensor]:
    """Clean tensor for file sources (VDT applied to pixel data); None for synthetic"""
    if spec.source == "synthetic":
        return None
    if spec.source == "tensor":
        return load_tensor(spec.input_path)
    if spec.source == "frames":
        pixels = load_ppm_sequence(spec.frame_paths)
    else:
        pixels = load_ppm(spec.input_path)
    if spec.vdt_m is not None:
        return vdt_forward(pixels, spec.vdt_m, spec.vdt_n)
    return pixels


def _corrupt_pixels(
    spec: ExperimentSpec, pixels: DenseTensor, noise_spec: CorruptionSpec, mask: DenseTensor
) -> Tuple[DenseTensor, DenseTensor]:
    """Corrupt on the pixel grid; frame sequences move their channel axis last for the draw"""
    if spec.source != "frames":
        hit = corrupt(pixels, noise_spec, within=mask)
        return hit.corrupted, hit.sparse
    hit = corrupt(
        DenseTensor(np.moveaxis(pixels.data, 2, -1)),
        noise_spec,
        within=DenseTensor(np.moveaxis(mask.data, 2, -1)),
    )
    return (
        DenseTensor(np.moveaxis(hit.corrupted.data, -1, 2)),
        DenseTensor(np.moveaxis(hit.sparse.data, -1, 2)),
    )


def build_problem(
    spec: ExperimentSpec, repetition: int, clean: Optional[DenseTensor] = None
) -> ProblemInstance:
    truth_seed, mask_seed, noise_seed = repetition_seeds(spec.seed, repetition)
    if clean is None:
        clean, _ = random_tr_tensor(spec.dims, spec.rank, truth_seed)
    mask = gen_mask(clean.dims, spec.sr, mask_seed) if spec.task == "rtrc" else SamplingMask.full(clean.dims)

    noise_spec = spec.corruption.model_copy(update={"seed": noise_seed})
    if spec.is_visual and spec.vdt_m is not None:
        # corrupt on the pixel grid so the support is shared across channels, then tensorize
        pixels = vdt_inverse(clean, spec.vdt_m, spec.vdt_n)
        pixel_mask = vdt_inverse(mask, spec.vdt_m, spec.vdt_n)
        corrupted, sparse = _corrupt_pixels(spec, pixels, noise_spec, pixel_mask)
        observed = vdt_forward(corrupted, spec.vdt_m, spec.vdt_n)
        sparse = vdt_forward(sparse, spec.vdt_m, spec.vdt_n)
    elif spec.is_visual:
        observed, sparse = _corrupt_pixels(spec, clean, noise_spec, mask)
    else:
        hit = corrupt(clean, noise_spec, within=mask)
        observed, sparse = hit.corrupted, hit.sparse
    return ProblemInstance(truth=clean, observed=observed, mask=mask, sparse=sparse)


def solve(spec: ExperimentSpec, problem: ProblemInstance) -> Tuple[RecoveryResult, float]:
    """Run the configured solver; wall time excludes I/O"""
    start = time.perf_counter()
    if spec.task == "rtrc":
        result = rtrc(problem.observed, problem.mask, spec.solver)
    else:
        result = trrpca(problem.observed, spec.solver)
    return result, time.perf_counter() - start


def append_row(path: Path, row: Dict[str, object], columns: List[str]):
    """Append one row, writing the header only for a new file"""
    frame = pd.DataFrame([row], columns=columns)
    frame.to_csv(path, mode="a", header=not path.exists(), index=False)


class ExperimentRunner:
    """Runs the repetitions of one spec and writes its report files"""

    def __init__(self, spec: ExperimentSpec):
        self.spec = spec
        self.monitor = ExperimentMonitor()
        self.output_dir = resolve_output_dir(spec.output_dir)
        self.lambdas: List[float] = []

    def _write_manifest(self):
        document = self.spec.to_kv()
        document["resolved_lambda"] = list(self.lambdas)
        (self.output_dir / "manifest.kv").write_text(format_kv_document(document))

    def _save_outputs(self, repetition: int, result: RecoveryResult):
        stem = self.output_dir / f"rep{repetition:03d}"
        save_tensor(result.L, f"{stem}_L.trt1")
        save_tensor(result.S, f"{stem}_S.trt1")
        if self.spec.is_visual:
            L = result.L
            if self.spec.vdt_m is not None:
                L = vdt_inverse(L, self.spec.vdt_m, self.spec.vdt_n)
            if self.spec.source == "frames":
                for frame in range(L.dims[-1]):
                    save_ppm(DenseTensor(L.data[..., frame]), f"{stem}_L_f{frame:03d}.ppm")
            else:
                save_ppm(L, f"{stem}_L.ppm")

    def run(self) -> RunOutcome:
        spec = self.spec
        try:
            clean = load_clean_input(spec)
        except (OSError, FormatError, ShapeError) as e:
            logger.error("input_unavailable", source=spec.source, error=str(e))
            return RunOutcome(EXIT_IO)

        self.output_dir.mkdir(parents=True, exist_ok=True)
        csv_path = self.output_dir / "runs.csv"
        outcome = RunOutcome(EXIT_OK, self.output_dir)
        logger.info("run_start", task=spec.task, source=spec.source, reps=spec.repetitions, output=str(self.output_dir))

        for repetition in range(spec.repetitions):
            problem = build_problem(spec, repetition, clean)
            try:
                result, seconds = solve(spec, problem)
            except DivergenceError as e:
                logger.error("repetition_diverged", repetition=repetition, iteration=e.iteration)
                self.monitor.increment_metric("divergences")
                self._write_manifest()
                outcome.exit_code = EXIT_DIVERGED
                break

            estimate, truth = result.L, problem.truth
            if spec.is_visual and spec.vdt_m is not None:
                estimate = vdt_inverse(estimate, spec.vdt_m, spec.vdt_n)
                truth = vdt_inverse(truth, spec.vdt_m, spec.vdt_n)
            report: MetricReport = evaluate(
                estimate, truth, sr=problem.mask.sampling_ratio, image=spec.is_visual
            )
            row = {
                "repetition": repetition,
                "seed": spec.seed,
                "task": spec.task,
                **{k: report.record()[k] for k in ("re", "mse", "psnr_db", "ssim", "sr")},
                "iterations": result.iterations,
                "converged": result.converged,
                "lam": result.lam,
                "wall_seconds": seconds,
            }
            self.lambdas.append(result.lam)
            try:
                append_row(csv_path, row, RUN_COLUMNS)
                self._save_outputs(repetition, result)
                self._write_manifest()
            except OSError as e:
                logger.error("write_failed", error=str(e))
                return RunOutcome(EXIT_IO, self.output_dir, outcome.rows)
            outcome.rows.append(row)

            self.monitor.increment_metric("solves")
            self.monitor.increment_metric("iterations", result.iterations)
            self.monitor.increment_metric("solve_seconds", seconds)
            if report.re <= settings.success_threshold:
                self.monitor.increment_metric("successes")
            logger.info(
                "repetition_done",
                repetition=repetition,
                re=report.re,
                psnr_db=report.psnr_db,
                iterations=result.iterations,
                seconds=round(seconds, 3),
            )

        self.monitor.log_performance()
        return outcome


def run(spec: ExperimentSpec) -> RunOutcome:
    return ExperimentRunner(spec).run()


# ---------------------------------------------------------------------------
# Phase-transition sweeps
# ---------------------------------------------------------------------------


class SweepSpec(BaseModel):
    """Grid over sampling ratio, corruption fraction and TR-rank"""

    model_config = ConfigDict(frozen=True)

    task: Literal["trrpca", "rtrc"] = "rtrc"
    dims: Tuple[int, ...] = (6, 6, 6, 6)
    sr: Tuple[float, ...] = (1.0,)
    gamma: Tuple[float, ...] = (0.05,)
    rank: Tuple[Tuple[int, ...], ...] = ((2, 2, 2, 2),)
    reps: int = 5
    seed: int = 0
    workers: int = settings.sweep_workers
    solver: SolverConfig = SolverConfig(max_iters=300)
    output_dir: Optional[Path] = None

    @model_validator(mode="after")
    def _nonempty(self):
        if not (self.sr and self.gamma and self.rank):
            raise ValueError("sweep grid must be nonempty")
        if self.reps < 1 or self.workers < 1:
            raise ValueError("reps and workers must be >= 1")
        if any(len(r) != len(self.dims) for r in self.rank):
            raise ValueError("every rank vector needs one entry per dim")
        return self

    @classmethod
    def from_kv(cls, document: Dict[str, List[str]]) -> "SweepSpec":
        try:
            values: Dict[str, object] = {}
            if "dims" in document:
                values["dims"] = _ints(document["dims"][-1])
            if "sr" in document:
                values["sr"] = tuple(float(v) for v in document["sr"])
            if "gamma" in document:
                values["gamma"] = tuple(float(v) for v in document["gamma"])
            if "rank" in document:
                values["rank"] = tuple(_ints(v) for v in document["rank"])
            for key in ("task", "reps", "seed", "workers"):
                if key in document:
                    values[key] = document[key][-1]
            if "output" in document:
                values["output_dir"] = Path(document["output"][-1])
            solver = SolverConfig.from_kv(document)
            if "max_iters" not in document:
                solver = solver.model_copy(update={"max_iters": 300})
            values["solver"] = solver
            return cls.model_validate(values)
        except (ValidationError, ValueError) as e:
            raise SpecError(f"invalid sweep spec: {e}") from e

    @classmethod
    def from_file(cls, path: Path) -> "SweepSpec":
        return cls.from_kv(parse_kv_document(Path(path).read_text()))

    def cells(self) -> List[Tuple[float, float, Tuple[int, ...]]]:
        return [(sr, g, r) for r in self.rank for g in self.gamma for sr in self.sr]


def _cell_spec(sweep: SweepSpec, sr: float, gamma: float, rank: Tuple[int, ...]) -> ExperimentSpec:
    task = "rtrc" if sweep.task == "rtrc" or sr < 1 else "trrpca"
    return ExperimentSpec(
        task=task,
        dims=sweep.dims,
        rank=rank,
        corruption=CorruptionSpec(fraction=gamma),
        sr=sr,
        solver=sweep.solver,
        repetitions=sweep.reps,
        seed=sweep.seed,
    )


def run_cell(sweep: SweepSpec, sr: float, gamma: float, rank: Tuple[int, ...]) -> Dict[str, object]:
    """All repetitions of one grid cell; diverged solves count as failures"""
    spec = _cell_spec(sweep, sr, gamma, rank)
    errors, iterations = [], []
    for repetition in range(sweep.reps):
        problem = build_problem(spec, repetition)
        try:
            result, _ = solve(spec, problem)
            errors.append(evaluate(result.L, problem.truth, sr=sr).re)
            iterations.append(result.iterations)
        except DivergenceError as e:
            logger.warning("cell_diverged", sr=sr, gamma=gamma, rank=rank, iteration=e.iteration)
            errors.append(math.inf)
            iterations.append(spec.solver.max_iters)
    successes = sum(1 for e in errors if e <= settings.success_threshold)
    return {
        "sr": sr,
        "gamma": gamma,
        "rank": ",".join(str(r) for r in rank),
        "reps": sweep.reps,
        "successes": successes,
        "mean_re": float(np.mean(errors)),
        "mean_iterations": float(np.mean(iterations)),
    }


def sweep(spec: SweepSpec) -> pd.DataFrame:
    """Recovery-probability table, one CSV row per cell flushed as cells finish"""
    output_dir = resolve_output_dir(spec.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    csv_path = output_dir / "sweep.csv"
    writer_lock = threading.Lock()
    monitor = ExperimentMonitor()

    def work(cell):
        row = run_cell(spec, *cell)
        with writer_lock:
            append_row(csv_path, row, SWEEP_COLUMNS)
            monitor.increment_metric("solves", spec.reps)
            monitor.increment_metric("successes", row["successes"])
        logger.info("cell_done", **row)
        return row

    logger.info("sweep_start", cells=len(spec.cells()), reps=spec.reps, workers=spec.workers)
    if spec.workers == 1:
        rows = [work(cell) for cell in spec.cells()]
    else:
        with ThreadPoolExecutor(max_workers=spec.workers) as pool:
            rows = list(pool.map(work, spec.cells()))
    (output_dir / "manifest.kv").write_text(
        format_kv_document(
            {
                "task": spec.task,
                "dims": spec.dims,
                "sr": list(spec.sr),
                "gamma": list(spec.gamma),
                "rank": list(spec.rank),
                "reps": spec.reps,
                "seed": spec.seed,
                "workers": spec.workers,
                **spec.solver.to_kv(),
            }
        )
    )
    monitor.log_performance()
    return pd.DataFrame(rows, columns=SWEEP_COLUMNS)

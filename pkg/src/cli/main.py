"""
Command-line harness

    python -m src.cli.main run <spec.kv>
    python -m src.cli.main sweep <spec.kv>
    python -m src.cli.main metrics <recovered.trt1> <truth.trt1>
    python -m src.cli.main vdt <image.ppm> --m 2*8 --n 2*8 -o image.trt1

Exit codes: 0 success, 1 solver divergence, 2 I/O or spec error.
"""
import argparse
import os
import sys
from pathlib import Path
from typing import List, Optional

import structlog

# Add project root to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", ".."))

from config.settings import settings
from src.core.errors import (DivergenceError, FormatError, SpecError,
                             TensorRecoveryError)
from src.core.experiment import (EXIT_DIVERGED, EXIT_IO, EXIT_OK,
                                 ExperimentSpec, SweepSpec, run, sweep)
from src.core.formats import (format_kv_record, load_ppm, load_tensor,
                              save_ppm, save_tensor)
from src.core.metrics import evaluate
from src.core.utils import configure_logging
from src.core.vdt import parse_factors, vdt_forward, vdt_inverse

logger = structlog.get_logger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trrecover",
        description="Robust tensor-ring recovery (TRRPCA / RTRC) experiments",
    )
    parser.add_argument("--log-level", default=settings.log_level)
    parser.add_argument("--json-logs", action="store_true", default=settings.log_json)
    commands = parser.add_subparsers(dest="command", required=True)

    run_cmd = commands.add_parser("run", help="repeated recovery runs from a spec file")
    run_cmd.add_argument("spec", type=Path)

    sweep_cmd = commands.add_parser("sweep", help="phase-transition sweep from a spec file")
    sweep_cmd.add_argument("spec", type=Path)

    metrics_cmd = commands.add_parser("metrics", help="RE/MSE/PSNR/SSIM of two TRT1 tensors")
    metrics_cmd.add_argument("recovered", type=Path)
    metrics_cmd.add_argument("truth", type=Path)
    metrics_cmd.add_argument("--sr", type=float, default=1.0)
    metrics_cmd.add_argument("--image", action="store_true", help="tensors are M x N x 3 images")
    metrics_cmd.add_argument("-o", "--output", type=Path)

    vdt_cmd = commands.add_parser("vdt", help="tensorize a PPM image (or invert with --inverse)")
    vdt_cmd.add_argument("source", type=Path)
    vdt_cmd.add_argument("--m", required=True, help="row block factors, e.g. 2,2,2 or 2*8")
    vdt_cmd.add_argument("--n", required=True, help="column block factors")
    vdt_cmd.add_argument("--inverse", action="store_true", help="TRT1 tensor back to PPM")
    vdt_cmd.add_argument("-o", "--output", type=Path, required=True)
    return parser


def cmd_run(args) -> int:
    spec = ExperimentSpec.from_file(args.spec)
    outcome = run(spec)
    if outcome.exit_code == EXIT_OK:
        print(f"{len(outcome.rows)} repetitions written to {outcome.output_dir}")
    return outcome.exit_code


def cmd_sweep(args) -> int:
    table = sweep(SweepSpec.from_file(args.spec))
    print(table.to_string(index=False))
    return EXIT_OK


def cmd_metrics(args) -> int:
    report = evaluate(
        load_tensor(args.recovered), load_tensor(args.truth), sr=args.sr, image=args.image
    )
    line = format_kv_record(report.record())
    if args.output:
        args.output.write_text(line + "\n")
    print(line)
    return EXIT_OK


def cmd_vdt(args) -> int:
    m, n = parse_factors(args.m), parse_factors(args.n)
    if args.inverse:
        save_ppm(vdt_inverse(load_tensor(args.source), m, n), args.output)
    else:
        tensor = vdt_forward(load_ppm(args.source), m, n)
        save_tensor(tensor, args.output)
        print(f"dims {'x'.join(str(d) for d in tensor.dims)} -> {args.output}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "metrics": cmd_metrics, "vdt": cmd_vdt}


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point"""
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level, args.json_logs)
    try:
        return COMMANDS[args.command](args)
    except DivergenceError as e:
        logger.error("diverged", iteration=e.iteration, error=str(e))
        return EXIT_DIVERGED
    except (OSError, FormatError, SpecError) as e:
        logger.error("io_or_spec_error", error=str(e))
        return EXIT_IO
    except TensorRecoveryError as e:
        logger.error("invalid_input", error=str(e))
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

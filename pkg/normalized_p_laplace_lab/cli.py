import argparse
from enum import IntEnum
import logging
import pathlib
import time
import typing

from pydantic import ValidationError
import yaml

from normalized_p_laplace_lab import config, configure_logging
from normalized_p_laplace_lab.errors import LabError
from normalized_p_laplace_lab.experiments import (
    RunResult,
    run_calibrate,
    run_mms,
    run_solve,
    run_sweep,
    run_verify,
)
from normalized_p_laplace_lab.reports import emit_report, write_manifest, write_solution
from normalized_p_laplace_lab.run_config import ReportFormat, RunConfig

logger = logging.getLogger(__name__)

COMMANDS = ("solve", "verify", "sweep", "mms", "calibrate")


class ExitStatus(IntEnum):
    passed = 0
    execution_error = 1
    check_failed = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="normalized_p_laplace_lab",
        description="Solve the regularized normalized p-Laplace flow and check its estimates",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        sub = subparsers.add_parser(command)
        sub.add_argument("--config", required=True, type=pathlib.Path, help="YAML run config")
        sub.add_argument("--out", type=pathlib.Path, help="output directory, overrides output.directory")
        sub.add_argument("--format", choices=[f.value for f in ReportFormat], help="report format")
        sub.add_argument("--levels", type=int, default=None, help="refinement depth")
        sub.add_argument("--jobs", type=int, default=config.DEFAULT_JOBS, help="parallel solves")
    return parser


def _execute(
    command: str, run_config: RunConfig, levels: int | None, jobs: int
) -> RunResult:
    if command == "solve":
        return run_solve(run_config)
    if command == "verify":
        return run_verify(run_config, levels=levels or 1, jobs=jobs)
    if command == "sweep":
        return run_sweep(run_config, jobs=jobs)
    if command == "calibrate":
        return run_calibrate(run_config, levels=levels or 1, jobs=jobs)
    return run_mms(run_config, levels=levels or 3, jobs=jobs)


def run(
    run_config: RunConfig,
    command: str,
    out: pathlib.Path | None = None,
    format: ReportFormat | None = None,
    levels: int | None = None,
    jobs: int = 1,
) -> ExitStatus:
    directory = out or pathlib.Path(run_config.output.directory)
    report_format = ReportFormat(format or run_config.output.format)

    start_time = time.time()
    try:
        result = _execute(command, run_config, levels, jobs)
    except LabError as e:
        logger.error(f"{command} failed: {e}")
        return ExitStatus.execution_error

    try:
        if result.solution is not None:
            write_solution(directory, result.solution)
        if command != "solve" or result.reports:
            emit_report(result.reports, report_format, directory)
        write_manifest(
            directory, run_config, command, result.grids, result.timings, result.failure
        )
    except LabError as e:
        logger.error(f"Writing results failed: {e}")
        return ExitStatus.execution_error

    duration = time.time() - start_time
    failed = [report.name for report in result.reports if not report.passed]
    logger.info(
        f"{command} duration:{duration:.2f}s reports:{len(result.reports)} failed:{failed}"
    )
    if result.failure is not None:
        logger.error(f"{command} aborted: {result.failure}")
        return ExitStatus.execution_error
    return ExitStatus.check_failed if failed else ExitStatus.passed


def main(argv: typing.Sequence[str] | None = None) -> int:
    configure_logging(config.LOG_LEVEL)
    args = build_parser().parse_args(argv)

    try:
        run_config = RunConfig.from_file(args.config)
    except ValidationError as e:
        logger.error(f"Invalid config {args.config}:\n{e}")
        return ExitStatus.execution_error
    except (OSError, ValueError, yaml.YAMLError) as e:
        logger.error(f"Cannot read config {args.config}: {e}")
        return ExitStatus.execution_error

    return run(
        run_config,
        args.command,
        out=args.out,
        format=ReportFormat(args.format) if args.format else None,
        levels=args.levels,
        jobs=args.jobs,
    )

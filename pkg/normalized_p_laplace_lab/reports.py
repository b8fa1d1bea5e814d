import csv
import json
import logging
import math
import pathlib
import typing

import numpy as np
from slugify import slugify

from normalized_p_laplace_lab import __version__
from normalized_p_laplace_lab.errors import ReportWriteError
from normalized_p_laplace_lab.grid import SpaceTimeField, SpaceTimeGrid
from normalized_p_laplace_lab.run_config import ReportFormat, RunConfig
from normalized_p_laplace_lab.verifier import EstimateReport

logger = logging.getLogger(__name__)

CSV_COLUMNS = (
    "series_id",
    "name",
    "kind",
    "level",
    "x",
    "y",
    "h",
    "dt",
    "epsilon",
    "lhs",
    "rhs",
    "margin",
    "tolerance",
    "pass",
    "p",
    "cutoff_id",
)


def version_string(run_config: RunConfig) -> str:
    return f"{__version__}+g{run_config.digest()}"


def _number(value: typing.Any) -> typing.Any:
    # repr keeps every digit of a double
    return repr(float(value)) if isinstance(value, (float, np.floating)) else value


def _json_ready(value: typing.Any) -> typing.Any:
    # JSON has no Infinity or NaN
    if isinstance(value, dict):
        return {key: _json_ready(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_ready(item) for item in value]
    if isinstance(value, (float, np.floating)) and not math.isfinite(value):
        return None
    return value


def _series_id(index: int, report: EstimateReport) -> str:
    return slugify(f"{index:02d}-{report.name}")


def _csv_rows(reports: typing.Sequence[EstimateReport]) -> typing.Iterator[dict]:
    for index, report in enumerate(reports):
        common = {
            "series_id": _series_id(index, report),
            "name": report.name,
            "kind": report.kind.value,
            "lhs": _number(report.lhs),
            "rhs": _number(report.rhs),
            "margin": _number(report.margin),
            "tolerance": _number(report.tolerance),
            "pass": report.passed,
            "p": _number(report.context.p),
            "cutoff_id": report.context.cutoff_id or "",
        }
        if not report.history:
            yield {
                **common,
                "level": "",
                "x": "",
                "y": "",
                "h": _number(report.context.h),
                "dt": _number(report.context.dt),
                "epsilon": _number(report.context.epsilon),
            }
        for level_index, level in enumerate(report.history):
            yield {
                **common,
                "level": level_index,
                "x": _number(level.x),
                "y": _number(level.y),
                "h": _number(level.h),
                "dt": _number(level.dt),
                "epsilon": _number(level.epsilon),
            }


def _write_plot_data(directory: pathlib.Path, index: int, report: EstimateReport) -> pathlib.Path:
    path = directory / f"{_series_id(index, report)}.dat"
    lines = [f"# {report.x_label} value"]
    lines.extend(f"{_number(level.x)} {_number(level.y)}" for level in report.history)
    path.write_text("\n".join(lines) + "\n")
    return path


def emit_report(
    reports: typing.Sequence[EstimateReport],
    format: ReportFormat,
    directory: str | pathlib.Path,
) -> list[pathlib.Path]:
    """Write the report container plus one plot-ready file per report with a history"""
    directory = pathlib.Path(directory)
    written = []
    try:
        directory.mkdir(parents=True, exist_ok=True)
        if ReportFormat(format) == ReportFormat.json:
            path = directory / "reports.json"
            path.write_text(
                json.dumps(
                    _json_ready({"reports": [report.serialize() for report in reports]}),
                    indent=2,
                    allow_nan=False,
                )
            )
        else:
            path = directory / "reports.csv"
            with path.open("w", newline="") as f:
                writer = csv.DictWriter(f, fieldnames=CSV_COLUMNS)
                writer.writeheader()
                writer.writerows(_csv_rows(reports))
        written.append(path)

        for index, report in enumerate(reports):
            if report.history:
                written.append(_write_plot_data(directory, index, report))
    except OSError as e:
        raise ReportWriteError(f"Cannot write reports to {directory}: {e}") from e

    logger.info(f"Wrote {len(reports)} reports to {directory}")
    return written


def write_manifest(
    directory: str | pathlib.Path,
    run_config: RunConfig,
    command: str,
    grids: typing.Sequence[SpaceTimeGrid],
    timings: dict[str, float],
    failure: str | None = None,
) -> pathlib.Path:
    path = pathlib.Path(directory) / "manifest.json"
    manifest = {
        "version": version_string(run_config),
        "command": command,
        "config": json.loads(run_config.json()),
        "grids": [
            {"level": level, **grid.describe()} for level, grid in enumerate(grids)
        ],
        "timings": timings,
        "failure": failure,
    }
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(_json_ready(manifest), indent=2, allow_nan=False))
    except OSError as e:
        raise ReportWriteError(f"Cannot write manifest to {path}: {e}") from e
    return path


def write_solution(directory: str | pathlib.Path, solution: SpaceTimeField) -> pathlib.Path:
    path = pathlib.Path(directory) / "solution.npz"
    grid = solution.grid
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savez(
            path,
            values=solution.values,
            times=grid.times,
            **{f"axis_{i}": grid.axis(i) for i in range(grid.dim)},
        )
    except OSError as e:
        raise ReportWriteError(f"Cannot write solution to {path}: {e}") from e
    logger.info(f"Wrote solution {grid.shape} to {path}")
    return path

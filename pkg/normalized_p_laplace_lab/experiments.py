from concurrent.futures import ProcessPoolExecutor
import dataclasses
import logging
import math
import time
import typing

import numpy as np

from normalized_p_laplace_lab import config as lab_config
from normalized_p_laplace_lab.calculus import CutoffFunction, GradVMode
from normalized_p_laplace_lab.errors import BlowUpError, ParamsError
from normalized_p_laplace_lab.grid import Params, SpaceTimeField, SpaceTimeGrid, build_grid
from normalized_p_laplace_lab.profiles import build_problem, problem_from_reference
from normalized_p_laplace_lab.references import ReferenceSolution, reference_by_name
from normalized_p_laplace_lab.run_config import (
    CALIBRATION_VERIFIERS,
    SWEEP_VERIFIERS,
    VERIFY_VERIFIERS,
    RunConfig,
    VerifierName,
)
from normalized_p_laplace_lab.solver import ProblemData, solve
from normalized_p_laplace_lab import verifier

logger = logging.getLogger(__name__)

# shrink factor per halving of h and dt demanded from second-order quantities
SECOND_ORDER_MIN_RATIO = 3.2

REFINEMENT_MIN_RATIO: dict[VerifierName, float] = {
    VerifierName.fundamental_identity: 1.0,
    # first halving from 33 nodes is still pre-asymptotic for the bump cutoff
    VerifierName.miranda_talenti: 2.3,
    VerifierName.weak_time_derivative: 2.8,
    VerifierName.veps_evolution: 1.0,
    VerifierName.time_chain_rule: 1.0,
}

# errors below this are rounding, not discretization
EXACT_REPRODUCTION_FLOOR = 1e-10

Case = tuple[int, float | None]


@dataclasses.dataclass
class RunResult:
    reports: list[verifier.EstimateReport] = dataclasses.field(default_factory=list)
    grids: list[SpaceTimeGrid] = dataclasses.field(default_factory=list)
    timings: dict[str, float] = dataclasses.field(default_factory=dict)
    solution: SpaceTimeField | None = None
    failure: str | None = None

    @property
    def passed(self) -> bool:
        return self.failure is None and all(report.passed for report in self.reports)


def build_params(run_config: RunConfig, epsilon: float | None = None) -> Params:
    return run_config.params.build(epsilon)


def build_grid_for(run_config: RunConfig, level: int = 0) -> SpaceTimeGrid:
    spec = run_config.grid
    grid = build_grid(spec.box_lo, spec.box_hi, spec.nx, run_config.params.T, spec.nt)
    for _ in range(level):
        grid = grid.refined()
    return grid


def build_cutoff(run_config: RunConfig, grid: SpaceTimeGrid) -> CutoffFunction | None:
    spec = run_config.cutoff
    if spec is None:
        return None
    cutoff = CutoffFunction(
        space_center=tuple(spec.center),
        space_radius=spec.radius,
        time_center=spec.time_center,
        time_radius=spec.time_radius,
    )
    cutoff.require_inside(grid, lab_config.EVALUATION_MARGIN_CELLS)
    return cutoff


def build_reference(run_config: RunConfig, params: Params) -> ReferenceSolution | None:
    if run_config.data.reference is None:
        return None
    return reference_by_name(run_config.data.reference, params)


def build_problem_for(
    run_config: RunConfig, params: Params, grid: SpaceTimeGrid
) -> ProblemData:
    reference = build_reference(run_config, params)
    if reference is not None:
        return problem_from_reference(reference, params, grid)
    return build_problem(
        typing.cast(str, run_config.data.profile), params, grid, run_config.data.amplitude
    )


def solve_case(run_config: RunConfig, case: Case) -> tuple[Params, SpaceTimeField]:
    """Solve one (refinement level, eps) case; module level so worker processes can pickle it"""
    level, epsilon = case
    params = build_params(run_config, epsilon)
    grid = build_grid_for(run_config, level)
    return params, solve(build_problem_for(run_config, params, grid), grid)


def solve_many(
    run_config: RunConfig, cases: typing.Sequence[Case], jobs: int = 1
) -> list[tuple[Params, SpaceTimeField]]:
    """Results in submission order, whatever the number of workers"""
    if jobs <= 1 or len(cases) <= 1:
        return [solve_case(run_config, case) for case in cases]
    with ProcessPoolExecutor(max_workers=jobs) as executor:
        return list(executor.map(solve_case, [run_config] * len(cases), cases))


def require_runnable(
    run_config: RunConfig, command: str, runnable: typing.AbstractSet[VerifierName]
) -> None:
    unsupported = [name.value for name in run_config.verifiers if name not in runnable]
    if unsupported:
        raise ParamsError(f"The {command} command cannot run verifiers {unsupported}")


def _single_level_reports(
    run_config: RunConfig,
    params: Params,
    solution: SpaceTimeField,
    cutoff: CutoffFunction | None,
) -> typing.Iterator[tuple[VerifierName, verifier.EstimateReport]]:
    checks: dict[VerifierName, typing.Callable[[], verifier.EstimateReport]] = {
        VerifierName.max_principle: lambda: verifier.check_max_principle(solution, params),
        VerifierName.veps_evolution: lambda: verifier.check_veps_evolution(solution, params),
        VerifierName.miranda_talenti: lambda: verifier.check_miranda_talenti(
            solution, cutoff, params
        ),
        VerifierName.fundamental_identity: lambda: verifier.check_fundamental_identity(
            solution, cutoff, params
        ),
        VerifierName.time_derivative_bound: lambda: verifier.check_time_derivative_bound(
            solution, cutoff, params
        ),
        VerifierName.weighted_time_derivative_bound: (
            lambda: verifier.check_weighted_time_derivative_bound(solution, cutoff, params)
        ),
        VerifierName.weak_time_derivative: lambda: verifier.check_weak_time_derivative(
            solution, cutoff, params
        ),
        VerifierName.elementary_inequality: lambda: verifier.check_elementary_inequality(
            solution, params, GradVMode.chain_rule
        ),
        VerifierName.ellipticity: lambda: verifier.check_ellipticity(solution, params),
        VerifierName.time_chain_rule: lambda: verifier.check_time_chain_rule(solution, params),
        VerifierName.gradient_interior_bound: lambda: verifier.check_gradient_interior_bound(
            [(params, solution)], run_config.sweep.margins
        ),
    }
    for name in run_config.verifiers:
        yield name, checks[name]()


def _timed(result: RunResult, label: str, start: float) -> None:
    result.timings[label] = time.monotonic() - start
    logger.debug(f"{label} took {result.timings[label]:.2f}s")


def run_solve(run_config: RunConfig) -> RunResult:
    if run_config.verifiers:
        logger.warning(
            f"solve runs no checks, ignoring verifiers {[name.value for name in run_config.verifiers]}"
        )
    result = RunResult()
    start = time.monotonic()
    try:
        _, solution = solve_case(run_config, (0, None))
    except BlowUpError as e:
        result.failure = str(e)
        return result
    finally:
        _timed(result, "solve", start)
    result.grids.append(solution.grid)
    result.solution = solution
    return result


def run_verify(run_config: RunConfig, levels: int = 1, jobs: int = 1) -> RunResult:
    """Single-level checks on the base grid, refinement trends over `levels` grids"""
    require_runnable(run_config, "verify", VERIFY_VERIFIERS)
    result = RunResult()
    start = time.monotonic()
    try:
        params, solution = solve_case(run_config, (0, None))
    except BlowUpError as e:
        result.failure = str(e)
        return result
    _timed(result, "solve level 0", start)
    result.grids.append(solution.grid)

    cutoff = build_cutoff(run_config, solution.grid)
    start = time.monotonic()
    result.reports.extend(
        report for _, report in _single_level_reports(run_config, params, solution, cutoff)
    )
    _timed(result, "checks level 0", start)

    refinable = [name for name in run_config.verifiers if name in REFINEMENT_MIN_RATIO]
    if levels < 2 or not refinable:
        return result

    start = time.monotonic()
    try:
        finer = solve_many(run_config, [(level, None) for level in range(1, levels)], jobs)
    except BlowUpError as e:
        logger.error(f"Refinement solve failed: {e}")
        result.failure = str(e)
        return result
    _timed(result, "refinement solves", start)

    runs = [(params, solution)] + finer
    result.grids.extend(run.grid for _, run in finer)
    series: dict[VerifierName, list[verifier.RefinementLevel]] = {name: [] for name in refinable}
    for run_params, run in runs:
        run_cutoff = build_cutoff(run_config, run.grid)
        for name, report in _single_level_reports(
            run_config.copy(update={"verifiers": refinable}), run_params, run, run_cutoff
        ):
            series[name].append(
                verifier.RefinementLevel(
                    x=run.grid.h_max,
                    y=report.margin,
                    h=run.grid.h_max,
                    dt=run.grid.dt,
                    epsilon=run_params.epsilon,
                )
            )

    context = verifier.ReportContext.of(params, solution.grid, cutoff)
    for name in refinable:
        result.reports.append(
            verifier.refinement_report(
                f"{name.value}_refinement",
                series[name],
                context,
                min_ratio=REFINEMENT_MIN_RATIO[name],
            )
        )
    return result


def run_sweep(run_config: RunConfig, jobs: int = 1) -> RunResult:
    """Solves over sweep.epsilons on the base grid, then the eps-family checks"""
    result = RunResult()
    epsilons = run_config.sweep.epsilons
    if not epsilons:
        raise ParamsError("sweep.epsilons is empty")
    require_runnable(run_config, "sweep", SWEEP_VERIFIERS)

    start = time.monotonic()
    try:
        runs = solve_many(run_config, [(0, eps) for eps in epsilons], jobs)
    except BlowUpError as e:
        logger.error(f"Sweep solve failed: {e}")
        result.failure = str(e)
        return result
    _timed(result, "sweep solves", start)

    grid = runs[0][1].grid
    result.grids.append(grid)
    selected = list(run_config.verifiers) or [VerifierName.epsilon_convergence]

    cutoff = build_cutoff(run_config, grid)
    for name in selected:
        if name == VerifierName.epsilon_convergence:
            report = verifier.epsilon_convergence(runs)
        elif name == VerifierName.second_derivative_bound:
            report = verifier.check_second_derivative_bound(
                runs,
                typing.cast(CutoffFunction, cutoff),
                assertion=run_config.sweep.assertion_mode,
            )
        else:
            report = verifier.check_gradient_interior_bound(runs, run_config.sweep.margins)
        result.reports.append(report)
    return result


def _error_against(reference: ReferenceSolution, solution: SpaceTimeField) -> float:
    exact = reference.sample(solution.grid).values
    return float(np.max(np.abs(solution.values - exact)))


def run_mms(run_config: RunConfig, levels: int = 3, jobs: int = 1) -> RunResult:
    """Sup-norm error table against the exact or manufactured reference"""
    result = RunResult()
    params = build_params(run_config)
    reference = build_reference(run_config, params)
    if reference is None:
        raise ParamsError("The mms command needs data.reference")
    require_runnable(run_config, "mms", frozenset())

    start = time.monotonic()
    try:
        runs = solve_many(run_config, [(level, None) for level in range(max(levels, 1))], jobs)
    except BlowUpError as e:
        logger.error(f"Convergence solve failed: {e}")
        result.failure = str(e)
        return result
    _timed(result, "convergence solves", start)

    history = []
    for run_params, run in runs:
        error = _error_against(reference, run)
        logger.info(f"h={run.grid.h_max:.4g} dt={run.grid.dt:.4g} sup error={error:.6g}")
        result.grids.append(run.grid)
        history.append(
            verifier.RefinementLevel(
                x=run.grid.h_max, y=error, h=run.grid.h_max, dt=run.grid.dt, epsilon=run_params.epsilon
            )
        )

    context = verifier.ReportContext.of(params, runs[0][1].grid)
    errors = [level.y for level in history]
    if len(history) < 2 or max(errors) <= EXACT_REPRODUCTION_FLOOR:
        report = verifier.EstimateReport(
            name=f"{reference.name}_reproduction",
            kind=verifier.ReportKind.identity,
            lhs=max(errors),
            rhs=0.0,
            residual=max(errors),
            tolerance=EXACT_REPRODUCTION_FLOOR,
            context=context,
            history=tuple(history),
        )
    else:
        report = verifier.refinement_report(
            f"{reference.name}_convergence",
            history,
            context,
            min_ratio=SECOND_ORDER_MIN_RATIO,
        )
        report.details["observed_orders"] = [
            math.log2(coarse / fine) if coarse > 0 and fine > 0 else None
            for coarse, fine in zip(errors, errors[1:])
        ]
    result.reports.append(report)
    return result


def run_calibrate(run_config: RunConfig, levels: int = 1, jobs: int = 1) -> RunResult:
    """Measure C_tol on the heat flow and check the frozen config value still covers it"""
    if run_config.params.p != 2:
        raise ParamsError(
            f"Tolerance calibration runs on the heat flow p=2, got p={run_config.params.p}"
        )
    if run_config.cutoff is None:
        raise ParamsError("Tolerance calibration needs a 'cutoff' section")

    result = RunResult()
    start = time.monotonic()
    try:
        runs = solve_many(run_config, [(level, None) for level in range(max(levels, 1))], jobs)
    except BlowUpError as e:
        logger.error(f"Calibration solve failed: {e}")
        result.failure = str(e)
        return result
    _timed(result, "calibration solves", start)

    identity_checks = run_config.copy(update={"verifiers": list(CALIBRATION_VERIFIERS)})
    slopes: dict[str, list[float]] = {name.value: [] for name in CALIBRATION_VERIFIERS}
    for params, run in runs:
        result.grids.append(run.grid)
        cutoff = build_cutoff(run_config, run.grid)
        for name, report in _single_level_reports(identity_checks, params, run, cutoff):
            slopes[name.value].append(report.margin / run.grid.h_max)

    measured = lab_config.CALIBRATION_SAFETY * max(max(values) for values in slopes.values())
    logger.info(
        f"Calibrated tolerance constant {measured:.4g}, "
        f"frozen value {lab_config.TOLERANCE_CONSTANT:g}"
    )
    params, base = runs[0]
    result.reports.append(
        verifier.EstimateReport(
            name="tolerance_calibration",
            kind=verifier.ReportKind.inequality,
            lhs=measured,
            rhs=lab_config.TOLERANCE_CONSTANT,
            tolerance=0.0,
            context=verifier.ReportContext.of(params, base.grid, build_cutoff(run_config, base.grid)),
            details={"slopes": slopes, "safety": lab_config.CALIBRATION_SAFETY},
        )
    )
    return result

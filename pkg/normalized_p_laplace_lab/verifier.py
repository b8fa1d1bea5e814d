import dataclasses
from enum import Enum
import logging
import math
import typing

import numpy as np

from normalized_p_laplace_lab import config
from normalized_p_laplace_lab.calculus import (
    CutoffFunction,
    DerivativeBundle,
    GradVMode,
    compute_bundle,
    cutoff_on_grid,
    ellipticity_bounds,
    gradient_array,
    hessian_array,
    laplacian_from_hessian,
    p_laplacian_from_derivatives,
)
from normalized_p_laplace_lab.errors import (
    EstimateScopeError,
    GridError,
    IncompatibleDataError,
    RegionError,
)
from normalized_p_laplace_lab.grid import (
    Params,
    Region,
    SpaceTimeField,
    SpaceTimeGrid,
    quadrature,
    spatial_margin_mask,
)

logger = logging.getLogger(__name__)

SECOND_DERIVATIVE_WINDOW = (6 / 5, 14 / 5)

# contraction limit for sequences that must strictly decrease
_STRICT_DECREASE = 1 + 1e-9

# rounding slack for pointwise inequalities that hold exactly in exact arithmetic
_ROUNDING = 1e-12

# identity scales below this turn relative residuals into absolute ones
_SCALE_FLOOR = 1e-8


class ReportKind(str, Enum):
    inequality = "inequality"
    identity = "identity"
    trend = "trend"
    exploration = "exploration"


@dataclasses.dataclass(frozen=True)
class ReportContext:
    p: float
    epsilon: float
    h: float
    dt: float
    cutoff_id: str | None = None

    @classmethod
    def of(
        cls,
        params: Params,
        grid: SpaceTimeGrid,
        cutoff: CutoffFunction | None = None,
    ) -> "ReportContext":
        return cls(
            p=params.p,
            epsilon=params.epsilon,
            h=grid.h_max,
            dt=grid.dt,
            cutoff_id=cutoff.identifier if cutoff else None,
        )


@dataclasses.dataclass(frozen=True)
class RefinementLevel:
    """One point of a refinement or eps sequence, x is h or eps"""

    x: float
    y: float
    h: float
    dt: float
    epsilon: float


@dataclasses.dataclass(frozen=True)
class EstimateReport:
    name: str
    kind: ReportKind
    lhs: float
    rhs: float
    tolerance: float
    context: ReportContext
    residual: float | None = None
    history: tuple[RefinementLevel, ...] = ()
    x_label: str = "h"
    details: dict[str, typing.Any] = dataclasses.field(default_factory=dict, hash=False)

    @property
    def margin(self) -> float:
        if self.kind == ReportKind.identity:
            return float(abs(self._residual))
        return float(self.rhs - self.lhs)

    @property
    def _residual(self) -> float:
        return self.lhs - self.rhs if self.residual is None else self.residual

    @property
    def passed(self) -> bool:
        if self.kind == ReportKind.exploration:
            return True
        if self.kind == ReportKind.identity:
            return bool(abs(self._residual) <= self.tolerance)
        return bool(self.lhs <= self.rhs + self.tolerance)

    def serialize(self) -> dict[str, typing.Any]:
        return {
            "name": self.name,
            "kind": self.kind.value,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "margin": self.margin,
            "tolerance": self.tolerance,
            "residual": self.residual,
            "pass": self.passed,
            "context": dataclasses.asdict(self.context),
            "history": [dataclasses.asdict(level) for level in self.history],
            "x_label": self.x_label,
            "details": self.details,
        }

    @classmethod
    def deserialize(cls, data: dict[str, typing.Any]) -> "EstimateReport":
        try:
            return cls(
                name=data["name"],
                kind=ReportKind(data["kind"]),
                lhs=float(data["lhs"]),
                rhs=float(data["rhs"]),
                tolerance=float(data["tolerance"]),
                context=ReportContext(**data["context"]),
                residual=data.get("residual"),
                history=tuple(RefinementLevel(**level) for level in data.get("history", [])),
                x_label=data.get("x_label", "h"),
                details=dict(data.get("details", {})),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise cls.DeserializeError() from e

    class DeserializeError(Exception):
        pass


@dataclasses.dataclass(frozen=True)
class IdentityLedger:
    term_I: float
    term_II: float
    term_III: float
    term_IV: float
    term_V: float

    @property
    def residual(self) -> float:
        return (self.term_I + self.term_II) - (self.term_III + self.term_IV + self.term_V)

    @property
    def relative_residual(self) -> float:
        return abs(self.residual) / max(abs(self.term_I), _SCALE_FLOOR)

    def serialize(self) -> dict[str, float]:
        return {**dataclasses.asdict(self), "residual": self.residual}


def tolerance(h: float) -> float:
    return config.TOLERANCE_CONSTANT * h


def _log_report(report: EstimateReport) -> EstimateReport:
    logger.info(
        f"{report.name}: lhs={report.lhs:.6g} rhs={report.rhs:.6g} "
        f"margin={report.margin:.3g} pass={report.passed}"
    )
    return report


def refinement_report(
    name: str,
    levels: typing.Sequence[RefinementLevel],
    context: ReportContext,
    min_ratio: float = 1.0,
    x_label: str = "h",
) -> EstimateReport:
    """Trend check: each value must shrink at least by `min_ratio` from one level to the next"""
    if len(levels) < 2:
        raise IncompatibleDataError(f"{name} needs at least 2 levels, got {len(levels)}")

    contractions = []
    for coarse, fine in zip(levels, levels[1:]):
        a, b = abs(coarse.y), abs(fine.y)
        if a == 0:
            contractions.append(0.0 if b == 0 else math.inf)
        else:
            contractions.append(b / a)

    return _log_report(
        EstimateReport(
            name=name,
            kind=ReportKind.trend,
            lhs=max(contractions),
            rhs=1 / min_ratio,
            tolerance=0.0,
            context=context,
            history=tuple(levels),
            x_label=x_label,
            details={
                "ratios": [1 / c if c else None for c in contractions],
                "min_ratio": min_ratio,
            },
        )
    )


def _bundle(
    solution: SpaceTimeField, epsilon: float, mode: GradVMode = GradVMode.chain_rule
) -> DerivativeBundle:
    return compute_bundle(solution.values, solution.grid.h, epsilon, mode)


def _restrict(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return np.where(mask, values, 0.0)


def _support(xi: np.ndarray) -> np.ndarray:
    return xi > 0


def _l2_norm(values: np.ndarray, grid: SpaceTimeGrid, region: Region) -> float:
    return math.sqrt(quadrature(values**2, grid.spacings, region))


def _interior_cutoff(cutoff: CutoffFunction, grid: SpaceTimeGrid):
    cutoff.require_inside(grid, config.EVALUATION_MARGIN_CELLS)
    return cutoff_on_grid(cutoff, grid)


def check_max_principle(solution: SpaceTimeField, params: Params) -> EstimateReport:
    """Interior sup of V^eps against its sup next to the parabolic boundary"""
    grid = solution.grid
    V = _bundle(solution, params.epsilon).V_eps

    evaluable = spatial_margin_mask(grid.nx, 1)
    interior = spatial_margin_mask(grid.nx, 2)
    if not interior.any():
        raise GridError(
            f"Grid {grid.nx} is too coarse to evaluate V^eps away from the boundary ring"
        )
    ring = evaluable & ~interior

    boundary_max = max(float(np.max(V[0][evaluable])), float(np.max(V[1:][:, ring])))
    interior_max = float(np.max(V[1:][:, interior]))

    return _log_report(
        EstimateReport(
            name="max_principle",
            kind=ReportKind.inequality,
            lhs=interior_max,
            rhs=boundary_max,
            tolerance=tolerance(grid.h_max),
            context=ReportContext.of(params, grid),
        )
    )


def check_veps_evolution(solution: SpaceTimeField, params: Params) -> EstimateReport:
    """L2 residual of the parabolic equation satisfied by V^eps"""
    grid = solution.grid
    if grid.nt < 3:
        raise GridError("The V^eps equation needs at least 3 time slices")
    p = params.p
    bundle = _bundle(solution, params.epsilon)
    V = bundle.V_eps
    grad_u = bundle.grad
    grad_V = gradient_array(V, grid.h)
    hess_V = hessian_array(V, grid.h)

    V_t = np.gradient(V, grid.dt, axis=0)
    rhs = (
        laplacian_from_hessian(hess_V)
        - 2 * bundle.hess_norm_sq
        - (p - 2) / V**2 * np.sum(grad_u * grad_V, axis=0) ** 2
        + (p - 2)
        / V
        * (
            0.5 * np.sum(grad_V**2, axis=0)
            + np.einsum("i...,ij...,j...->...", grad_u, hess_V, grad_u)
        )
    )

    region = grid.interior_region(margin_cells=2, time_margin=1)
    absolute = _l2_norm(V_t - rhs, grid, region)
    scale = _l2_norm(V_t, grid, region)
    relative = absolute / max(scale, _SCALE_FLOOR)

    return _log_report(
        EstimateReport(
            name="veps_evolution",
            kind=ReportKind.identity,
            lhs=absolute,
            rhs=0.0,
            residual=relative,
            tolerance=tolerance(grid.h_max),
            context=ReportContext.of(params, grid),
            details={"V_t_norm": scale, "absolute_residual": absolute},
        )
    )


def _distance_box_mask(grid: SpaceTimeGrid, delta: float) -> np.ndarray:
    """Nodes of D_delta: the box shrunk by delta in space, with t >= delta"""
    space = np.ones(grid.nx, dtype=bool)
    for coordinate, lo, hi in zip(grid.mesh, grid.box_lo, grid.box_hi):
        space &= (coordinate >= lo + delta) & (coordinate <= hi - delta)
    space &= spatial_margin_mask(grid.nx, 1)
    times = grid.times >= delta
    return times.reshape((grid.nt,) + (1,) * grid.dim) & space


def check_gradient_interior_bound(
    solutions: typing.Sequence[tuple[Params, SpaceTimeField]],
    margins: typing.Sequence[float],
) -> EstimateReport:
    """Implied constant of sup_D |grad u| <= C ||u||_inf (1 + dist(D)^-2) per sub-box D"""
    margins = sorted(set(margins), reverse=True)
    if any(not delta > 0 for delta in margins):
        raise RegionError(f"Sub-box distances must be positive, got {margins}")
    if len(margins) < 2:
        raise RegionError("The gradient bound needs at least 2 distinct sub-box distances")
    if not solutions:
        raise IncompatibleDataError("The gradient bound needs at least one solution")

    constants: list[list[float]] = []
    for params, solution in solutions:
        grid = solution.grid
        magnitude = np.sqrt(_bundle(solution, params.epsilon).v_eps)
        sup_u = float(np.max(np.abs(solution.values)))
        row = []
        for delta in margins:
            mask = _distance_box_mask(grid, delta)
            if not mask.any():
                raise RegionError(f"Sub-box at distance {delta} contains no nodes")
            sup_grad = float(np.max(magnitude[mask]))
            allowed = sup_u * (1 + delta**-2)
            row.append(sup_grad / allowed if allowed > 0 else 0.0)
        constants.append(row)

    reference = min(row[0] for row in constants)
    observed = max(max(row) for row in constants)
    params, solution = solutions[-1]
    return _log_report(
        EstimateReport(
            name="gradient_interior_bound",
            kind=ReportKind.inequality,
            lhs=observed,
            rhs=config.GRADIENT_STABILITY_FACTOR * reference,
            tolerance=0.0,
            context=ReportContext.of(params, solution.grid),
            details={
                "margins": list(margins),
                "epsilons": [params.epsilon for params, _ in solutions],
                "implied_constants": constants,
            },
        )
    )


def check_miranda_talenti(
    field: SpaceTimeField, cutoff: CutoffFunction, params: Params
) -> EstimateReport:
    """Relative gap between the L2 norms of Delta(xi f) and D^2(xi f)"""
    grid = field.grid
    xi = _interior_cutoff(cutoff, grid).xi
    hess = hessian_array(xi * field.values, grid.h)

    region = grid.interior_region(margin_cells=1)
    laplacian_norm = quadrature(laplacian_from_hessian(hess) ** 2, grid.spacings, region)
    hessian_norm = quadrature(np.sum(hess**2, axis=(0, 1)), grid.spacings, region)
    relative = abs(laplacian_norm - hessian_norm) / max(hessian_norm, np.finfo(float).tiny)

    return _log_report(
        EstimateReport(
            name="miranda_talenti",
            kind=ReportKind.identity,
            lhs=laplacian_norm,
            rhs=hessian_norm,
            residual=relative,
            tolerance=tolerance(grid.h_max),
            context=ReportContext.of(params, grid, cutoff),
        )
    )


def fundamental_identity(
    solution: SpaceTimeField, cutoff: CutoffFunction, params: Params
) -> IdentityLedger:
    """The five integrals obtained by testing the differentiated equation with xi^2 grad u"""
    if params.epsilon == 0:
        raise EstimateScopeError("The fundamental identity holds for the regularized flow, eps > 0")
    grid = solution.grid
    p = params.p
    cut = _interior_cutoff(cutoff, grid)
    bundle = _bundle(solution, params.epsilon, GradVMode.chain_rule)
    support = _support(cut.xi)

    xi, V = cut.xi, bundle.V_eps
    grad_u_grad_v = np.sum(bundle.grad * bundle.grad_v, axis=0)
    grad_u_grad_xi = np.sum(bundle.grad * cut.grad, axis=0)
    grad_v_grad_xi = np.sum(bundle.grad_v * cut.grad, axis=0)

    def integral(integrand: np.ndarray) -> float:
        return quadrature(_restrict(integrand, support), grid.spacings)

    ledger = IdentityLedger(
        term_I=integral(xi**2 * bundle.hess_norm_sq),
        term_II=(p - 2) / 2 * integral(xi**2 * grad_u_grad_v * bundle.lap / V),
        term_III=integral(xi * cut.xi_t * V),
        term_IV=(2 - p) * integral(xi * grad_u_grad_v * grad_u_grad_xi / V),
        term_V=-integral(xi * grad_v_grad_xi),
    )
    logger.debug(f"Fundamental identity ledger: {ledger.serialize()}")
    return ledger


def check_fundamental_identity(
    solution: SpaceTimeField, cutoff: CutoffFunction, params: Params
) -> EstimateReport:
    ledger = fundamental_identity(solution, cutoff, params)
    return _log_report(
        EstimateReport(
            name="fundamental_identity",
            kind=ReportKind.identity,
            lhs=ledger.term_I + ledger.term_II,
            rhs=ledger.term_III + ledger.term_IV + ledger.term_V,
            residual=ledger.relative_residual,
            tolerance=tolerance(solution.grid.h_max),
            context=ReportContext.of(params, solution.grid, cutoff),
            details=ledger.serialize(),
        )
    )


def require_second_derivative_scope(p: float, dim: int, assertion: bool) -> None:
    lo, hi = SECOND_DERIVATIVE_WINDOW
    if assertion and dim >= 2 and not lo < p < hi:
        raise EstimateScopeError(
            f"The second-derivative bound is only asserted for {lo:g} < p < {hi:g} "
            f"in dimension {dim}, got p={p}; use exploration mode"
        )


def _second_derivative_ratio(
    solution: SpaceTimeField, xi: np.ndarray, epsilon: float
) -> float:
    grid = solution.grid
    bundle = _bundle(solution, epsilon)
    support = _support(xi)
    lhs = quadrature(_restrict(xi**2 * bundle.hess_norm_sq, support), grid.spacings)
    majorant = quadrature(
        _restrict(solution.values**2 + bundle.v_eps, support), grid.spacings
    )
    if majorant == 0:
        return 0.0
    return lhs / majorant


def check_second_derivative_bound(
    sweep: typing.Sequence[tuple[Params, SpaceTimeField]],
    cutoff: CutoffFunction,
    assertion: bool = True,
) -> EstimateReport:
    """No growth of int xi^2 |D^2u|^2 / int_{xi>0} (u^2 + |grad u|^2) as eps decreases"""
    if len(sweep) < 2:
        raise IncompatibleDataError("The second-derivative bound needs at least 2 eps values")
    params, last = sweep[-1]
    require_second_derivative_scope(params.p, params.dim, assertion)
    _check_common_grid(sweep)

    grid = last.grid
    xi = _interior_cutoff(cutoff, grid).xi
    history = tuple(
        RefinementLevel(
            x=params.epsilon,
            y=_second_derivative_ratio(solution, xi, params.epsilon),
            h=grid.h_max,
            dt=grid.dt,
            epsilon=params.epsilon,
        )
        for params, solution in sweep
    )
    ratios = [level.y for level in history]

    return _log_report(
        EstimateReport(
            name="second_derivative_bound",
            kind=ReportKind.inequality if assertion else ReportKind.exploration,
            lhs=ratios[-1],
            rhs=config.BOUNDEDNESS_FACTOR * float(np.median(ratios)),
            tolerance=0.0,
            context=ReportContext.of(params, grid, cutoff),
            history=history,
            x_label="epsilon",
        )
    )


def check_time_derivative_bound(
    solution: SpaceTimeField, cutoff: CutoffFunction, params: Params
) -> EstimateReport:
    """int xi^2 u_t^2 <= 4 sup V^2 (int |grad xi|^2 + 1/p int xi |xi_t|), sup over supp xi"""
    p = params.p
    if not 1 < p < 2:
        raise EstimateScopeError(f"The time-derivative bound covers 1 < p < 2, got p={p}")
    grid = solution.grid
    cut = _interior_cutoff(cutoff, grid)
    support = _support(cut.xi)
    V = _bundle(solution, params.epsilon).V_eps
    u_t = solution.time_derivative()

    sup_V = float(np.max(V[support]))
    lhs = quadrature(cut.xi**2 * u_t**2, grid.spacings)
    rhs = (
        4
        * sup_V**2
        * (
            quadrature(np.sum(cut.grad**2, axis=0), grid.spacings)
            + quadrature(cut.xi * np.abs(cut.xi_t), grid.spacings) / p
        )
    )
    return _log_report(
        EstimateReport(
            name="time_derivative_bound",
            kind=ReportKind.inequality,
            lhs=lhs,
            rhs=rhs,
            tolerance=tolerance(grid.h_max),
            context=ReportContext.of(params, grid, cutoff),
            details={"sup_V": sup_V},
        )
    )


def check_weighted_time_derivative_bound(
    solution: SpaceTimeField, cutoff: CutoffFunction, params: Params
) -> EstimateReport:
    """1/2 int xi^2 V^((p-2)/2) u_t^2 <= 2 int V^(p/2) |grad xi|^2 + 2/p int xi xi_t V^(p/2)"""
    p = params.p
    grid = solution.grid
    cut = _interior_cutoff(cutoff, grid)
    support = _support(cut.xi)
    V = _bundle(solution, params.epsilon).V_eps
    u_t = solution.time_derivative()

    def integral(integrand: np.ndarray) -> float:
        return quadrature(_restrict(integrand, support), grid.spacings)

    with np.errstate(divide="ignore", invalid="ignore"):
        weight = V ** ((p - 2) / 2)
    lhs = 0.5 * integral(cut.xi**2 * weight * u_t**2)
    rhs = 2 * integral(V ** (p / 2) * np.sum(cut.grad**2, axis=0)) + 2 / p * integral(
        cut.xi * cut.xi_t * V ** (p / 2)
    )
    return _log_report(
        EstimateReport(
            name="weighted_time_derivative_bound",
            kind=ReportKind.inequality,
            lhs=lhs,
            rhs=rhs,
            tolerance=tolerance(grid.h_max),
            context=ReportContext.of(params, grid, cutoff),
        )
    )


def operator_field(solution: SpaceTimeField, params: Params) -> np.ndarray:
    """Delta_p^N u on every node where the stencils are available, NaN elsewhere"""
    bundle = _bundle(solution, params.epsilon)
    return p_laplacian_from_derivatives(
        bundle.grad, bundle.hess, params.p, params.epsilon, params.critical_policy
    )


def check_weak_time_derivative(
    solution: SpaceTimeField, test_function: CutoffFunction, params: Params
) -> EstimateReport:
    """int u phi_t against -int phi U with U the operator field"""
    grid = solution.grid
    phi = _interior_cutoff(test_function, grid)
    support = _support(phi.xi)

    lhs = quadrature(solution.values * phi.xi_t, grid.spacings)
    rhs = -quadrature(
        _restrict(phi.xi * operator_field(solution, params), support), grid.spacings
    )
    return _log_report(
        EstimateReport(
            name="weak_time_derivative",
            kind=ReportKind.identity,
            lhs=lhs,
            rhs=rhs,
            residual=lhs - rhs,
            tolerance=tolerance(grid.h_max),
            context=ReportContext.of(params, grid, test_function),
        )
    )


def _check_common_grid(sweep: typing.Sequence[tuple[Params, SpaceTimeField]]) -> None:
    grid = sweep[0][1].grid
    for params, solution in sweep:
        if solution.grid != grid:
            raise IncompatibleDataError(
                f"Solution for eps={params.epsilon} lives on {solution.grid.shape}, expected {grid.shape}"
            )
        if params.with_epsilon(0.0) != sweep[0][0].with_epsilon(0.0):
            raise IncompatibleDataError(
                f"Sweep entries differ in more than eps: {params} vs {sweep[0][0]}"
            )


def epsilon_convergence(
    sweep: typing.Sequence[tuple[Params, SpaceTimeField]],
    region: Region | None = None,
) -> EstimateReport:
    """Sup-norm distance of each run to the smallest-eps run must strictly decrease"""
    if len(sweep) < 3:
        raise IncompatibleDataError(f"eps convergence needs at least 3 runs, got {len(sweep)}")
    _check_common_grid(sweep)
    epsilons = [params.epsilon for params, _ in sweep]
    if any(b >= a for a, b in zip(epsilons, epsilons[1:])):
        raise IncompatibleDataError(f"eps values must strictly decrease, got {epsilons}")

    params, limit = sweep[-1]
    grid = limit.grid
    region = region or grid.interior_region(margin_cells=1)
    region.validate(grid.shape)
    window = region.slices()

    levels = [
        RefinementLevel(
            x=run_params.epsilon,
            y=float(np.max(np.abs(solution.values[window] - limit.values[window]))),
            h=grid.h_max,
            dt=grid.dt,
            epsilon=run_params.epsilon,
        )
        for run_params, solution in sweep[:-1]
    ]
    report = refinement_report(
        "epsilon_convergence",
        levels,
        ReportContext.of(params, grid),
        min_ratio=_STRICT_DECREASE,
        x_label="epsilon",
    )
    distances = [level.y for level in levels]
    report.details["distance_over_epsilon"] = [
        d / eps for d, eps in zip(distances, epsilons)
    ]
    return report


def check_elementary_inequality(
    solution: SpaceTimeField,
    params: Params,
    mode: GradVMode = GradVMode.chain_rule,
) -> EstimateReport:
    """Count nodes violating |grad v|^2 <= 4 |D^2u|^2 v"""
    grid = solution.grid
    bundle = _bundle(solution, params.epsilon, mode)
    lhs = bundle.grad_v_norm_sq
    bound = 4 * bundle.hess_norm_sq * bundle.v_eps
    evaluated = np.isfinite(lhs) & np.isfinite(bound)
    violations = evaluated & (lhs > bound * (1 + _ROUNDING) + np.finfo(float).tiny)

    count = int(np.count_nonzero(evaluated))
    violated = int(np.count_nonzero(violations))
    return _log_report(
        EstimateReport(
            name=f"elementary_inequality_{GradVMode(mode).value}",
            kind=ReportKind.inequality,
            lhs=float(violated),
            rhs=0.0,
            tolerance=0.0,
            context=ReportContext.of(params, grid),
            details={
                "evaluated_nodes": count,
                "fraction_satisfied": 1 - violated / count if count else 1.0,
            },
        )
    )


def check_ellipticity(solution: SpaceTimeField, params: Params) -> EstimateReport:
    """Smallest eigenvalue of I + (p-2) grad u grad u^T / V stays above min(1, p-1)"""
    grid = solution.grid
    smallest, _ = ellipticity_bounds(_bundle(solution, params.epsilon), params.p)
    observed = float(np.nanmin(smallest))
    return _log_report(
        EstimateReport(
            name="ellipticity",
            kind=ReportKind.inequality,
            lhs=min(1.0, params.p - 1),
            rhs=observed,
            tolerance=_ROUNDING,
            context=ReportContext.of(params, grid),
        )
    )


def check_time_chain_rule(solution: SpaceTimeField, params: Params) -> EstimateReport:
    """Relative L2 gap of 1/p d/dt V^(p/2) = V^((p-2)/2) <grad u, grad u_t>"""
    grid = solution.grid
    p = params.p
    bundle = _bundle(solution, params.epsilon)
    V = bundle.V_eps
    grad_u_t = gradient_array(solution.time_derivative(), grid.h)

    with np.errstate(divide="ignore", invalid="ignore"):
        left = np.gradient(V ** (p / 2), grid.dt, axis=0, edge_order=2 if grid.nt > 2 else 1) / p
        right = V ** ((p - 2) / 2) * np.sum(bundle.grad * grad_u_t, axis=0)

    region = grid.interior_region(margin_cells=1)
    gap = _l2_norm(left - right, grid, region)
    scale = _l2_norm(left, grid, region)
    relative = gap / max(scale, np.finfo(float).tiny)
    return _log_report(
        EstimateReport(
            name="time_chain_rule",
            kind=ReportKind.identity,
            lhs=gap,
            rhs=scale,
            residual=relative,
            tolerance=tolerance(grid.h_max),
            context=ReportContext.of(params, grid),
        )
    )

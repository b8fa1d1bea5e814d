import math

import numpy as np
import pytest

from normalized_p_laplace_lab.calculus import CutoffFunction, GradVMode
from normalized_p_laplace_lab.errors import (
    CutoffSupportError,
    EstimateScopeError,
    GridError,
    IncompatibleDataError,
    RegionError,
)
from normalized_p_laplace_lab.grid import (
    CriticalPointPolicy,
    Params,
    SpaceTimeField,
    build_grid,
)
from normalized_p_laplace_lab.references import exact_1d_mode, reference_by_name
from normalized_p_laplace_lab.tests.conftest import centered_cutoff, sample, solve_profile
from normalized_p_laplace_lab.verifier import (
    EstimateReport,
    IdentityLedger,
    RefinementLevel,
    ReportContext,
    ReportKind,
    check_elementary_inequality,
    check_ellipticity,
    check_fundamental_identity,
    check_gradient_interior_bound,
    check_max_principle,
    check_miranda_talenti,
    check_second_derivative_bound,
    check_time_chain_rule,
    check_time_derivative_bound,
    check_veps_evolution,
    check_weak_time_derivative,
    check_weighted_time_derivative_bound,
    epsilon_convergence,
    fundamental_identity,
    refinement_report,
    require_second_derivative_scope,
)


def _levels(values):
    return [RefinementLevel(x=2.0**-k, y=y, h=2.0**-k, dt=0.01, epsilon=0.1) for k, y in enumerate(values)]


def _context():
    return ReportContext(p=1.5, epsilon=0.1, h=0.1, dt=0.01)


def _sweep(name, p, epsilons, grid, policy=CriticalPointPolicy.zero):
    return [solve_profile(name, p, epsilon, grid, policy) for epsilon in epsilons]


# max principle


def test_max_principle_for_affine_field(affine_field, affine_params):
    report = check_max_principle(affine_field, affine_params)
    assert report.passed
    assert report.lhs == pytest.approx(report.rhs)
    assert report.kind == ReportKind.inequality


@pytest.mark.parametrize("p", [1.3, 2.0, 2.5])
@pytest.mark.parametrize("epsilon", [0.1, 0.01])
def test_max_principle_for_decaying_sine(unit_grid_2d, p, epsilon):
    params, solution = solve_profile("sine-product-2d", p, epsilon, unit_grid_2d)
    report = check_max_principle(solution, params)
    assert report.passed
    assert report.context.p == p


@pytest.mark.parametrize("p", [1.3, 2.0, 2.5])
@pytest.mark.parametrize("epsilon", [0.1, 0.01])
def test_max_principle_on_fine_grid(p, epsilon):
    grid = build_grid((0.0, 0.0), (1.0, 1.0), (65, 65), 0.05, 6)
    params, solution = solve_profile("sine-product-2d", p, epsilon, grid)
    assert check_max_principle(solution, params).passed


def test_max_principle_needs_interior_nodes():
    grid = build_grid((0.0, 0.0), (1.0, 1.0), (4, 4), 1.0, 3)
    params = Params(p=2.0, epsilon=0.1, dim=2, horizon_T=1.0)
    with pytest.raises(GridError):
        check_max_principle(SpaceTimeField(grid, np.zeros(grid.shape)), params)


# V^eps equation


def test_veps_equation_vanishes_for_affine_field(affine_field, affine_params):
    report = check_veps_evolution(affine_field, affine_params)
    assert report.residual == pytest.approx(0.0, abs=1e-8)
    assert report.passed


def test_veps_equation_residual_is_relative_to_the_time_derivative(unit_grid_2d):
    params, solution = solve_profile("sine-product-2d", 2.0, 0.1, unit_grid_2d)
    report = check_veps_evolution(solution, params)
    assert report.details["V_t_norm"] > 1
    assert report.residual == pytest.approx(report.details["absolute_residual"] / report.details["V_t_norm"])
    assert report.passed


def test_veps_equation_residual_shrinks_under_refinement(unit_grid_1d):
    residuals = []
    grid = unit_grid_1d
    for _ in range(3):
        params, solution = solve_profile("sine-mode-1d", 1.5, 0.1, grid)
        residuals.append(check_veps_evolution(solution, params).residual)
        grid = grid.refined()
    assert residuals[0] > residuals[1] > residuals[2]


def test_veps_equation_needs_three_slices():
    grid = build_grid((0.0,), (1.0,), (9,), 1.0, 2)
    params = Params(p=2.0, epsilon=0.1, dim=1, horizon_T=1.0)
    with pytest.raises(GridError):
        check_veps_evolution(SpaceTimeField(grid, np.zeros(grid.shape)), params)


# interior gradient bound


def test_gradient_bound_is_stable_in_epsilon():
    grid = build_grid((0.0,), (1.0,), (33,), 0.3, 7)
    sweep = _sweep("sine-mode-1d", 1.5, (0.1, 0.05, 0.025), grid)
    report = check_gradient_interior_bound(sweep, margins=(0.2, 0.1, 0.05))
    assert report.passed
    assert report.details["margins"] == [0.2, 0.1, 0.05]
    assert len(report.details["implied_constants"]) == 3


@pytest.mark.parametrize("margins", [(0.1,), (0.1, 0.1), (0.1, 0.0), (0.1, -0.05)])
def test_gradient_bound_rejects_margins(sine_solution_1d, margins):
    with pytest.raises(RegionError):
        check_gradient_interior_bound([sine_solution_1d], margins)


def test_gradient_bound_rejects_empty_sub_box(sine_solution_1d):
    with pytest.raises(RegionError):
        check_gradient_interior_bound([sine_solution_1d], (0.6, 0.1))


# Miranda-Talenti


def test_miranda_talenti_for_zero_field(unit_grid_2d, cutoff_2d, affine_params):
    field = SpaceTimeField(unit_grid_2d, np.zeros(unit_grid_2d.shape))
    report = check_miranda_talenti(field, cutoff_2d, affine_params)
    assert report.residual == 0.0
    assert report.passed


def test_miranda_talenti_is_trivial_in_one_dimension(sine_solution_1d):
    params, solution = sine_solution_1d
    report = check_miranda_talenti(solution, centered_cutoff(solution.grid), params)
    assert report.residual == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize(
    "profile",
    [lambda x, y: x * y, lambda x, y: x**2 - y**2],
    ids=["product", "saddle"],
)
def test_miranda_talenti_converges(profile):
    residuals = []
    for nx in (65, 129, 257):
        grid = build_grid((0.0, 0.0), (1.0, 1.0), (nx, nx), 1.0, 5)
        field = sample(grid, lambda space, t: profile(*space) + 0 * t)
        params = Params(p=2.0, epsilon=0.1, dim=2, horizon_T=1.0)
        residuals.append(check_miranda_talenti(field, centered_cutoff(grid, radius=0.45), params).residual)
    assert residuals[0] / residuals[1] >= 3.0
    assert residuals[1] / residuals[2] >= 3.0
    assert residuals[2] < 1e-2


def test_miranda_talenti_on_coarse_grids():
    # the first halving from 33 nodes is still pre-asymptotic
    residuals = []
    for nx in (33, 65, 129):
        grid = build_grid((0.0, 0.0), (1.0, 1.0), (nx, nx), 1.0, 5)
        field = sample(grid, lambda space, t: space[0] * space[1] + 0 * t)
        params = Params(p=2.0, epsilon=0.1, dim=2, horizon_T=1.0)
        residuals.append(check_miranda_talenti(field, centered_cutoff(grid, radius=0.3), params).residual)
    assert residuals[0] / residuals[1] >= 2.3
    assert residuals[1] / residuals[2] >= 3.0
    assert residuals[2] < 1.5e-2


def test_miranda_talenti_rejects_cutoff_near_boundary(unit_grid_2d, affine_field, affine_params):
    cutoff = CutoffFunction(space_center=(0.5, 0.5), space_radius=0.45, time_center=0.025, time_radius=0.02)
    with pytest.raises(CutoffSupportError):
        check_miranda_talenti(affine_field, cutoff, affine_params)


# fundamental identity


def test_fundamental_identity_needs_regularization(affine_field, cutoff_2d):
    params = Params(p=1.5, epsilon=0.0, dim=2, horizon_T=0.05)
    with pytest.raises(EstimateScopeError):
        fundamental_identity(affine_field, cutoff_2d, params)


def test_fundamental_identity_for_affine_field(affine_field, cutoff_2d, affine_params):
    ledger = fundamental_identity(affine_field, cutoff_2d, affine_params)
    assert ledger.term_I == pytest.approx(0.0, abs=1e-12)
    assert ledger.residual == pytest.approx(0.0, abs=1e-10)
    assert check_fundamental_identity(affine_field, cutoff_2d, affine_params).passed


def test_fundamental_identity_drops_nonlinear_terms_at_p_two(unit_grid_2d, cutoff_2d):
    params, solution = solve_profile("sine-product-2d", 2.0, 0.05, unit_grid_2d)
    ledger = fundamental_identity(solution, cutoff_2d, params)
    assert ledger.term_II == 0.0
    assert ledger.term_IV == 0.0
    assert ledger.term_I > 0


def test_fundamental_identity_residual_shrinks_under_refinement():
    residuals = []
    for nx, nt in ((17, 21), (33, 41), (65, 81)):
        grid = build_grid((0.0, 0.0), (1.0, 1.0), (nx, nx), 0.1, nt)
        params, solution = solve_profile("sine-product-2d", 1.5, 0.05, grid)
        cutoff = CutoffFunction(space_center=(0.5, 0.5), space_radius=0.35, time_center=0.05, time_radius=0.04)
        report = check_fundamental_identity(solution, cutoff, params)
        assert set(report.details) >= {"term_I", "term_V", "residual"}
        residuals.append(report.residual)
    assert residuals[0] > residuals[1] > residuals[2]


# second derivatives


@pytest.mark.parametrize("p", [1.1, 2.8, 3.0])
def test_second_derivative_scope_in_the_plane(p):
    with pytest.raises(EstimateScopeError):
        require_second_derivative_scope(p, 2, assertion=True)
    require_second_derivative_scope(p, 2, assertion=False)
    require_second_derivative_scope(p, 1, assertion=True)


def test_second_derivative_bound_at_p_two(unit_grid_2d, cutoff_2d):
    sweep = _sweep("sine-product-2d", 2.0, (0.1, 0.05, 0.025), unit_grid_2d)
    report = check_second_derivative_bound(sweep, cutoff_2d)
    assert report.passed
    assert len({level.y for level in report.history}) == 1
    assert report.x_label == "epsilon"


def test_second_derivative_bound_in_one_dimension(unit_grid_1d):
    sweep = _sweep("sine-mode-1d", 1.5, (0.2, 0.1, 0.05), unit_grid_1d)
    report = check_second_derivative_bound(sweep, centered_cutoff(unit_grid_1d))
    assert report.kind == ReportKind.inequality
    assert report.passed


@pytest.mark.parametrize("p", [1.3, 1.5, 2.5])
def test_second_derivative_bound_on_fine_grid(p):
    grid = build_grid((0.0, 0.0), (1.0, 1.0), (65, 65), 0.05, 6)
    sweep = _sweep("sine-product-2d", p, (0.1, 0.05, 0.025, 0.0125), grid)
    report = check_second_derivative_bound(sweep, centered_cutoff(grid))
    assert report.kind == ReportKind.inequality
    assert report.passed


@pytest.mark.parametrize("p", [1.1, 3.5])
def test_second_derivative_bound_in_one_dimension_for_any_p(unit_grid_1d, p):
    sweep = _sweep("sine-mode-1d", p, (0.1, 0.05, 0.025, 0.0125), unit_grid_1d)
    report = check_second_derivative_bound(sweep, centered_cutoff(unit_grid_1d))
    assert len(report.history) == 4
    assert report.passed


def test_second_derivative_exploration_always_passes(unit_grid_2d, cutoff_2d):
    sweep = _sweep("sine-product-2d", 3.5, (0.1, 0.05), unit_grid_2d)
    report = check_second_derivative_bound(sweep, cutoff_2d, assertion=False)
    assert report.kind == ReportKind.exploration
    assert report.passed
    with pytest.raises(EstimateScopeError):
        check_second_derivative_bound(sweep, cutoff_2d)


def test_second_derivative_bound_needs_common_grid(unit_grid_1d):
    coarse = solve_profile("sine-mode-1d", 1.5, 0.1, unit_grid_1d)
    fine = solve_profile("sine-mode-1d", 1.5, 0.05, unit_grid_1d.refined())
    with pytest.raises(IncompatibleDataError):
        check_second_derivative_bound([coarse, fine], centered_cutoff(unit_grid_1d))
    with pytest.raises(IncompatibleDataError):
        check_second_derivative_bound([coarse], centered_cutoff(unit_grid_1d))


# time derivative


@pytest.mark.parametrize("p", [2.0, 2.5])
def test_time_derivative_bound_scope(affine_field, cutoff_2d, p):
    params = Params(p=p, epsilon=0.1, dim=2, horizon_T=0.05)
    with pytest.raises(EstimateScopeError):
        check_time_derivative_bound(affine_field, cutoff_2d, params)


def test_time_derivative_bound_for_constant_field(unit_grid_2d, cutoff_2d):
    params, solution = solve_profile("constant", 1.5, 0.1, unit_grid_2d)
    report = check_time_derivative_bound(solution, cutoff_2d, params)
    assert report.lhs == pytest.approx(0.0, abs=1e-20)
    assert report.passed


def test_time_derivative_bound_for_decaying_sine(sine_solution_2d, cutoff_2d):
    params, solution = sine_solution_2d
    report = check_time_derivative_bound(solution, cutoff_2d, params)
    assert report.details["sup_V"] > 1
    assert report.passed


@pytest.mark.parametrize("p", [1.3, 1.5, 1.9])
@pytest.mark.parametrize("epsilon", [0.1, 0.05])
def test_time_derivative_bound_below_p_two(unit_grid_2d, cutoff_2d, p, epsilon):
    params, solution = solve_profile("sine-product-2d", p, epsilon, unit_grid_2d)
    report = check_time_derivative_bound(solution, cutoff_2d, params)
    assert report.lhs > 0
    assert report.passed


@pytest.mark.parametrize("p", [1.5, 2.5])
def test_weighted_time_derivative_bound(unit_grid_2d, cutoff_2d, p):
    params, solution = solve_profile("sine-product-2d", p, 0.05, unit_grid_2d)
    report = check_weighted_time_derivative_bound(solution, cutoff_2d, params)
    assert report.passed
    assert report.lhs > 0


# weak time derivative


def test_weak_time_derivative_for_affine_field(affine_field, cutoff_2d, affine_params):
    report = check_weak_time_derivative(affine_field, cutoff_2d, affine_params)
    assert report.residual == pytest.approx(0.0, abs=1e-12)
    assert report.passed


def test_weak_time_derivative_converges_on_exact_mode():
    params = Params(p=1.5, epsilon=0.0, dim=1, horizon_T=0.2, critical_policy=CriticalPointPolicy.isotropic)
    reference = exact_1d_mode(np.pi, 1.5)
    residuals = []
    for nx, nt in ((33, 41), (65, 81)):
        grid = build_grid((0.0,), (1.0,), (nx,), 0.2, nt)
        report = check_weak_time_derivative(reference.sample(grid), centered_cutoff(grid, radius=0.4), params)
        residuals.append(abs(report.residual))
        assert report.passed
    assert 2.8 <= residuals[0] / residuals[1] <= 5.2


# eps convergence


def test_epsilon_convergence_is_monotone(unit_grid_1d):
    sweep = _sweep("sine-mode-1d", 1.5, (0.2, 0.1, 0.05, 0.025), unit_grid_1d)
    report = epsilon_convergence(sweep)
    assert report.kind == ReportKind.trend
    assert report.passed
    distances = [level.y for level in report.history]
    assert distances[0] > distances[1] > distances[2] > 0
    assert len(report.details["distance_over_epsilon"]) == 3


def test_epsilon_convergence_at_p_two_is_trivial(unit_grid_1d):
    report = epsilon_convergence(_sweep("sine-mode-1d", 2.0, (0.2, 0.1, 0.05), unit_grid_1d))
    assert [level.y for level in report.history] == [0.0, 0.0]
    assert report.passed


def test_epsilon_convergence_needs_three_runs(unit_grid_1d):
    with pytest.raises(IncompatibleDataError):
        epsilon_convergence(_sweep("sine-mode-1d", 1.5, (0.2, 0.1), unit_grid_1d))


def test_epsilon_convergence_needs_decreasing_epsilons(unit_grid_1d):
    with pytest.raises(IncompatibleDataError):
        epsilon_convergence(_sweep("sine-mode-1d", 1.5, (0.1, 0.2, 0.05), unit_grid_1d))


def test_epsilon_convergence_needs_matching_params(unit_grid_1d):
    sweep = _sweep("sine-mode-1d", 1.5, (0.2, 0.1), unit_grid_1d)
    sweep.append(solve_profile("sine-mode-1d", 2.5, 0.05, unit_grid_1d))
    with pytest.raises(IncompatibleDataError):
        epsilon_convergence(sweep)


# pointwise checks


@pytest.mark.parametrize("profile", ["sine-product-2d", "radial-quadratic", "affine"])
def test_elementary_inequality_with_chain_rule(unit_grid_2d, profile):
    params, solution = solve_profile(profile, 1.5, 0.05, unit_grid_2d)
    report = check_elementary_inequality(solution, params)
    assert report.name == "elementary_inequality_chain_rule"
    assert report.lhs == 0.0
    assert report.details["evaluated_nodes"] > 0
    assert report.passed


def test_elementary_inequality_direct_mode_reports_fraction(sine_solution_2d):
    params, solution = sine_solution_2d
    report = check_elementary_inequality(solution, params, GradVMode.direct)
    assert report.name == "elementary_inequality_direct"
    assert 0.0 <= report.details["fraction_satisfied"] <= 1.0


@pytest.mark.parametrize("p", [1.2, 3.0])
def test_ellipticity(unit_grid_2d, p):
    params, solution = solve_profile("sine-product-2d", p, 0.05, unit_grid_2d)
    report = check_ellipticity(solution, params)
    assert report.lhs == min(1.0, p - 1)
    assert report.passed


def test_time_chain_rule_on_tilted_sine():
    grid = build_grid((0.0,), (1.0,), (33,), 0.5, 51)
    params = Params(p=1.5, epsilon=0.1, dim=1, horizon_T=0.5)
    field = reference_by_name("tilted-sine-1d", params).sample(grid)
    report = check_time_chain_rule(field, params)
    assert report.residual < 1e-2
    assert report.passed


# reports


def test_inequality_report_margin():
    report = EstimateReport(name="x", kind=ReportKind.inequality, lhs=1.0, rhs=1.5, tolerance=0.0, context=_context())
    assert report.margin == 0.5
    assert report.passed
    failing = EstimateReport(name="x", kind=ReportKind.inequality, lhs=2.0, rhs=1.5, tolerance=0.4, context=_context())
    assert not failing.passed


def test_identity_report_uses_residual():
    report = EstimateReport(
        name="x", kind=ReportKind.identity, lhs=10.0, rhs=0.0, residual=0.05, tolerance=0.1, context=_context()
    )
    assert report.passed
    assert report.margin == pytest.approx(0.05)


def test_report_serialization_keeps_all_fields():
    report = refinement_report("trend", _levels([4.0, 1.0, 0.25]), _context(), min_ratio=3.2)
    data = report.serialize()
    assert data["pass"] is True
    assert data["kind"] == "trend"
    assert EstimateReport.deserialize(data) == report


def test_report_deserialize_rejects_incomplete_data():
    with pytest.raises(EstimateReport.DeserializeError):
        EstimateReport.deserialize({"name": "x", "kind": "identity"})
    with pytest.raises(EstimateReport.DeserializeError):
        EstimateReport.deserialize({"name": "x", "kind": "bogus", "lhs": 0, "rhs": 0, "tolerance": 0, "context": {}})


@pytest.mark.parametrize(
    "values, min_ratio, passed",
    [
        ([4.0, 1.0, 0.25], 3.2, True),
        ([4.0, 1.0, 0.5], 3.2, False),
        ([1.0, 1.0], 1.0, True),
        ([0.0, 0.0], 1.5, True),
        ([0.0, 1e-3], 1.0, False),
    ],
)
def test_refinement_report(values, min_ratio, passed):
    report = refinement_report("trend", _levels(values), _context(), min_ratio=min_ratio)
    assert report.passed is passed
    assert report.rhs == pytest.approx(1 / min_ratio)


def test_refinement_report_needs_two_levels():
    with pytest.raises(IncompatibleDataError):
        refinement_report("trend", _levels([1.0]), _context())


def test_identity_ledger():
    ledger = IdentityLedger(term_I=2.0, term_II=1.0, term_III=0.5, term_IV=1.0, term_V=0.5)
    assert ledger.residual == 1.0
    assert ledger.relative_residual == 0.5
    assert ledger.serialize()["residual"] == 1.0
    degenerate = IdentityLedger(term_I=0.0, term_II=1e-10, term_III=0.0, term_IV=0.0, term_V=0.0)
    assert degenerate.relative_residual == pytest.approx(1e-2)
    assert math.isfinite(degenerate.relative_residual)

import pathlib

import numpy as np
import pytest

from normalized_p_laplace_lab.calculus import CutoffFunction
from normalized_p_laplace_lab.grid import (
    CriticalPointPolicy,
    Params,
    SpaceTimeField,
    build_grid,
)
from normalized_p_laplace_lab.profiles import build_problem
from normalized_p_laplace_lab.solver import solve

CONFIG_DIRECTORY = pathlib.Path(__file__).parents[2] / "configs"


def sample(grid, evaluator):
    return SpaceTimeField.sample(grid, evaluator)


def solve_profile(name, p, epsilon, grid, policy=CriticalPointPolicy.zero, amplitude=1.0):
    params = Params(
        p=p,
        epsilon=epsilon,
        dim=grid.dim,
        horizon_T=grid.horizon_T,
        critical_policy=policy,
    )
    return params, solve(build_problem(name, params, grid, amplitude), grid)


def centered_cutoff(grid, radius=0.3, time_radius=None):
    center = tuple((lo + hi) / 2 for lo, hi in zip(grid.box_lo, grid.box_hi))
    return CutoffFunction(
        space_center=center,
        space_radius=radius,
        time_center=grid.horizon_T / 2,
        time_radius=time_radius or 0.4 * grid.horizon_T,
    )


@pytest.fixture()
def unit_grid_1d():
    return build_grid((0.0,), (1.0,), (33,), 0.1, 11)


@pytest.fixture()
def unit_grid_2d():
    return build_grid((0.0, 0.0), (1.0, 1.0), (17, 17), 0.05, 6)


@pytest.fixture()
def affine_field(unit_grid_2d):
    return sample(unit_grid_2d, lambda space, t: 3 * space[0] + 2 * space[1] + 0 * t)


@pytest.fixture()
def affine_params(unit_grid_2d):
    return Params(p=1.5, epsilon=0.1, dim=2, horizon_T=unit_grid_2d.horizon_T)


@pytest.fixture()
def cutoff_2d(unit_grid_2d):
    return centered_cutoff(unit_grid_2d)


@pytest.fixture()
def sine_solution_2d(unit_grid_2d):
    return solve_profile("sine-product-2d", 1.5, 0.05, unit_grid_2d)


@pytest.fixture()
def sine_solution_1d(unit_grid_1d):
    return solve_profile("sine-mode-1d", 1.5, 0.1, unit_grid_1d)


@pytest.fixture()
def rng():
    return np.random.default_rng(7)

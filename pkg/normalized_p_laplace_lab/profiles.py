import dataclasses
import logging
import typing

import numpy as np

from normalized_p_laplace_lab.errors import ParamsError
from normalized_p_laplace_lab.grid import Coordinates, Params, SpaceTimeGrid
from normalized_p_laplace_lab.references import ReferenceSolution
from normalized_p_laplace_lab.solver import ProblemData, mms_forcing

logger = logging.getLogger(__name__)

AFFINE_SLOPE = (1.0, 0.5)
AFFINE_OFFSET = 0.25


@dataclasses.dataclass(frozen=True)
class _Profile:
    """Time-independent data u0, with lateral values either u0 or zero"""

    name: str
    dims: tuple[int, ...]
    build: typing.Callable[[SpaceTimeGrid, float], typing.Callable[[Coordinates], np.ndarray]]
    zero_lateral: bool = False


def _unit(space: Coordinates, grid: SpaceTimeGrid, i: int) -> np.ndarray:
    return (space[i] - grid.box_lo[i]) / (grid.box_hi[i] - grid.box_lo[i])


def _affine(grid: SpaceTimeGrid, amplitude: float):
    def initial(space: Coordinates) -> np.ndarray:
        return amplitude * sum(a * s for a, s in zip(AFFINE_SLOPE, space)) + AFFINE_OFFSET

    return initial


def _constant(grid: SpaceTimeGrid, amplitude: float):
    def initial(space: Coordinates) -> np.ndarray:
        return np.full(np.shape(space[0]), amplitude)

    return initial


def _sine(grid: SpaceTimeGrid, amplitude: float):
    def initial(space: Coordinates) -> np.ndarray:
        values = amplitude * np.ones(np.shape(space[0]))
        for i in range(grid.dim):
            values = values * np.sin(np.pi * _unit(space, grid, i))
        return values

    return initial


def _radial_quadratic(grid: SpaceTimeGrid, amplitude: float):
    center = [(lo + hi) / 2 for lo, hi in zip(grid.box_lo, grid.box_hi)]

    def initial(space: Coordinates) -> np.ndarray:
        return amplitude * sum((s - c) ** 2 for s, c in zip(space, center))

    return initial


PROFILES: dict[str, _Profile] = {
    profile.name: profile
    for profile in (
        _Profile("affine", dims=(1, 2), build=_affine),
        _Profile("constant", dims=(1, 2), build=_constant),
        _Profile("sine-mode-1d", dims=(1,), build=_sine, zero_lateral=True),
        _Profile("sine-product-2d", dims=(2,), build=_sine, zero_lateral=True),
        _Profile("radial-quadratic", dims=(1, 2), build=_radial_quadratic),
    )
}


def build_problem(
    name: str,
    params: Params,
    grid: SpaceTimeGrid,
    amplitude: float = 1.0,
) -> ProblemData:
    try:
        profile = PROFILES[name]
    except KeyError:
        raise ParamsError(
            f"Unknown profile '{name}', choose one of {sorted(PROFILES)}"
        ) from None
    if params.dim not in profile.dims:
        raise ParamsError(f"Profile '{name}' is not defined in dimension {params.dim}")

    initial = profile.build(grid, amplitude)
    if profile.zero_lateral:

        def lateral(space: Coordinates, t: float) -> np.ndarray:
            return np.zeros(np.shape(space[0]))

    else:

        def lateral(space: Coordinates, t: float) -> np.ndarray:
            return initial(space)

    return ProblemData(
        initial=initial,
        lateral=lateral,
        params=params,
        description=f"{name} (amplitude {amplitude:g})",
    )


def problem_from_reference(
    reference: ReferenceSolution, params: Params, grid: SpaceTimeGrid
) -> ProblemData:
    """Initial and lateral data from the reference, plus its forcing unless it is exact"""
    reference.require_valid(params)
    return ProblemData(
        initial=lambda space: reference(space, 0.0),
        lateral=reference,
        params=params,
        forcing=None if reference.exact else mms_forcing(reference, params, grid),
        description=reference.description,
    )

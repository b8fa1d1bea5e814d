import dataclasses
import logging
import math
import time
import typing

import numpy as np

from normalized_p_laplace_lab import config
from normalized_p_laplace_lab.calculus import (
    gradient_array,
    hessian_array,
    p_laplacian_from_derivatives,
)
from normalized_p_laplace_lab.errors import (
    BlowUpError,
    CflError,
    IncompatibleDataError,
)
from normalized_p_laplace_lab.grid import (
    Coordinates,
    CriticalPointPolicy,
    Params,
    SpaceTimeField,
    SpaceTimeGrid,
)

if typing.TYPE_CHECKING:
    from normalized_p_laplace_lab.references import ReferenceSolution

logger = logging.getLogger(__name__)

InitialData = typing.Callable[[Coordinates], np.ndarray]
LateralData = typing.Callable[[Coordinates, float], np.ndarray]
Forcing = typing.Callable[[Coordinates, typing.Any], np.ndarray]

# relative slack when comparing a requested step with the stability limit
_CFL_ROUNDING = 1e-12


@dataclasses.dataclass(frozen=True)
class ProblemData:
    initial: InitialData
    lateral: LateralData
    params: Params
    forcing: Forcing | None = None
    description: str = ""


def cfl_dt(params: Params, grid: SpaceTimeGrid) -> float:
    return config.CFL_SAFETY * grid.h_min**2 / (2 * grid.dim * max(1.0, params.p - 1))


def _on_mesh(values: np.ndarray | float, grid: SpaceTimeGrid) -> np.ndarray:
    return np.array(np.broadcast_to(values, grid.nx), dtype=float)


def step_explicit(
    state: np.ndarray,
    t: float,
    dt: float,
    data: ProblemData,
    grid: SpaceTimeGrid,
    step_index: int = 0,
) -> np.ndarray:
    """One forward Euler step of u_t = Delta_p^N u + f, lateral data imposed at t + dt"""
    limit = cfl_dt(data.params, grid)
    if dt > limit * (1 + _CFL_ROUNDING):
        raise CflError(f"Time step {dt:.6g} exceeds the stability limit {limit:.6g}")

    params = data.params
    rate = p_laplacian_from_derivatives(
        gradient_array(state, grid.h),
        hessian_array(state, grid.h),
        params.p,
        params.epsilon,
        params.critical_policy,
    )
    if data.forcing is not None:
        rate = rate + data.forcing(grid.mesh, t)

    following = state + dt * rate
    boundary = grid.boundary_mask
    following[boundary] = _on_mesh(data.lateral(grid.mesh, t + dt), grid)[boundary]

    if not np.all(np.isfinite(following)):
        logger.error(f"Solver blew up at step {step_index}, t={t + dt:.6g}")
        raise BlowUpError(step_index)
    return following


def _check_compatibility(data: ProblemData, grid: SpaceTimeGrid) -> np.ndarray:
    if data.params.dim != grid.dim:
        raise IncompatibleDataError(
            f"Params dimension {data.params.dim} does not match grid dimension {grid.dim}"
        )
    if not math.isclose(data.params.horizon_T, grid.horizon_T):
        raise IncompatibleDataError(
            f"Params horizon {data.params.horizon_T} does not match grid horizon {grid.horizon_T}"
        )

    initial = _on_mesh(data.initial(grid.mesh), grid)
    lateral = _on_mesh(data.lateral(grid.mesh, 0.0), grid)
    boundary = grid.boundary_mask
    mismatch = np.max(np.abs(initial[boundary] - lateral[boundary]))
    scale = max(1.0, float(np.max(np.abs(initial))))
    if not mismatch <= 1e-12 * scale:
        raise IncompatibleDataError(
            f"Initial and lateral data disagree by {mismatch:.3g} on the boundary at t=0"
        )
    return initial


def solve(
    data: ProblemData,
    grid: SpaceTimeGrid,
    time_step: float | None = None,
) -> SpaceTimeField:
    """Advance every record interval of the grid with equal sub-steps below the CFL limit"""
    state = _check_compatibility(data, grid)

    limit = cfl_dt(data.params, grid)
    if time_step is not None and time_step > limit * (1 + _CFL_ROUNDING):
        raise CflError(
            f"Requested time step {time_step:.6g} exceeds the stability limit {limit:.6g}"
        )
    substeps = max(1, math.ceil(grid.dt / (time_step or limit) * (1 - _CFL_ROUNDING)))
    dt = grid.dt / substeps

    logger.info(
        f"Solving '{data.description}' with p={data.params.p}, eps={data.params.epsilon} "
        f"on {grid.shape} nodes, {substeps} substeps of {dt:.4g} per record"
    )
    start = time.monotonic()

    history = np.empty(grid.shape)
    history[0] = state
    step_index = 0
    for k in range(1, grid.nt):
        t_record = grid.times[k - 1]
        for j in range(substeps):
            step_index += 1
            state = step_explicit(
                state, t_record + j * dt, dt, data, grid, step_index=step_index
            )
        history[k] = state

    logger.info(f"Solve finished after {step_index} steps in {time.monotonic() - start:.2f}s")
    return SpaceTimeField(grid, history)


def mms_forcing(
    reference: "ReferenceSolution",
    params: Params,
    grid: SpaceTimeGrid | None = None,
) -> Forcing:
    """Source term u_t - Delta_p^N u of a manufactured field, from its closed forms

    Critical points with eps = 0 are rejected. With a grid they are looked for
    on every node right away instead of during the solve.
    """

    def forcing(space: Coordinates, t: typing.Any) -> np.ndarray:
        operator = p_laplacian_from_derivatives(
            reference.gradient(space, t),
            reference.hessian(space, t),
            params.p,
            params.epsilon,
            CriticalPointPolicy.raise_error,
        )
        return reference.time_derivative(space, t) - operator

    if grid is not None:
        forcing(*grid.spacetime_mesh)
    return forcing

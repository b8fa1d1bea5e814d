import dataclasses
from enum import Enum
import functools
import logging
import typing

import numpy as np

from normalized_p_laplace_lab.errors import (
    GridError,
    NodeIndexError,
    ParamsError,
    RegionError,
)

logger = logging.getLogger(__name__)

AXIS_NAMES = ("x", "y")

Coordinates = tuple[np.ndarray, ...]


class NodeClass(str, Enum):
    interior = "interior"
    initial = "initial"
    lateral = "lateral"
    terminal_interior = "terminal_interior"

    @property
    def on_parabolic_boundary(self) -> bool:
        return self in (NodeClass.initial, NodeClass.lateral)


class CriticalPointPolicy(str, Enum):
    """What the operator returns where eps = 0 and the gradient vanishes"""

    zero = "zero"
    isotropic = "isotropic"
    raise_error = "raise"


@dataclasses.dataclass(frozen=True)
class Params:
    p: float
    epsilon: float
    dim: int
    horizon_T: float
    critical_policy: CriticalPointPolicy = CriticalPointPolicy.zero

    def __post_init__(self):
        if not self.p > 1:
            raise ParamsError(f"Exponent p must exceed 1, got {self.p}")
        if not self.epsilon >= 0:
            raise ParamsError(f"Regularization epsilon must be >= 0, got {self.epsilon}")
        if self.dim not in (1, 2):
            raise ParamsError(f"Dimension must be 1 or 2, got {self.dim}")
        if not self.horizon_T > 0:
            raise ParamsError(f"Horizon T must be positive, got {self.horizon_T}")
        object.__setattr__(
            self, "critical_policy", CriticalPointPolicy(self.critical_policy)
        )

    def with_epsilon(self, epsilon: float) -> "Params":
        return dataclasses.replace(self, epsilon=epsilon)


@dataclasses.dataclass(frozen=True)
class Region:
    """Axis-aligned box of nodes, bounds inclusive, time axis first"""

    lo: tuple[int, ...]
    hi: tuple[int, ...]

    @classmethod
    def full(cls, shape: typing.Sequence[int]) -> "Region":
        return cls(lo=tuple(0 for _ in shape), hi=tuple(n - 1 for n in shape))

    def validate(self, shape: typing.Sequence[int]) -> None:
        if len(self.lo) != len(shape) or len(self.hi) != len(shape):
            raise RegionError(
                f"Region rank {len(self.lo)} does not match array rank {len(shape)}"
            )
        for axis, (lo, hi, n) in enumerate(zip(self.lo, self.hi, shape)):
            if hi < lo:
                raise RegionError(f"Empty region along axis {axis}: [{lo}, {hi}]")
            if lo < 0 or hi >= n:
                raise RegionError(
                    f"Region [{lo}, {hi}] exceeds axis {axis} with {n} nodes"
                )

    def slices(self) -> tuple[slice, ...]:
        return tuple(slice(lo, hi + 1) for lo, hi in zip(self.lo, self.hi))


@dataclasses.dataclass(frozen=True)
class SpaceTimeGrid:
    box_lo: tuple[float, ...]
    box_hi: tuple[float, ...]
    nx: tuple[int, ...]
    horizon_T: float
    nt: int

    @property
    def dim(self) -> int:
        return len(self.nx)

    @property
    def h(self) -> tuple[float, ...]:
        return tuple(
            (hi - lo) / (n - 1) for lo, hi, n in zip(self.box_lo, self.box_hi, self.nx)
        )

    @property
    def h_min(self) -> float:
        return min(self.h)

    @property
    def h_max(self) -> float:
        return max(self.h)

    @property
    def dt(self) -> float:
        return self.horizon_T / (self.nt - 1)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.nt, *self.nx)

    @property
    def spacings(self) -> tuple[float, ...]:
        return (self.dt, *self.h)

    @property
    def node_count(self) -> int:
        return int(np.prod(self.shape))

    def axis(self, i: int) -> np.ndarray:
        return np.linspace(self.box_lo[i], self.box_hi[i], self.nx[i])

    @functools.cached_property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon_T, self.nt)

    @functools.cached_property
    def mesh(self) -> Coordinates:
        return tuple(
            np.meshgrid(*(self.axis(i) for i in range(self.dim)), indexing="ij")
        )

    @functools.cached_property
    def spacetime_mesh(self) -> tuple[Coordinates, np.ndarray]:
        """Spatial mesh and times shaped to broadcast against (nt, *nx)"""
        space = tuple(m[np.newaxis] for m in self.mesh)
        times = self.times.reshape((self.nt,) + (1,) * self.dim)
        return space, times

    @functools.cached_property
    def boundary_mask(self) -> np.ndarray:
        """Spatial nodes on the boundary of the box"""
        return ~spatial_margin_mask(self.nx, 1)

    def refined(self) -> "SpaceTimeGrid":
        return build_grid(
            self.box_lo,
            self.box_hi,
            tuple(2 * n - 1 for n in self.nx),
            self.horizon_T,
            2 * self.nt - 1,
        )

    def interior_region(self, margin_cells: int = 1, time_margin: int = 0) -> Region:
        region = Region(
            lo=(time_margin, *(margin_cells for _ in self.nx)),
            hi=(self.nt - 1 - time_margin, *(n - 1 - margin_cells for n in self.nx)),
        )
        region.validate(self.shape)
        return region

    def describe(self) -> dict:
        return {
            "box_lo": list(self.box_lo),
            "box_hi": list(self.box_hi),
            "nx": list(self.nx),
            "nt": self.nt,
            "T": self.horizon_T,
            "h": list(self.h),
            "dt": self.dt,
        }


def build_grid(
    box_lo: typing.Sequence[float],
    box_hi: typing.Sequence[float],
    nx: typing.Sequence[int],
    horizon_T: float,
    nt: int,
) -> SpaceTimeGrid:
    if not len(box_lo) == len(box_hi) == len(nx):
        raise GridError(
            f"box_lo, box_hi and nx disagree in length: {len(box_lo)}, {len(box_hi)}, {len(nx)}"
        )
    if len(nx) not in (1, 2):
        raise GridError(f"Only dimensions 1 and 2 are supported, got {len(nx)}")

    for i, (lo, hi, n) in enumerate(zip(box_lo, box_hi, nx)):
        if not hi > lo:
            raise GridError(
                f"Degenerate box along axis {AXIS_NAMES[i]}: lo={lo}, hi={hi}"
            )
        if n < 3:
            raise GridError(f"Axis {AXIS_NAMES[i]} needs at least 3 nodes, got {n}")
    if nt < 2:
        raise GridError(f"Need at least 2 time slices, got {nt}")
    if not horizon_T > 0:
        raise GridError(f"Horizon T must be positive, got {horizon_T}")

    return SpaceTimeGrid(
        box_lo=tuple(float(v) for v in box_lo),
        box_hi=tuple(float(v) for v in box_hi),
        nx=tuple(int(n) for n in nx),
        horizon_T=float(horizon_T),
        nt=int(nt),
    )


def classify_node(grid: SpaceTimeGrid, node_index: typing.Sequence[int]) -> NodeClass:
    if len(node_index) != grid.dim + 1:
        raise NodeIndexError(
            f"Node index {tuple(node_index)} must have {grid.dim + 1} components"
        )
    k, *space = node_index
    if not 0 <= k < grid.nt or any(not 0 <= i < n for i, n in zip(space, grid.nx)):
        raise NodeIndexError(f"Node {tuple(node_index)} outside grid {grid.shape}")

    if k == 0:
        return NodeClass.initial
    if any(i in (0, n - 1) for i, n in zip(space, grid.nx)):
        return NodeClass.lateral
    if k == grid.nt - 1:
        return NodeClass.terminal_interior
    return NodeClass.interior


def node_class_masks(grid: SpaceTimeGrid) -> dict[NodeClass, np.ndarray]:
    """Boolean mask over grid.shape for every node class"""
    initial = np.zeros(grid.shape, dtype=bool)
    initial[0] = True
    on_boundary = np.broadcast_to(grid.boundary_mask, grid.shape)
    lateral = on_boundary & ~initial
    terminal = np.zeros(grid.shape, dtype=bool)
    terminal[-1] = True
    terminal_interior = terminal & ~on_boundary
    interior = ~(initial | lateral | terminal_interior)
    return {
        NodeClass.interior: interior,
        NodeClass.initial: initial,
        NodeClass.lateral: lateral,
        NodeClass.terminal_interior: terminal_interior,
    }


def spatial_margin_mask(nx: typing.Sequence[int], margin_cells: int) -> np.ndarray:
    """Spatial nodes at least `margin_cells` cells away from the boundary"""
    mask = np.zeros(tuple(nx), dtype=bool)
    mask[tuple(slice(margin_cells, n - margin_cells) for n in nx)] = True
    return mask


def trapezoid_weights(n: int, h: float) -> np.ndarray:
    weights = np.full(n, h, dtype=float)
    weights[0] = weights[-1] = h / 2
    if n == 1:
        weights[0] = 0.0
    return weights


def quadrature(
    values: np.ndarray,
    spacings: typing.Sequence[float],
    region: Region | None = None,
) -> float:
    """Tensor-product trapezoidal sum of nodal values over a node sub-box"""
    values = np.asarray(values, dtype=float)
    if len(spacings) != values.ndim:
        raise RegionError(
            f"Got {len(spacings)} spacings for an array of rank {values.ndim}"
        )
    region = region or Region.full(values.shape)
    region.validate(values.shape)

    result = values[region.slices()]
    for h in reversed(spacings):
        result = result @ trapezoid_weights(result.shape[-1], h)
    return float(result)


@dataclasses.dataclass(frozen=True, eq=False)
class SpaceTimeField:
    grid: SpaceTimeGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise GridError(
                f"Field shape {values.shape} does not match grid shape {self.grid.shape}"
            )
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def sample(
        cls,
        grid: SpaceTimeGrid,
        evaluator: typing.Callable[[Coordinates, np.ndarray], np.ndarray],
    ) -> "SpaceTimeField":
        space, times = grid.spacetime_mesh
        return cls(grid, np.broadcast_to(evaluator(space, times), grid.shape))

    def slice(self, k: int) -> np.ndarray:
        return self.values[k]

    def time_derivative(self) -> np.ndarray:
        return np.gradient(
            self.values,
            self.grid.dt,
            axis=0,
            edge_order=2 if self.grid.nt > 2 else 1,
        )

import dataclasses
from enum import Enum
import logging
import typing

import numpy as np

from normalized_p_laplace_lab import config
from normalized_p_laplace_lab.errors import (
    CriticalPointError,
    CutoffSupportError,
    StencilError,
)
from normalized_p_laplace_lab.grid import (
    CriticalPointPolicy,
    SpaceTimeField,
    SpaceTimeGrid,
)

logger = logging.getLogger(__name__)


class GradVMode(str, Enum):
    chain_rule = "chain_rule"
    direct = "direct"


def _offset_view(values: np.ndarray, offsets: dict[int, int]) -> np.ndarray:
    index = [slice(None)] * values.ndim
    for axis, offset in offsets.items():
        index[axis] = slice(1 + offset, values.shape[axis] - 1 + offset)
    return values[tuple(index)]


def _spatial_axis(values: np.ndarray, dim: int, i: int) -> int:
    return values.ndim - dim + i


def _blank_margin(values: np.ndarray, dim: int, margin_cells: int) -> np.ndarray:
    for i in range(dim):
        axis = _spatial_axis(values, dim, i)
        index: list[typing.Any] = [slice(None)] * values.ndim
        index[axis] = slice(0, margin_cells)
        values[tuple(index)] = np.nan
        index[axis] = slice(values.shape[axis] - margin_cells, None)
        values[tuple(index)] = np.nan
    return values


def first_difference(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    out = np.full(values.shape, np.nan)
    _offset_view(out, {axis: 0})[...] = (
        _offset_view(values, {axis: 1}) - _offset_view(values, {axis: -1})
    ) / (2 * h)
    return out


def second_difference(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    out = np.full(values.shape, np.nan)
    _offset_view(out, {axis: 0})[...] = (
        _offset_view(values, {axis: 1})
        - 2 * _offset_view(values, {axis: 0})
        + _offset_view(values, {axis: -1})
    ) / h**2
    return out


def cross_difference(
    values: np.ndarray, axis_a: int, axis_b: int, h_a: float, h_b: float
) -> np.ndarray:
    out = np.full(values.shape, np.nan)
    _offset_view(out, {axis_a: 0, axis_b: 0})[...] = (
        _offset_view(values, {axis_a: 1, axis_b: 1})
        - _offset_view(values, {axis_a: 1, axis_b: -1})
        - _offset_view(values, {axis_a: -1, axis_b: 1})
        + _offset_view(values, {axis_a: -1, axis_b: -1})
    ) / (4 * h_a * h_b)
    return out


def gradient_array(values: np.ndarray, h: typing.Sequence[float]) -> np.ndarray:
    """Central differences, shape (dim, *values.shape)"""
    values = np.asarray(values, dtype=float)
    dim = len(h)
    grad = np.stack(
        [
            first_difference(values, _spatial_axis(values, dim, i), h[i])
            for i in range(dim)
        ]
    )
    return _blank_margin(grad, dim, 1)


def hessian_array(values: np.ndarray, h: typing.Sequence[float]) -> np.ndarray:
    """Symmetric Hessian, shape (dim, dim, *values.shape)"""
    values = np.asarray(values, dtype=float)
    dim = len(h)
    hess = np.empty((dim, dim) + values.shape)
    for a in range(dim):
        axis_a = _spatial_axis(values, dim, a)
        hess[a, a] = second_difference(values, axis_a, h[a])
        for b in range(a + 1, dim):
            axis_b = _spatial_axis(values, dim, b)
            hess[a, b] = hess[b, a] = cross_difference(
                values, axis_a, axis_b, h[a], h[b]
            )
    return _blank_margin(hess, dim, 1)


def laplacian_from_hessian(hess: np.ndarray) -> np.ndarray:
    return np.trace(hess, axis1=0, axis2=1)


@dataclasses.dataclass(frozen=True, eq=False)
class DerivativeBundle:
    grad: np.ndarray
    hess: np.ndarray
    lap: np.ndarray
    v_eps: np.ndarray
    V_eps: np.ndarray
    grad_v: np.ndarray
    node: tuple[int, ...] | None = None

    @property
    def dim(self) -> int:
        return self.grad.shape[0]

    @property
    def hess_norm_sq(self) -> np.ndarray:
        return np.sum(self.hess**2, axis=(0, 1))

    @property
    def grad_v_norm_sq(self) -> np.ndarray:
        return np.sum(self.grad_v**2, axis=0)


def compute_bundle(
    values: np.ndarray,
    h: typing.Sequence[float],
    epsilon: float,
    mode: GradVMode = GradVMode.chain_rule,
) -> DerivativeBundle:
    grad = gradient_array(values, h)
    hess = hessian_array(values, h)
    v_eps = np.sum(grad**2, axis=0)
    if mode == GradVMode.chain_rule:
        grad_v = 2 * np.einsum("ij...,j...->i...", hess, grad)
    else:
        grad_v = gradient_array(v_eps, h)
    return DerivativeBundle(
        grad=grad,
        hess=hess,
        lap=laplacian_from_hessian(hess),
        v_eps=v_eps,
        V_eps=v_eps + epsilon**2,
        grad_v=grad_v,
    )


def _neighbourhood(
    field: SpaceTimeField,
    slice_index: int,
    node: typing.Sequence[int],
    radius: int,
) -> np.ndarray:
    grid = field.grid
    if len(node) != grid.dim:
        raise StencilError(f"Node {tuple(node)} must have {grid.dim} components")
    if not 0 <= slice_index < grid.nt:
        raise StencilError(f"Time slice {slice_index} outside [0, {grid.nt - 1}]")
    for i, n in zip(node, grid.nx):
        if not radius <= i <= n - 1 - radius:
            raise StencilError(
                f"Node {tuple(node)} is closer than {radius} cells to the spatial boundary"
            )
    window = tuple(slice(i - radius, i + radius + 1) for i in node)
    return field.slice(slice_index)[window]


def gradient(
    field: SpaceTimeField, slice_index: int, node: typing.Sequence[int]
) -> np.ndarray:
    window = _neighbourhood(field, slice_index, node, radius=1)
    return gradient_array(window, field.grid.h)[(slice(None),) + (1,) * field.grid.dim]


def hessian(
    field: SpaceTimeField, slice_index: int, node: typing.Sequence[int]
) -> np.ndarray:
    window = _neighbourhood(field, slice_index, node, radius=1)
    return hessian_array(window, field.grid.h)[
        (slice(None), slice(None)) + (1,) * field.grid.dim
    ]


def derive_bundle(
    field: SpaceTimeField,
    slice_index: int,
    node: typing.Sequence[int],
    epsilon: float,
    mode: GradVMode = GradVMode.chain_rule,
) -> DerivativeBundle:
    window = _neighbourhood(field, slice_index, node, radius=2)
    bundle = compute_bundle(window, field.grid.h, epsilon, mode)
    center = (2,) * field.grid.dim
    return DerivativeBundle(
        grad=bundle.grad[(slice(None),) + center],
        hess=bundle.hess[(slice(None), slice(None)) + center],
        lap=bundle.lap[center],
        v_eps=bundle.v_eps[center],
        V_eps=bundle.V_eps[center],
        grad_v=bundle.grad_v[(slice(None),) + center],
        node=(slice_index, *node),
    )


def p_laplacian_from_derivatives(
    grad: np.ndarray,
    hess: np.ndarray,
    p: float,
    epsilon: float,
    policy: CriticalPointPolicy = CriticalPointPolicy.zero,
    node_offset: tuple[int, ...] | None = None,
) -> np.ndarray:
    """Delta u + (p-2) <grad u, D^2u grad u> / (|grad u|^2 + eps^2)"""
    lap = laplacian_from_hessian(hess)
    if p == 2:
        return lap

    v = np.sum(grad**2, axis=0)
    V = v + epsilon**2
    quadratic = np.einsum("i...,ij...,j...->...", grad, hess, grad)
    with np.errstate(invalid="ignore"):
        critical = (v < config.CRITICAL_POINT_THRESHOLD) if epsilon == 0 else None

    if critical is None or not np.any(critical):
        return lap + (p - 2) * quadratic / V

    if policy == CriticalPointPolicy.raise_error:
        index = tuple(int(i) for i in np.argwhere(critical)[0])
        node = node_offset if node_offset is not None and not index else index
        raise CriticalPointError("Vanishing gradient with eps=0", node=node)

    dim = grad.shape[0]
    if policy == CriticalPointPolicy.isotropic:
        fallback = lap + (p - 2) * lap / dim
    else:
        fallback = lap
    safe_V = np.where(critical, 1.0, V)
    return np.where(critical, fallback, lap + (p - 2) * quadratic / safe_V)


def normalized_p_laplacian(
    bundle: DerivativeBundle,
    p: float,
    epsilon: float,
    policy: CriticalPointPolicy = CriticalPointPolicy.zero,
) -> np.ndarray | float:
    value = p_laplacian_from_derivatives(
        bundle.grad, bundle.hess, p, epsilon, policy, node_offset=bundle.node
    )
    return value if np.ndim(value) else float(value)


def ellipticity_bounds(
    bundle: DerivativeBundle, p: float
) -> tuple[np.ndarray, np.ndarray]:
    """Smallest and largest eigenvalue of I + (p-2) grad u grad u^T / V"""
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(bundle.V_eps > 0, bundle.v_eps / bundle.V_eps, 0.0)
    along_gradient = 1 + (p - 2) * ratio
    if bundle.dim == 1:
        return along_gradient, along_gradient
    return np.minimum(1.0, along_gradient), np.maximum(1.0, along_gradient)


@dataclasses.dataclass(frozen=True)
class CutoffFunction:
    """Product bump exp(1 - 1/(1-s)) in space and in time, equal to 1 at the center"""

    space_center: tuple[float, ...]
    space_radius: float
    time_center: float
    time_radius: float

    @property
    def identifier(self) -> str:
        center = ",".join(f"{c:g}" for c in self.space_center)
        return (
            f"bump(c=({center}),r={self.space_radius:g},"
            f"tc={self.time_center:g},rho={self.time_radius:g})"
        )

    @classmethod
    def inside(
        cls,
        grid: SpaceTimeGrid,
        space_center: typing.Sequence[float],
        space_radius: float,
        time_center: float,
        time_radius: float,
    ) -> "CutoffFunction":
        cutoff = cls(
            space_center=tuple(float(c) for c in space_center),
            space_radius=float(space_radius),
            time_center=float(time_center),
            time_radius=float(time_radius),
        )
        cutoff.require_inside(grid)
        return cutoff

    def require_inside(self, grid: SpaceTimeGrid, margin_cells: int = 0) -> None:
        if len(self.space_center) != grid.dim:
            raise CutoffSupportError(
                f"Cutoff center {self.space_center} does not match dimension {grid.dim}"
            )
        if self.space_radius <= 0 or self.time_radius <= 0:
            raise CutoffSupportError("Cutoff radii must be positive")
        for i, (c, lo, hi, h) in enumerate(
            zip(self.space_center, grid.box_lo, grid.box_hi, grid.h)
        ):
            gap = min(c - self.space_radius - lo, hi - c - self.space_radius)
            if not gap > 0 or gap < margin_cells * h:
                raise CutoffSupportError(
                    f"Cutoff support along axis {i} is {gap:.3g} from the boundary, "
                    f"need more than {margin_cells} cells of {h:.3g}"
                )
        if not (
            self.time_center - self.time_radius > 0
            and self.time_center + self.time_radius < grid.horizon_T
        ):
            raise CutoffSupportError(
                f"Cutoff time support [{self.time_center - self.time_radius:g}, "
                f"{self.time_center + self.time_radius:g}] not inside (0, {grid.horizon_T:g})"
            )


@dataclasses.dataclass(frozen=True, eq=False)
class CutoffValues:
    xi: np.ndarray
    grad: np.ndarray
    hess: np.ndarray
    xi_t: np.ndarray


def _bump(s: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    inside = s < 1
    q = np.where(inside, 1.0 / (1.0 - np.where(inside, s, 0.0)), 0.0)
    b = np.where(inside, np.exp(1.0 - q), 0.0)
    return b, -b * q**2, b * (q**4 - 2 * q**3)


def cutoff_eval(
    cutoff: CutoffFunction,
    x: typing.Sequence[np.ndarray | float],
    t: np.ndarray | float,
) -> CutoffValues:
    offsets = [np.asarray(xi, dtype=float) - c for xi, c in zip(x, cutoff.space_center)]
    r2 = cutoff.space_radius**2
    phi, dphi, d2phi = _bump(sum(d**2 for d in offsets) / r2)
    grad_s = [2 * d / r2 for d in offsets]

    tau = np.asarray(t, dtype=float) - cutoff.time_center
    rho2 = cutoff.time_radius**2
    psi, dpsi, _ = _bump(tau**2 / rho2)

    xi = phi * psi
    dim = len(offsets)
    grad = np.stack(np.broadcast_arrays(*(psi * dphi * gs for gs in grad_s), xi)[:dim])
    hess = np.empty((dim, dim) + xi.shape)
    for a in range(dim):
        for b in range(dim):
            second = d2phi * grad_s[a] * grad_s[b]
            if a == b:
                second = second + 2 * dphi / r2
            hess[a, b] = psi * second
    xi_t = np.broadcast_to(phi * dpsi * 2 * tau / rho2, xi.shape)
    return CutoffValues(xi=xi, grad=grad, hess=hess, xi_t=np.array(xi_t))


def cutoff_on_grid(cutoff: CutoffFunction, grid: SpaceTimeGrid) -> CutoffValues:
    space, times = grid.spacetime_mesh
    return cutoff_eval(cutoff, space, times)

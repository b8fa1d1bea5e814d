import dataclasses
import functools
import logging
import typing

import numpy as np
import sympy

from normalized_p_laplace_lab.errors import (
    CoordinateSingularityError,
    CriticalPointError,
    ParamsError,
)
from normalized_p_laplace_lab.grid import (
    Coordinates,
    Params,
    SpaceTimeField,
    SpaceTimeGrid,
)

logger = logging.getLogger(__name__)

x, y, t = sympy.symbols("x y t", real=True)
SPACE_SYMBOLS = (x, y)


def _always_valid(params: Params) -> bool:
    return True


def _rational(value: float) -> sympy.Expr:
    return sympy.nsimplify(value, [sympy.pi])


@dataclasses.dataclass(frozen=True)
class ReferenceSolution:
    name: str
    expression: sympy.Expr
    dim: int
    description: str
    valid_params: typing.Callable[[Params], bool] = _always_valid
    # solves the equation without forcing for every valid Params
    exact: bool = False

    @property
    def space_symbols(self) -> tuple[sympy.Symbol, ...]:
        return SPACE_SYMBOLS[: self.dim]

    def _lambdify(self, expression: sympy.Expr) -> typing.Callable:
        return sympy.lambdify((*self.space_symbols, t), expression, modules="numpy")

    @functools.cached_property
    def _value_fn(self) -> typing.Callable:
        return self._lambdify(self.expression)

    @functools.cached_property
    def _time_derivative_fn(self) -> typing.Callable:
        return self._lambdify(sympy.diff(self.expression, t))

    @functools.cached_property
    def _gradient_fns(self) -> list[typing.Callable]:
        return [self._lambdify(sympy.diff(self.expression, s)) for s in self.space_symbols]

    @functools.cached_property
    def _hessian_fns(self) -> list[list[typing.Callable]]:
        return [
            [self._lambdify(sympy.diff(self.expression, a, b)) for b in self.space_symbols]
            for a in self.space_symbols
        ]

    def _call(self, fn: typing.Callable, space: Coordinates, times: typing.Any) -> np.ndarray:
        # lambdified constants come back as scalars
        shape = np.broadcast_shapes(*(np.shape(s) for s in space), np.shape(times))
        return np.array(np.broadcast_to(fn(*space, times), shape), dtype=float)

    def evaluate(self, space: Coordinates, times: typing.Any) -> np.ndarray:
        return self._call(self._value_fn, space, times)

    __call__ = evaluate

    def time_derivative(self, space: Coordinates, times: typing.Any) -> np.ndarray:
        return self._call(self._time_derivative_fn, space, times)

    def gradient(self, space: Coordinates, times: typing.Any) -> np.ndarray:
        return np.stack([self._call(fn, space, times) for fn in self._gradient_fns])

    def hessian(self, space: Coordinates, times: typing.Any) -> np.ndarray:
        return np.stack(
            [
                np.stack([self._call(fn, space, times) for fn in row])
                for row in self._hessian_fns
            ]
        )

    def symbolic_residual(self, params: Params) -> sympy.Expr:
        """u_t minus the regularized operator, simplified"""
        p = _rational(params.p)
        epsilon = _rational(params.epsilon)
        u = self.expression
        grad = [sympy.diff(u, s) for s in self.space_symbols]
        hess = [[sympy.diff(u, a, b) for b in self.space_symbols] for a in self.space_symbols]
        laplacian = sum(hess[i][i] for i in range(self.dim))
        quadratic = sum(
            grad[i] * hess[i][j] * grad[j] for i in range(self.dim) for j in range(self.dim)
        )
        v = sum(g**2 for g in grad)
        operator = laplacian + (p - 2) * quadratic / (v + epsilon**2)
        return sympy.simplify(sympy.diff(u, t) - operator)

    def require_valid(self, params: Params) -> None:
        if params.dim != self.dim or not self.valid_params(params):
            raise ParamsError(
                f"Reference '{self.name}' ({self.description}) does not apply to {params}"
            )

    def sample(self, grid: SpaceTimeGrid) -> SpaceTimeField:
        return SpaceTimeField.sample(grid, self.evaluate)


@dataclasses.dataclass(frozen=True)
class _ExactModeValidity:
    p: float

    def __call__(self, params: Params) -> bool:
        # the regularized 1D equation is no longer linear unless p = 2
        return params.p == self.p and (params.epsilon == 0 or params.p == 2)


def exact_1d_mode(k: float, p: float) -> ReferenceSolution:
    if not k > 0:
        raise ParamsError(f"Wave number must be positive, got {k}")
    if not p > 1:
        raise ParamsError(f"Exponent p must exceed 1, got {p}")
    wave = _rational(k)
    expression = sympy.exp(-(_rational(p) - 1) * wave**2 * t) * sympy.sin(wave * x)
    return ReferenceSolution(
        name="sine-mode-1d",
        expression=expression,
        dim=1,
        description=f"exp(-(p-1) k^2 t) sin(k x), k={k:g}, p={p:g}",
        valid_params=_ExactModeValidity(p),
        exact=True,
    )


def radial_operator_reduction(
    u_r: float, u_rr: float, r: float, p: float, dim: int = 2
) -> float:
    """Normalized p-Laplacian of a radial profile: (p-1) u_rr + (n-1) u_r / r"""
    if not r > 0:
        raise CoordinateSingularityError(f"Radial reduction needs r > 0, got {r}")
    if u_r == 0:
        raise CriticalPointError(f"Radial profile has u_r = 0 at r={r}")
    return (p - 1) * u_rr + (dim - 1) * u_r / r


def _quadratic_saddle(params: Params) -> ReferenceSolution:
    return ReferenceSolution(
        name="quadratic-saddle-2d",
        expression=x**2 - y**2 + t,
        dim=2,
        description="x^2 - y^2 + t, reproduced exactly by second-order stencils",
    )


def _tilted_sine_1d(params: Params) -> ReferenceSolution:
    return ReferenceSolution(
        name="tilted-sine-1d",
        expression=x + sympy.exp(-t) * sympy.sin(sympy.pi * x) / 4,
        dim=1,
        description="x + exp(-t) sin(pi x) / 4, gradient bounded below by 1 - pi/4",
    )


def _tilted_sine_2d(params: Params) -> ReferenceSolution:
    return ReferenceSolution(
        name="tilted-sine-2d",
        expression=x + sympy.exp(-t) * sympy.sin(sympy.pi * x) * sympy.sin(sympy.pi * y) / 4,
        dim=2,
        description="x + exp(-t) sin(pi x) sin(pi y) / 4, gradient bounded below by 1 - pi/4",
    )


REFERENCES: dict[str, typing.Callable[[Params], ReferenceSolution]] = {
    "sine-mode-1d": lambda params: exact_1d_mode(np.pi, params.p),
    "quadratic-saddle-2d": _quadratic_saddle,
    "tilted-sine-1d": _tilted_sine_1d,
    "tilted-sine-2d": _tilted_sine_2d,
}


def reference_by_name(name: str, params: Params) -> ReferenceSolution:
    try:
        factory = REFERENCES[name]
    except KeyError:
        raise ParamsError(
            f"Unknown reference '{name}', choose one of {sorted(REFERENCES)}"
        ) from None
    reference = factory(params)
    reference.require_valid(params)
    return reference

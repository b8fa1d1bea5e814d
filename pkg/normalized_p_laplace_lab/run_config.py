from enum import Enum
import hashlib
import json
import logging
import pathlib
import typing

from pydantic import BaseModel, Field, conint, root_validator, validator
import yaml

from normalized_p_laplace_lab.grid import CriticalPointPolicy, Params
from normalized_p_laplace_lab.profiles import PROFILES
from normalized_p_laplace_lab.references import REFERENCES
from normalized_p_laplace_lab.verifier import SECOND_DERIVATIVE_WINDOW

logger = logging.getLogger(__name__)


class ReportFormat(str, Enum):
    json = "json"
    csv = "csv"


class VerifierName(str, Enum):
    max_principle = "max_principle"
    veps_evolution = "veps_evolution"
    gradient_interior_bound = "gradient_interior_bound"
    miranda_talenti = "miranda_talenti"
    fundamental_identity = "fundamental_identity"
    second_derivative_bound = "second_derivative_bound"
    time_derivative_bound = "time_derivative_bound"
    weighted_time_derivative_bound = "weighted_time_derivative_bound"
    weak_time_derivative = "weak_time_derivative"
    epsilon_convergence = "epsilon_convergence"
    elementary_inequality = "elementary_inequality"
    ellipticity = "ellipticity"
    time_chain_rule = "time_chain_rule"


CUTOFF_VERIFIERS = frozenset(
    {
        VerifierName.miranda_talenti,
        VerifierName.fundamental_identity,
        VerifierName.second_derivative_bound,
        VerifierName.time_derivative_bound,
        VerifierName.weighted_time_derivative_bound,
        VerifierName.weak_time_derivative,
    }
)

SWEEP_VERIFIERS = frozenset(
    {
        VerifierName.epsilon_convergence,
        VerifierName.second_derivative_bound,
        VerifierName.gradient_interior_bound,
    }
)

# checks on a single eps, everything but the eps-family comparisons
VERIFY_VERIFIERS = frozenset(VerifierName) - {
    VerifierName.epsilon_convergence,
    VerifierName.second_derivative_bound,
}

# identity checks whose residuals set the tolerance slope
CALIBRATION_VERIFIERS = (
    VerifierName.veps_evolution,
    VerifierName.miranda_talenti,
    VerifierName.fundamental_identity,
)


class _Spec(BaseModel):
    class Config:
        extra = "forbid"


class ParamsSpec(_Spec):
    p: float = Field(..., gt=1)
    epsilon: float = Field(..., ge=0)
    dim: typing.Literal[1, 2]
    T: float = Field(..., gt=0)
    critical_policy: CriticalPointPolicy = CriticalPointPolicy.zero

    def build(self, epsilon: float | None = None) -> Params:
        return Params(
            p=self.p,
            epsilon=self.epsilon if epsilon is None else epsilon,
            dim=self.dim,
            horizon_T=self.T,
            critical_policy=self.critical_policy,
        )


class GridSpec(_Spec):
    box_lo: list[float]
    box_hi: list[float]
    nx: list[conint(ge=3)]  # type: ignore[valid-type]
    nt: conint(ge=2)  # type: ignore[valid-type]

    @root_validator(skip_on_failure=True)
    def _consistent_axes(cls, values):
        box_lo, box_hi, nx = values["box_lo"], values["box_hi"], values["nx"]
        if not len(box_lo) == len(box_hi) == len(nx):
            raise ValueError("grid.box_lo, grid.box_hi and grid.nx must have the same length")
        for axis, (lo, hi) in enumerate(zip(box_lo, box_hi)):
            if not hi > lo:
                raise ValueError(f"grid.box_hi[{axis}] must exceed grid.box_lo[{axis}]")
        return values


class DataSpec(_Spec):
    profile: str | None = None
    reference: str | None = None
    amplitude: float = 1.0

    @validator("profile")
    def _known_profile(cls, value):
        if value is not None and value not in PROFILES:
            raise ValueError(f"unknown profile '{value}', choose one of {sorted(PROFILES)}")
        return value

    @validator("reference")
    def _known_reference(cls, value):
        if value is not None and value not in REFERENCES:
            raise ValueError(f"unknown reference '{value}', choose one of {sorted(REFERENCES)}")
        return value

    @root_validator(skip_on_failure=True)
    def _exactly_one_source(cls, values):
        if (values.get("profile") is None) == (values.get("reference") is None):
            raise ValueError("data needs exactly one of 'profile' or 'reference'")
        return values


class CutoffSpec(_Spec):
    center: list[float]
    radius: float = Field(..., gt=0)
    time_center: float
    time_radius: float = Field(..., gt=0)


class SweepSpec(_Spec):
    epsilons: list[float] = []
    margins: list[float] = []
    assertion_mode: bool = True

    @validator("epsilons", each_item=True)
    def _non_negative(cls, value):
        if value < 0:
            raise ValueError("sweep.epsilons must be >= 0")
        return value

    @validator("margins", each_item=True)
    def _positive(cls, value):
        if not value > 0:
            raise ValueError("sweep.margins must be > 0")
        return value


class OutputSpec(_Spec):
    directory: str = "reports"
    format: ReportFormat = ReportFormat.json


class RunConfig(_Spec):
    params: ParamsSpec
    grid: GridSpec
    data: DataSpec
    cutoff: CutoffSpec | None = None
    verifiers: list[VerifierName] = []
    sweep: SweepSpec = SweepSpec()
    output: OutputSpec = OutputSpec()

    @root_validator(skip_on_failure=True)
    def _cross_section_checks(cls, values):
        params: ParamsSpec = values["params"]
        grid: GridSpec = values["grid"]
        cutoff: CutoffSpec | None = values.get("cutoff")
        verifiers: list[VerifierName] = values.get("verifiers", [])
        sweep: SweepSpec = values["sweep"]

        if len(grid.nx) != params.dim:
            raise ValueError(
                f"grid.nx has {len(grid.nx)} axes but params.dim is {params.dim}"
            )
        if cutoff is not None and len(cutoff.center) != params.dim:
            raise ValueError(
                f"cutoff.center has {len(cutoff.center)} components but params.dim is {params.dim}"
            )
        if cutoff is None and (needs := CUTOFF_VERIFIERS.intersection(verifiers)):
            raise ValueError(
                f"verifiers {sorted(v.value for v in needs)} need a 'cutoff' section"
            )

        lo, hi = SECOND_DERIVATIVE_WINDOW
        if (
            VerifierName.second_derivative_bound in verifiers
            and sweep.assertion_mode
            and params.dim >= 2
            and not lo < params.p < hi
        ):
            raise ValueError(
                f"params.p={params.p} is outside ({lo:g}, {hi:g}) where the "
                "second-derivative bound is asserted; set sweep.assertion_mode to false"
            )
        if VerifierName.time_derivative_bound in verifiers and not params.p < 2:
            raise ValueError(
                f"params.p={params.p}: the time-derivative bound is only stated for 1 < p < 2"
            )
        if VerifierName.gradient_interior_bound in verifiers and len(set(sweep.margins)) < 2:
            raise ValueError("gradient_interior_bound needs at least 2 distinct sweep.margins")
        return values

    @classmethod
    def from_yaml(cls, source: str | pathlib.Path) -> "RunConfig":
        text = source.read_text() if isinstance(source, pathlib.Path) else source
        return cls.parse_obj(yaml.safe_load(text))

    @classmethod
    def from_file(cls, path: str | pathlib.Path) -> "RunConfig":
        logger.info(f"Loading run configuration from {path}")
        return cls.from_yaml(pathlib.Path(path))

    def to_yaml(self) -> str:
        return yaml.safe_dump(json.loads(self.json()), sort_keys=False)

    def digest(self) -> str:
        canonical = json.dumps(json.loads(self.json()), sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()[:12]

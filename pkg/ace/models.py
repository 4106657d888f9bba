import math
from typing import List, Literal, Optional, Tuple
from pydantic import BaseModel, Field, field_validator, model_validator

from .config import settings


MarginalKind = Literal["uniform", "normal", "lognormal", "triangular", "point", "poisson"]

_REQUIRED_FIELDS = {
    "uniform": ("lo", "hi"),
    "normal": ("mean", "var"),
    "lognormal": ("log_mean", "log_var"),
    "triangular": ("L",),
    "point": ("value",),
    "poisson": ("rate",),
}


class Marginal(BaseModel):
    kind: MarginalKind
    lo: Optional[float] = None
    hi: Optional[float] = None
    mean: Optional[float] = None
    var: Optional[float] = None
    log_mean: Optional[float] = None
    log_var: Optional[float] = None
    L: Optional[float] = None
    value: Optional[float] = None
    rate: Optional[float] = None

    @model_validator(mode="after")
    def check_hyperparameters(self):
        for name in _REQUIRED_FIELDS[self.kind]:
            value = getattr(self, name)
            if value is None or not math.isfinite(value):
                raise ValueError(f"{self.kind} marginal needs a finite '{name}'")
        if self.kind == "uniform" and not self.lo < self.hi:
            raise ValueError("uniform marginal needs lo < hi")
        if self.kind == "normal" and self.var <= 0:
            raise ValueError("normal marginal needs var > 0")
        if self.kind == "lognormal" and self.log_var <= 0:
            raise ValueError("lognormal marginal needs log_var > 0")
        if self.kind == "triangular" and self.L <= 0:
            raise ValueError("triangular marginal needs L > 0")
        if self.kind == "poisson" and self.rate <= 0:
            raise ValueError("poisson marginal needs rate > 0")
        return self

    @property
    def center(self) -> float:
        """Prior mean, used for point-prior (locally optimal) variants."""
        if self.kind == "uniform":
            return 0.5 * (self.lo + self.hi)
        if self.kind == "normal":
            return self.mean
        if self.kind == "lognormal":
            return math.exp(self.log_mean + 0.5 * self.log_var)
        if self.kind == "triangular":
            return self.L / 3.0
        if self.kind == "point":
            return self.value
        return self.rate


class ParameterPrior(BaseModel):
    name: str
    marginal: Marginal


class NestedUniform(BaseModel):
    """Group effects omega[g, r] ~ U[-lambda_r, lambda_r], lambda_r a named parameter."""

    half_widths: List[str]
    groups: int = Field(ge=1)
    prefix: str = "omega"


class PriorSpec(BaseModel):
    parameters: List[ParameterPrior]
    nested: Optional[NestedUniform] = None

    @model_validator(mode="after")
    def check_nesting(self):
        names = [p.name for p in self.parameters]
        if len(set(names)) != len(names):
            raise ValueError("parameter names must be unique")
        if self.nested is not None:
            missing = [h for h in self.nested.half_widths if h not in names]
            if missing:
                raise ValueError(f"nested half-widths reference unknown parameters: {missing}")
        return self

    @property
    def names(self) -> List[str]:
        names = [p.name for p in self.parameters]
        if self.nested is not None:
            for g in range(self.nested.groups):
                names.extend(f"{self.nested.prefix}{g}_{r}" for r in range(len(self.nested.half_widths)))
        return names

    @property
    def dimension(self) -> int:
        return len(self.names)


class CoordinateDomain(BaseModel):
    lo: float
    hi: float
    levels: Optional[Tuple[float, ...]] = None

    @model_validator(mode="after")
    def check_interval(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or not self.lo < self.hi:
            raise ValueError("coordinate domain needs finite lo < hi")
        if self.levels is not None:
            if len(self.levels) == 0:
                raise ValueError("discrete domain needs at least one level")
            if any(not (self.lo <= x <= self.hi) for x in self.levels):
                raise ValueError("discrete levels must lie inside [lo, hi]")
        return self

    @property
    def length(self) -> float:
        return self.hi - self.lo


class NestedMcConfig(BaseModel):
    B: int = Field(default=1000, ge=2)
    inner_B: int = Field(default=1000, ge=1)


class AceConfig(BaseModel):
    B: int = Field(default=20000, ge=2)
    B_emulator: int = Field(default=1000, ge=2)
    inner_B: Optional[int] = Field(default=None, ge=1)
    inner_B_emulator: Optional[int] = Field(default=None, ge=1)
    m: int = Field(default=20, ge=3)
    N_I: int = Field(default=20, ge=1)
    N_II: int = Field(default=100, ge=1)
    M: int = Field(default=20, ge=1)
    C: int = Field(default=20, ge=1)
    n_grid: int = Field(default_factory=lambda: settings.n_grid, ge=1)
    phase2_enabled: bool = True

    def comparison_mc(self) -> NestedMcConfig:
        return NestedMcConfig(B=self.B, inner_B=self.inner_B or self.B)

    def emulator_mc(self) -> NestedMcConfig:
        return NestedMcConfig(B=self.B_emulator, inner_B=self.inner_B_emulator or self.B_emulator)


class TraceRecord(BaseModel):
    start: int = 0
    phase: Literal["I", "II"]
    sweep: int
    index: int
    utility_estimate: float
    p_accept: float = Field(ge=0.0, le=1.0)
    accepted: bool
    skipped: bool = False


ModelName = Literal[
    "poisson_toy",
    "normal_mean",
    "compartmental",
    "compartmental_drs",
    "logistic",
    "hierarchical_logistic",
    "dose_response",
]

UtilityName = Literal["sig", "nsel", "pseudo_d", "pseudo_a", "nsel_ld50"]


class ModelConfig(BaseModel):
    name: ModelName
    n: int = Field(default=1, ge=1)
    groups: int = Field(default=1, ge=1)
    group_size: Optional[int] = Field(default=None, ge=1)
    constrained: bool = True
    point_prior: bool = False
    levels: Optional[int] = Field(default=None, ge=1)
    noise_var: float = Field(default=1.0, gt=0)
    prior_var: float = Field(default=1.0, gt=0)
    drs_bounds: Tuple[float, float] = (0.01, 5.0)
    posterior_path: Optional[str] = None
    poisson_mean: float = Field(default=60.0, gt=0)
    fisher_mc_size: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def check_groups(self):
        if self.name == "hierarchical_logistic" and self.group_size is not None:
            if self.n != self.groups * self.group_size:
                raise ValueError("hierarchical logistic needs n = groups * group_size")
        lo, hi = self.drs_bounds
        if not 0 < lo < hi:
            raise ValueError("drs_bounds must satisfy 0 < lo < hi")
        return self


# Which utilities each model can feed.
COMPATIBLE_UTILITIES = {
    "poisson_toy": {"sig", "nsel", "pseudo_d", "pseudo_a"},
    "normal_mean": {"sig", "nsel", "pseudo_d", "pseudo_a"},
    "compartmental": {"sig", "nsel", "pseudo_d", "pseudo_a"},
    "compartmental_drs": {"sig", "nsel", "pseudo_d", "pseudo_a"},
    "logistic": {"sig", "nsel", "pseudo_d", "pseudo_a"},
    "hierarchical_logistic": {"sig", "nsel", "pseudo_d", "pseudo_a"},
    "dose_response": {"nsel_ld50"},
}


class ProblemConfig(BaseModel):
    schema_version: Literal[1] = 1
    model: ModelConfig
    utility: UtilityName
    ace: AceConfig = AceConfig()
    seed: int = Field(default=0, ge=0, lt=2**64)
    output_dir: Optional[str] = None
    initial_design: Optional[str] = None

    @model_validator(mode="after")
    def check_compatibility(self):
        allowed = COMPATIBLE_UTILITIES[self.model.name]
        if self.utility not in allowed:
            raise ValueError(
                f"utility '{self.utility}' is not available for model '{self.model.name}' "
                f"(choose from {sorted(allowed)})"
            )
        if self.model.name == "dose_response" and not self.model.posterior_path:
            raise ValueError("dose_response model needs posterior_path")
        return self

    @field_validator("output_dir")
    @classmethod
    def strip_output_dir(cls, value: Optional[str]) -> Optional[str]:
        return value.strip() if value else value

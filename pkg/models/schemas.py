from typing import Dict, List, Optional, Union

from pydantic import BaseModel, Field, validator

from config import config

# A complex literal in a run config: a bare real number or [re, im]
ComplexLiteral = Union[float, List[float]]


def to_complex(value: ComplexLiteral) -> complex:
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ValueError("complex numbers are written as [re, im]")
        return complex(float(value[0]), float(value[1]))
    return complex(float(value))


class QuadConfig(BaseModel):
    panel_order: int = config.QUAD_PANEL_ORDER
    panel_width: float = config.QUAD_PANEL_WIDTH
    tail_tol: float = config.QUAD_TAIL_TOL
    max_interval: float = config.QUAD_MAX_INTERVAL

    class Config:
        allow_mutation = False

    @validator("panel_order")
    def _order_at_least_four(cls, v):
        if v < 4:
            raise ValueError("panel order must be at least 4")
        return v

    @validator("panel_width", "tail_tol", "max_interval")
    def _positive(cls, v):
        if v <= 0:
            raise ValueError("must be positive")
        return v


class PicardSettings(BaseModel):
    tol: float = config.PICARD_TOL
    max_iter: int = config.PICARD_MAX_ITER
    ball_radius: float = Field(config.PICARD_BALL_RADIUS, alias="M")
    force: bool = False

    class Config:
        allow_population_by_field_name = True

    @validator("tol", "ball_radius")
    def _positive(cls, v):
        if v <= 0:
            raise ValueError("must be positive")
        return v

    @validator("max_iter")
    def _at_least_one(cls, v):
        if v < 1:
            raise ValueError("must be at least 1")
        return v


class OutputSettings(BaseModel):
    csv_dir: str = "out"
    json_report: str = "out/report.json"


class RunConfig(BaseModel):
    """Validated contents of a TOML run configuration."""

    order: int
    coefficients: List[ComplexLiteral]
    perturbations: List[str]
    t0: float
    t_end: float
    step: float
    lam: Union[ComplexLiteral, str] = Field("index:0", alias="lambda")
    quad: QuadConfig = QuadConfig()
    picard: PicardSettings = PicardSettings()
    ladder_depth: int = 2
    beta: Optional[float] = None
    formula: str = "general"
    seed: int = config.RANDOM_SEED
    output: OutputSettings = OutputSettings()

    class Config:
        allow_population_by_field_name = True

    @validator("order")
    def _order_at_least_two(cls, v):
        if v < 2:
            raise ValueError("order must be at least 2")
        return v

    @validator("coefficients")
    def _coefficients_match_order(cls, v, values):
        for a in v:
            to_complex(a)
        n = values.get("order")
        if n is not None and len(v) != n:
            raise ValueError(f"expected {n} coefficients a0..a{n - 1}, got {len(v)}")
        return v

    @validator("perturbations")
    def _perturbations_match_order(cls, v, values):
        n = values.get("order")
        if n is not None and len(v) != n:
            raise ValueError(f"expected {n} perturbation expressions r0..r{n - 1}, got {len(v)}")
        return v

    @validator("t_end")
    def _t_end_after_t0(cls, v, values):
        t0 = values.get("t0")
        if t0 is not None and v <= t0:
            raise ValueError("t_end must be greater than t0")
        return v

    @validator("step")
    def _positive_step(cls, v):
        if v <= 0:
            raise ValueError("step must be positive")
        return v

    @validator("lam")
    def _lambda_selector(cls, v):
        if isinstance(v, str):
            if not v.startswith("index:") or not v[len("index:"):].lstrip("-").isdigit():
                raise ValueError("lambda selector must be 'index:k' or a complex literal")
        else:
            to_complex(v)
        return v

    @validator("ladder_depth")
    def _ladder_depth(cls, v):
        if v < 1:
            raise ValueError("ladder depth must be at least 1")
        return v

    @validator("beta")
    def _beta_positive(cls, v):
        if v is not None and v <= 0:
            raise ValueError("beta must be positive")
        return v

    @validator("formula")
    def _known_formula(cls, v):
        kinds = ("general", "levinson", "hartman_wintner", "refined", "refined_second", "ladder")
        if v not in kinds:
            raise ValueError(f"formula must be one of {', '.join(kinds)}")
        return v

    def complex_coefficients(self) -> List[complex]:
        return [to_complex(a) for a in self.coefficients]

    def root_selector(self) -> Union[int, complex]:
        """Index into the sorted roots for "index:k", otherwise the explicit value."""
        if isinstance(self.lam, str):
            return int(self.lam[len("index:"):])
        return to_complex(self.lam)


class ContractionReport(BaseModel):
    """Constants of the contraction argument evaluated on a grid."""

    M: float
    m_M: float
    xi_profile: List[float]
    L0: float
    L_beta: float
    Q0: float
    Q_beta: float
    gamma_tilde: float
    eps0: float
    K: float
    gpr: bool
    cl0: bool
    cl: bool
    t_cl0: Optional[float] = None
    beta: float
    certified_radius: Optional[float] = None
    eps0_certified: Optional[float] = None

    @property
    def N(self) -> Optional[float]:
        """Bound constant 1/(1-2K), undefined once K reaches 1/2."""
        if self.K >= 0.5:
            return None
        return 1.0 / (1.0 - 2.0 * self.K)

    def summary(self) -> Dict[str, Union[float, bool, None]]:
        data = self.dict(exclude={"xi_profile"})
        data["N"] = self.N
        return data

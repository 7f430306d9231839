import math
from pathlib import Path
from typing import List, Optional

import numpy as np
from dotenv import dotenv_values
from pydantic import AliasChoices, BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from aee_lab.core.config import settings
from aee_lab.core.exceptions import ConfigError
from aee_lab.models.integrators import SodeDriftKind
from aee_lab.models.nonlinearity import NonlinearityKind

DEFAULT_COEFS = {
    NonlinearityKind.ZERO: 0.0,
    NonlinearityKind.LINEAR: 0.5,
    NonlinearityKind.SINE: 1.0,
}


def _split_list(v):
    if isinstance(v, str):
        return [item.strip() for item in v.split(",") if item.strip()]
    return v


def _parse_matrix(v):
    if isinstance(v, str):
        rows = [row for row in v.split(";") if row.strip()]
        return [[float(x) for x in row.split(",")] for row in rows]
    return v


class ExperimentConfig(BaseModel):
    """Experiment parameters read from a flat key=value file.

    Keys are case-insensitive; ``sode_*`` keys configure the finite-dimensional
    experiment. Lists are comma separated and matrices use ``;`` between rows.
    """
    model_config = ConfigDict(extra="forbid")

    preset: NonlinearityKind = NonlinearityKind.SINE
    nl_coef: Optional[float] = Field(None, description="a for sine, c for linear; preset default when absent")
    n: int = Field(settings.DEFAULT_N, ge=1)
    rho_decay: float = Field(settings.DEFAULT_RHO_DECAY, gt=0.0)
    beta: float = settings.DEFAULT_BETA
    alpha: float = Field(2.0, gt=0.0)
    horizon: float = Field(settings.DEFAULT_T, gt=0.0, validation_alias=AliasChoices("horizon", "t"), description="T")
    x0: str = Field("e1", description="'zero', 'e<k>' or comma separated coefficients")

    m_list: List[int] = Field(default_factory=lambda: list(settings.DEFAULT_M_LIST))
    distribution_m_list: List[int] = Field(default_factory=lambda: list(settings.DEFAULT_DISTRIBUTION_M_LIST))
    refine: int = Field(settings.DEFAULT_REFINE, ge=1)
    replicas: int = Field(settings.DEFAULT_REPLICAS, ge=2)
    proj_dim: int = Field(settings.DEFAULT_PROJ_DIM, ge=1)
    master_seed: int = Field(settings.DEFAULT_MASTER_SEED, ge=0, lt=2**64)
    iota: float = Field(settings.DEFAULT_IOTA, gt=0.0)
    fully_discrete: bool = True
    output_dir: Path = settings.OUTPUT_DIR

    order_band: List[float] = Field(default_factory=lambda: list(settings.ORDER_BAND))
    max_log_residual: float = settings.MAX_LOG_RESIDUAL
    significance_level: float = Field(settings.SIGNIFICANCE_LEVEL, gt=0.0, lt=1.0)
    n_se: float = Field(settings.N_STANDARD_ERRORS, gt=0.0)
    rel_var_tol: float = 0.10
    rel_var_modes: int = 3

    sode_c: List[List[float]] = Field(default_factory=lambda: [[-1.0, 0.0], [0.0, -2.0]])
    sode_b: SodeDriftKind = SodeDriftKind.LINEAR
    sode_b_matrix: List[List[float]] = Field(default_factory=lambda: [[0.3, 0.2], [0.2, 0.3]])
    sode_coef: float = 0.5
    sode_y0: List[float] = Field(default_factory=lambda: [1.0, 1.0])
    sode_m_list: List[int] = Field(default_factory=lambda: list(settings.DEFAULT_M_LIST))

    @field_validator("m_list", "distribution_m_list", "sode_m_list", "order_band", "sode_y0", mode="before")
    @classmethod
    def comma_lists(cls, v):
        return _split_list(v)

    @field_validator("sode_c", "sode_b_matrix", mode="before")
    @classmethod
    def matrices(cls, v):
        return _parse_matrix(v)

    @field_validator("m_list", "distribution_m_list", "sode_m_list")
    @classmethod
    def positive_steps(cls, v):
        if not v or any(m < 1 for m in v):
            raise ValueError("step counts must be positive")
        return sorted(v)

    @model_validator(mode="after")
    def band_and_projection(self):
        if len(self.order_band) != 2 or self.order_band[0] >= self.order_band[1]:
            raise ValueError("order_band must be 'low,high' with low < high")
        if self.proj_dim > self.n:
            raise ValueError(f"proj_dim={self.proj_dim} exceeds n={self.n}")
        return self

    @property
    def coef(self) -> float:
        return DEFAULT_COEFS[self.preset] if self.nl_coef is None else self.nl_coef

    def initial_coefficients(self) -> np.ndarray:
        text = self.x0.strip().lower()
        x0 = np.zeros(self.n)
        if text == "zero":
            return x0
        if text.startswith("e") and text[1:].isdigit():
            k = int(text[1:])
            if not 1 <= k <= self.n:
                raise ConfigError(f"x0={self.x0} is outside modes 1..{self.n}")
            x0[k - 1] = 1.0
            return x0
        try:
            values = [float(x) for x in _split_list(self.x0)]
        except ValueError as e:
            raise ConfigError(f"Cannot parse x0={self.x0!r}: {e}")
        if len(values) > self.n:
            raise ConfigError(f"x0 has {len(values)} coefficients but n={self.n}")
        x0[: len(values)] = values
        return x0

    def iota_bound(self) -> float:
        return 2.0 / (self.alpha * self.beta)

    def check_iota(self) -> None:
        """Hard check for the fully discrete scaling n = floor(m^iota)."""
        bound = self.iota_bound()
        if not self.iota > bound:
            raise ConfigError(
                f"iota={self.iota} violates iota > 2/(alpha*beta) = 2/({self.alpha}*{self.beta}) = {bound:.6g}"
            )

    def galerkin_modes(self, m: int) -> int:
        """n = floor(m^iota), capped at the configured mode count."""
        if not self.fully_discrete:
            return self.n
        # the small offset keeps exact powers such as 256^0.75 = 64 from rounding down
        return max(1, min(self.n, int(math.floor(m ** self.iota + 1e-9))))

    @classmethod
    def from_file(cls, path: Path, **overrides) -> "ExperimentConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"Config file not found: {path}")
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            stripped = line.strip()
            if stripped and not stripped.startswith("#") and "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {stripped!r}")
        values = {key.strip().lower(): value for key, value in dotenv_values(path).items() if value is not None}
        values.update({key: value for key, value in overrides.items() if value is not None})
        return cls.parse_values(values)

    @classmethod
    def parse_values(cls, values: dict) -> "ExperimentConfig":
        try:
            return cls.model_validate(values)
        except ValidationError as e:
            raise ConfigError(f"Invalid experiment configuration: {e}")

from typing import List, Optional

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from aee_lab.models.base import ArrayModel, frozen_array


class Ensemble(ArrayModel):
    """Terminal-time projections <., e_i>, i = 1..proj_dim, one row per replica."""
    samples: np.ndarray = Field(..., description="Array of shape (N, proj_dim)")
    replica_ids: np.ndarray = Field(..., description="Stream id of each row, ascending")
    label: str = Field(..., description="U^m or U")
    fingerprint: str = Field(..., description="Hash of model, grid and seed domain")
    m: Optional[int] = None
    galerkin_modes: Optional[int] = None
    full_norm_sq: Optional[np.ndarray] = Field(None, description="Unnormalised squared full-norm errors per replica")

    @field_validator("samples", "full_norm_sq", mode="before")
    @classmethod
    def read_only(cls, v):
        return None if v is None else frozen_array(v)

    @field_validator("replica_ids", mode="before")
    @classmethod
    def ids_read_only(cls, v):
        return frozen_array(v, dtype=np.int64)

    @model_validator(mode="after")
    def two_replicas(self):
        if self.samples.ndim != 2 or self.samples.shape[0] < 2:
            raise ValueError("an ensemble needs at least two replicas of equal dimension")
        if self.replica_ids.shape != (self.samples.shape[0],):
            raise ValueError("one replica id per sample row is required")
        return self

    @property
    def N(self) -> int:
        return int(self.samples.shape[0])

    @property
    def proj_dim(self) -> int:
        return int(self.samples.shape[1])


class Moments(ArrayModel):
    mean: np.ndarray
    standard_error: np.ndarray
    covariance: np.ndarray
    N: int


class KSResult(BaseModel):
    statistic: float = Field(..., ge=0.0, le=1.0)
    p_value: float = Field(..., ge=0.0, le=1.0)


class OrderFit(BaseModel):
    """Least squares fit of log(rms) against log(m)."""
    slope: float
    intercept: float
    order: float = Field(..., description="-slope")
    residuals: List[float]
    max_residual: float
    order_low: float = Field(..., description="Lower end of the 95% band on the order")
    order_high: float = Field(..., description="Upper end of the 95% band on the order")


class StatRow(BaseModel):
    """One line of a long-format report."""
    metric: str
    coordinate: str
    value: float
    tolerance: float
    passed: bool


class StatReport(BaseModel):
    label: str
    rows: List[StatRow] = Field(default_factory=list)
    significance_level: Optional[float] = Field(None, description="Per-coordinate level after Bonferroni correction")
    degenerate: bool = False
    passed: bool = True
    notes: List[str] = Field(default_factory=list)

    def add(self, metric: str, coordinate: str, value: float, tolerance: float, passed: bool) -> None:
        self.rows.append(
            StatRow(metric=metric, coordinate=coordinate, value=float(value),
                    tolerance=float(tolerance), passed=bool(passed))
        )
        if not passed:
            self.passed = False

    def failures(self) -> List[StatRow]:
        return [row for row in self.rows if not row.passed]

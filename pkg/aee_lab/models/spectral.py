from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, Field, field_validator

from aee_lab.models.base import ArrayModel, frozen_array

# A spectral field is a float64 array whose last axis holds the coefficients of
# e_1..e_n; leading axes, when present, index replicas.
SpectralField = np.ndarray


class BasisKind(str, Enum):
    """Eigenbasis the diagonal operator is expressed in."""
    DIRICHLET_SINE = "dirichlet_sine"
    MATRIX_EIGEN = "matrix_eigen"


class SpectralOperator(ArrayModel):
    """Diagonal operator -A with eigenvalues lambda_1 <= ... <= lambda_n."""
    eigenvalues: np.ndarray = Field(..., description="Positive, non-decreasing eigenvalues of -A (1/time)")
    basis_kind: BasisKind = Field(BasisKind.DIRICHLET_SINE, description="Eigenbasis of the operator")

    @field_validator("eigenvalues", mode="before")
    @classmethod
    def eigenvalues_positive_sorted(cls, v):
        array = frozen_array(v)
        if array.ndim != 1 or array.size == 0:
            raise ValueError("eigenvalues must be a non-empty vector")
        if not np.all(np.isfinite(array)) or np.any(array <= 0.0):
            raise ValueError("eigenvalues must be finite and strictly positive")
        if np.any(np.diff(array) < 0.0):
            raise ValueError("eigenvalues must be non-decreasing")
        return array

    @property
    def n(self) -> int:
        return int(self.eigenvalues.size)


class AssumptionParams(BaseModel):
    """Regularity parameters of the standing assumptions.

    Ranges are not enforced here; ``validate_regime`` reports violations.
    """
    beta: float = Field(2.0, description="Noise regularity exponent, expected in (1, 2]")
    rho_decay: float = Field(2.0, gt=0.0, description="Q eigenvalue decay exponent, q_i = lambda_i^-rho")
    L: float = Field(1.0, ge=0.0, description="Lipschitz / linear growth constant of F")
    eta: float = Field(1.0, description="Expected in [1, 2)")
    delta: float = Field(1.0, description="Expected in [1, 2)")
    sigma: float = Field(1.0, description="Expected in [0, beta)")
    alpha: float = Field(2.0, gt=0.0, description="Eigenvalue growth exponent, lambda_n ~ n^alpha")


class RegimeReport(BaseModel):
    """Outcome of checking the assumption parameters against a truncated model."""
    passed: bool
    beta_in_range: bool
    decay_summable: bool
    alpha_consistent: bool
    proof_params_in_range: bool
    hilbert_schmidt_sum: float = Field(..., description="Truncated sum of lambda_i^(beta-1) q_i")
    tail_estimate: float = Field(..., description="Integral estimate of the neglected tail; inf if divergent")
    messages: list[str] = Field(default_factory=list)
    summability_exponent: Optional[float] = None

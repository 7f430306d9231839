from enum import Enum
from typing import Optional

import numpy as np
from pydantic import Field, field_validator, model_validator

from aee_lab.models.base import ArrayModel, frozen_array
from aee_lab.models.nonlinearity import Nonlinearity, NoiseSpec
from aee_lab.models.spectral import AssumptionParams, SpectralOperator

SYMMETRY_RTOL = 1e-12


class ModelSpec(ArrayModel):
    """Truncated semilinear SPDE dX = AX dt + F(X) dt + dW^Q on n modes."""
    op: SpectralOperator
    nl: Nonlinearity = Field(default_factory=Nonlinearity)
    noise: NoiseSpec
    params: AssumptionParams = Field(default_factory=AssumptionParams)
    T: float = Field(1.0, gt=0.0, description="Horizon")
    X0: np.ndarray = Field(..., description="Initial coefficients")

    @field_validator("X0", mode="before")
    @classmethod
    def initial_finite(cls, v):
        array = frozen_array(v)
        if array.ndim != 1 or not np.all(np.isfinite(array)):
            raise ValueError("X0 must be a finite coefficient vector")
        return array

    @model_validator(mode="after")
    def shared_mode_count(self):
        if not (self.op.n == self.noise.n == self.X0.size):
            raise ValueError(
                f"mode counts disagree: op={self.op.n}, noise={self.noise.n}, X0={self.X0.size}"
            )
        return self

    @property
    def n(self) -> int:
        return self.op.n


class Trajectory(ArrayModel):
    """States sampled at increasing times starting at 0; states have shape (len(times), ..., n)."""
    times: np.ndarray
    states: np.ndarray

    @field_validator("times", "states", mode="before")
    @classmethod
    def read_only(cls, v):
        return frozen_array(v)

    @model_validator(mode="after")
    def times_increasing(self):
        if self.times.ndim != 1 or self.times.size == 0 or self.times[0] != 0.0:
            raise ValueError("times must be a vector starting at 0")
        if np.any(np.diff(self.times) <= 0.0):
            raise ValueError("times must be strictly increasing")
        if self.states.shape[0] != self.times.size:
            raise ValueError("one state per time point is required")
        return self

    @property
    def terminal(self) -> np.ndarray:
        return self.states[-1]


class SodeDriftKind(str, Enum):
    ZERO = "zero"
    LINEAR = "linear"
    SINE = "sine"


class SodeDrift(ArrayModel):
    """Drift b of the finite-dimensional model with its Jacobian and Laplacian vector.

    ``LINEAR`` uses b(y) = B y; ``SINE`` acts componentwise, b(y)_k = a sin(y_k).
    """
    kind: SodeDriftKind = SodeDriftKind.ZERO
    B: Optional[np.ndarray] = None
    coef: float = 1.0

    @field_validator("B", mode="before")
    @classmethod
    def matrix_read_only(cls, v):
        return None if v is None else frozen_array(v)

    @model_validator(mode="after")
    def linear_needs_matrix(self):
        if self.kind == SodeDriftKind.LINEAR:
            if self.B is None or self.B.ndim != 2 or self.B.shape[0] != self.B.shape[1]:
                raise ValueError("linear drift requires a square matrix B")
        return self

    def b(self, y: np.ndarray) -> np.ndarray:
        if self.kind == SodeDriftKind.LINEAR:
            return y @ self.B.T
        if self.kind == SodeDriftKind.SINE:
            return self.coef * np.sin(y)
        return np.zeros_like(y)

    def jacobian(self, y: np.ndarray) -> np.ndarray:
        """b'(y) with shape (..., d, d)."""
        d = y.shape[-1]
        if self.kind == SodeDriftKind.LINEAR:
            return np.broadcast_to(self.B, y.shape[:-1] + (d, d))
        if self.kind == SodeDriftKind.SINE:
            return self.coef * np.cos(y)[..., :, None] * np.eye(d)
        return np.zeros(y.shape[:-1] + (d, d))

    def laplacian(self, y: np.ndarray) -> np.ndarray:
        """Sum over i of the second derivative of b in direction x_i."""
        if self.kind == SodeDriftKind.SINE:
            return -self.coef * np.sin(y)
        return np.zeros_like(y)


class SodeModel(ArrayModel):
    """dY = CY dt + b(Y) dt + dW with C symmetric negative definite."""
    C: np.ndarray
    drift: SodeDrift = Field(default_factory=SodeDrift)
    T: float = Field(1.0, gt=0.0)
    Y0: np.ndarray

    @field_validator("C", "Y0", mode="before")
    @classmethod
    def read_only(cls, v):
        return frozen_array(np.atleast_1d(v))

    @model_validator(mode="after")
    def negative_definite(self):
        C = self.C
        if C.ndim != 2 or C.shape[0] != C.shape[1]:
            raise ValueError("C must be a square matrix")
        if not np.all(np.isfinite(C)):
            raise ValueError("C must be finite")
        scale = max(float(np.linalg.norm(C)), 1.0)
        if np.linalg.norm(C - C.T) > SYMMETRY_RTOL * scale:
            raise ValueError("C must be symmetric")
        if np.max(np.linalg.eigvalsh(C)) >= 0.0:
            raise ValueError("C must be negative definite")
        if self.Y0.shape != (C.shape[0],):
            raise ValueError("Y0 must have one entry per row of C")
        if self.drift.B is not None and self.drift.kind == SodeDriftKind.LINEAR and self.drift.B.shape != C.shape:
            raise ValueError("B must have the shape of C")
        return self

    @property
    def d(self) -> int:
        return int(self.C.shape[0])

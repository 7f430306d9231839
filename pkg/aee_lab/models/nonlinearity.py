from enum import Enum

import numpy as np
from pydantic import BaseModel, Field, field_validator

from aee_lab.models.base import ArrayModel, frozen_array
from aee_lab.models.spectral import SpectralOperator


class NonlinearityKind(str, Enum):
    ZERO = "zero"
    LINEAR = "linear"
    SINE = "sine"


class Nonlinearity(BaseModel):
    """Scalar function f inducing the Nemytskii operator F(u)(x) = f(u(x)).

    ``coef`` is c for ``LINEAR`` (f(x) = c x) and a for ``SINE`` (f(x) = a sin x).
    Linear f has unbounded f itself but bounded f' and f'' = 0, which is all the
    error analysis uses.
    """
    kind: NonlinearityKind = Field(NonlinearityKind.SINE, description="Preset family of f")
    coef: float = Field(1.0, description="c for linear, a for sine; ignored for zero")

    model_config = {"frozen": True}

    @property
    def is_zero(self) -> bool:
        return self.kind == NonlinearityKind.ZERO or self.coef == 0.0

    def f(self, x: np.ndarray) -> np.ndarray:
        if self.kind == NonlinearityKind.LINEAR:
            return self.coef * x
        if self.kind == NonlinearityKind.SINE:
            return self.coef * np.sin(x)
        return np.zeros_like(x)

    def df(self, x: np.ndarray) -> np.ndarray:
        if self.kind == NonlinearityKind.LINEAR:
            return np.full_like(x, self.coef)
        if self.kind == NonlinearityKind.SINE:
            return self.coef * np.cos(x)
        return np.zeros_like(x)

    def d2f(self, x: np.ndarray) -> np.ndarray:
        if self.kind == NonlinearityKind.SINE:
            return -self.coef * np.sin(x)
        return np.zeros_like(x)

    @property
    def derivative_bound(self) -> float:
        """sup |f'|, which is also sup |f''| for the sine preset."""
        if self.kind == NonlinearityKind.ZERO:
            return 0.0
        return abs(self.coef)


class NoiseSpec(ArrayModel):
    """Eigenvalues q_k of Q against h_k = e_k."""
    q: np.ndarray = Field(..., description="Nonnegative Q eigenvalues, one per mode")

    @field_validator("q", mode="before")
    @classmethod
    def q_nonnegative(cls, v):
        array = frozen_array(v)
        if array.ndim != 1 or array.size == 0:
            raise ValueError("q must be a non-empty vector")
        if not np.all(np.isfinite(array)) or np.any(array < 0.0):
            raise ValueError("q must be finite and nonnegative")
        return array

    @property
    def n(self) -> int:
        return int(self.q.size)

    @property
    def trace(self) -> float:
        return float(np.sum(self.q))

    @property
    def sqrt_q(self) -> np.ndarray:
        return np.sqrt(self.q)

    @classmethod
    def power_decay(cls, op: SpectralOperator, rho_decay: float) -> "NoiseSpec":
        """Q = (-A)^-rho, i.e. q_i = lambda_i^-rho."""
        return cls(q=op.eigenvalues ** (-rho_decay))

    @classmethod
    def silent(cls, n: int) -> "NoiseSpec":
        return cls(q=np.zeros(n))

from enum import IntEnum
from typing import Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from aee_lab.models.base import ArrayModel, frozen_array


class NoiseDomain(IntEnum):
    """Sub-stream domains of the counter-based generator."""
    W = 0
    W_TILDE = 1


class GridSpec(BaseModel):
    """Nested time grid: m coarse steps of size tau, each split into R fine steps."""
    T: float = Field(1.0, gt=0.0, description="Horizon")
    m: int = Field(..., ge=1, description="Coarse step count")
    refine: int = Field(1, ge=1, description="Fine steps per coarse step")

    model_config = {"frozen": True}

    @property
    def fine_steps(self) -> int:
        return self.m * self.refine

    @property
    def h(self) -> float:
        return self.T / self.fine_steps

    @property
    def tau(self) -> float:
        return self.T / self.m

    def fine_times(self) -> np.ndarray:
        return np.arange(self.fine_steps + 1) * self.h

    def steps_per_coarse(self, coarse_m: int) -> int:
        """Fine steps inside one step of a coarse grid with ``coarse_m`` steps."""
        if coarse_m < 1 or self.fine_steps % coarse_m != 0:
            raise ValueError(f"coarse step count {coarse_m} does not divide {self.fine_steps} fine steps")
        return self.fine_steps // coarse_m


class NoiseTable(ArrayModel):
    """Unit-q Brownian increments and exact convolution increments per mode and fine step.

    Arrays have shape (..., n, steps); a leading axis, when present, stacks
    replicas in the order of ``stream_ids``.
    """
    db: np.ndarray = Field(..., description="Brownian increments")
    conv: np.ndarray = Field(..., description="Convolution increments over each fine step")
    h: float = Field(..., gt=0.0)
    master_seed: int = Field(..., ge=0)
    stream_ids: Tuple[int, ...]
    domain: NoiseDomain = NoiseDomain.W

    @field_validator("db", "conv", mode="before")
    @classmethod
    def read_only(cls, v):
        return frozen_array(v)

    @model_validator(mode="after")
    def shapes_agree(self):
        if self.db.shape != self.conv.shape or self.db.ndim not in (2, 3):
            raise ValueError("db and conv must share a shape (n, steps) or (batch, n, steps)")
        expected = self.db.shape[0] if self.db.ndim == 3 else 1
        if len(self.stream_ids) != expected:
            raise ValueError("stream_ids must match the leading batch axis")
        return self

    @property
    def n(self) -> int:
        return int(self.db.shape[-2])

    @property
    def steps(self) -> int:
        return int(self.db.shape[-1])

    @property
    def batch_shape(self) -> Tuple[int, ...]:
        return tuple(self.db.shape[:-2])

    @property
    def stream_id(self) -> int:
        return self.stream_ids[0]

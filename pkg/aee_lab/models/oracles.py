import numpy as np

from aee_lab.models.base import ArrayModel


class LinearLimitMoments(ArrayModel):
    """Gaussian law of (X_i(t), U_i(t)) per mode for a linear nonlinearity."""
    t: float
    mean: np.ndarray  # (n, 2)
    covariance: np.ndarray  # (n, 2, 2)

    @property
    def var_u(self) -> np.ndarray:
        return self.covariance[:, 1, 1]

    @property
    def var_x(self) -> np.ndarray:
        return self.covariance[:, 0, 0]

    @property
    def cov_xu(self) -> np.ndarray:
        return self.covariance[:, 0, 1]

    @property
    def mean_u(self) -> np.ndarray:
        return self.mean[:, 1]


class OUMoments(ArrayModel):
    t: float
    mean: np.ndarray
    variance: np.ndarray


class SodeLimitMoments(ArrayModel):
    """Gaussian law of the stacked vector (Y(t), M(t)) of length 2d."""
    t: float
    mean: np.ndarray
    covariance: np.ndarray

    @property
    def d(self) -> int:
        return int(self.mean.size // 2)

    @property
    def m_mean(self) -> np.ndarray:
        return self.mean[self.d:]

    @property
    def m_covariance(self) -> np.ndarray:
        return self.covariance[self.d:, self.d:]


class SchemeErrorMoments(ArrayModel):
    """Exact law of U^m_i(T) = m (X^m_i(T) - X_i(T)) per mode at a finite step count.

    The reference X is the fine-grid scheme, so the law depends on both m and
    the fine steps per coarse step.
    """
    m: int
    steps_per_coarse: int
    mean: np.ndarray  # (n,)
    variance: np.ndarray  # (n,)

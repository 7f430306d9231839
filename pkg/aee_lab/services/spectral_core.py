"""Diagonal spectral calculus for the Dirichlet Laplacian on (0, 1).

Fields are arrays whose last axis holds coefficients against
e_i(x) = sqrt(2) sin(i pi x); every operation broadcasts over leading
(replica) axes. The physical grid is x_j = j / (n + 1), j = 1..n, on which
the discrete sine transform is exactly orthogonal:

    values = F v,   v = F^T values / (n + 1),   F[j, i] = sqrt(2) sin(i j pi / (n + 1)).
"""

import logging
from functools import lru_cache
from typing import Tuple

import numpy as np
from pydantic import ValidationError

from aee_lab.core.exceptions import InvalidArgumentError
from aee_lab.models.spectral import BasisKind, SpectralField, SpectralOperator

logger = logging.getLogger(__name__)


def make_dirichlet_laplacian(n: int) -> SpectralOperator:
    """-A with lambda_i = pi^2 i^2, i = 1..n."""
    if n < 1:
        raise InvalidArgumentError(f"Mode count must be at least 1, got {n}")
    i = np.arange(1, n + 1, dtype=np.float64)
    return SpectralOperator(eigenvalues=np.pi**2 * i**2, basis_kind=BasisKind.DIRICHLET_SINE)


def make_operator(eigenvalues, basis_kind: BasisKind = BasisKind.MATRIX_EIGEN) -> SpectralOperator:
    try:
        return SpectralOperator(eigenvalues=eigenvalues, basis_kind=basis_kind)
    except ValidationError as e:
        raise InvalidArgumentError(f"Invalid spectrum: {e}")


def _check_paired(op: SpectralOperator, v: SpectralField) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim == 0 or v.shape[-1] != op.n:
        raise InvalidArgumentError(f"Field with trailing size {v.shape[-1:]} is not paired with {op.n} modes")
    return v


def semigroup_apply(op: SpectralOperator, t: float, v: SpectralField) -> SpectralField:
    """E(t) v, i.e. coefficient i multiplied by exp(-lambda_i t)."""
    if t < 0.0:
        raise InvalidArgumentError(f"Semigroup time must be nonnegative, got {t}")
    v = _check_paired(op, v)
    return np.exp(-op.eigenvalues * t) * v


def phi1_weights(op: SpectralOperator, tau: float) -> np.ndarray:
    """(1 - exp(-lambda_i tau)) / lambda_i, free of cancellation as lambda_i tau -> 0."""
    if tau <= 0.0:
        raise InvalidArgumentError(f"Step size must be positive, got {tau}")
    return -np.expm1(-op.eigenvalues * tau) / op.eigenvalues


def phi1_apply(op: SpectralOperator, tau: float, v: SpectralField) -> SpectralField:
    """A^-1 (E(tau) - I) v with the sign convention -A = diag(lambda)."""
    weights = phi1_weights(op, tau)
    return weights * _check_paired(op, v)


def fractional_norm(op: SpectralOperator, v: SpectralField, r: float) -> np.ndarray:
    """||(-A)^(r/2) v|| = sqrt(sum lambda_i^r v_i^2); r may be negative."""
    v = _check_paired(op, v)
    return np.sqrt(np.sum(op.eigenvalues**r * v**2, axis=-1))


def project(v: SpectralField, k: int) -> SpectralField:
    """P_k v: keep the first k coefficients and zero the rest."""
    v = np.asarray(v, dtype=np.float64)
    n = v.shape[-1]
    if not 1 <= k <= n:
        raise InvalidArgumentError(f"Projection rank {k} outside 1..{n}")
    out = v.copy()
    out[..., k:] = 0.0
    return out


def collocation_points(n: int) -> np.ndarray:
    return np.arange(1, n + 1, dtype=np.float64) / (n + 1)


@lru_cache(maxsize=32)
def sine_tables(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Forward matrix F and its inverse F^T / (n + 1), both read-only."""
    if n < 1:
        raise InvalidArgumentError(f"Mode count must be at least 1, got {n}")
    idx = np.arange(1, n + 1, dtype=np.float64)
    forward = np.sqrt(2.0) * np.sin(np.pi * np.outer(idx, idx) / (n + 1))
    inverse = forward.T / (n + 1)
    forward.setflags(write=False)
    inverse.setflags(write=False)
    logger.debug(f"Built {n}x{n} sine transform tables")
    return forward, inverse


def sine_transform_to_physical(v: SpectralField) -> np.ndarray:
    """Values of sum_i v_i sqrt(2) sin(i pi x) at x_j = j / (n + 1)."""
    v = np.asarray(v, dtype=np.float64)
    forward, _ = sine_tables(v.shape[-1])
    return v @ forward.T


def sine_transform_to_spectral(values: np.ndarray) -> SpectralField:
    """Exact inverse of ``sine_transform_to_physical`` on the collocation grid."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 0 or values.shape[-1] < 1:
        raise InvalidArgumentError("At least one collocation value is required")
    _, inverse = sine_tables(values.shape[-1])
    return values @ inverse.T

"""The accelerated exponential Euler scheme for dY = CY dt + b(Y) dt + dW and its limit error equation.

Both solvers diagonalise C = V diag(-lambda) V^T once; in eigen-coordinates
z = V^T y the noise is again a standard Brownian motion, so the noise engine's
unit-q tables drive every eigendirection exactly.
"""

import logging
import math
from typing import Tuple

import numpy as np

from aee_lab.core.exceptions import InvalidArgumentError, NumericOverflowError
from aee_lab.models.integrators import SYMMETRY_RTOL, SodeModel, Trajectory
from aee_lab.models.noise import GridSpec, NoiseTable
from aee_lab.models.nonlinearity import NoiseSpec
from aee_lab.models.spectral import SpectralOperator
from aee_lab.services.integrators import SQRT3_OVER_6
from aee_lab.services.noise_engine import (
    aggregate_all_convolutions,
    build_independent_copy,
    build_noise_table,
)
from aee_lab.services.spectral_core import make_operator, phi1_weights

logger = logging.getLogger(__name__)

EIGEN_RESIDUAL_RTOL = 1e-10


def _symmetric_eigh(C: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise InvalidArgumentError(f"Expected a square matrix, got shape {C.shape}")
    scale = max(float(np.linalg.norm(C)), 1.0)
    if np.linalg.norm(C - C.T) > SYMMETRY_RTOL * scale:
        raise InvalidArgumentError("Matrix is not symmetric")
    eigenvalues, V = np.linalg.eigh(C)
    if np.linalg.norm(C @ V - V * eigenvalues) > EIGEN_RESIDUAL_RTOL * scale:
        raise NumericOverflowError("Eigendecomposition residual too large")
    # deterministic signs: the largest-magnitude entry of each eigenvector is positive
    pivots = V[np.argmax(np.abs(V), axis=0), np.arange(V.shape[1])]
    V = V * np.where(pivots < 0.0, -1.0, 1.0)
    return eigenvalues, V


def expm_symmetric(C: np.ndarray, t: float) -> np.ndarray:
    """e^{tC} = V diag(e^{t mu_i}) V^T for symmetric C."""
    eigenvalues, V = _symmetric_eigh(C)
    out = (V * np.exp(t * eigenvalues)) @ V.T
    return 0.5 * (out + out.T)


def sode_eigensystem(model: SodeModel) -> Tuple[SpectralOperator, np.ndarray]:
    """Operator with lambda = -eig(C) in non-decreasing order and the matching eigenvectors."""
    eigenvalues, V = _symmetric_eigh(model.C)
    if np.max(eigenvalues) >= 0.0:
        raise InvalidArgumentError("C must be negative definite")
    order = np.argsort(-eigenvalues, kind="stable")
    return make_operator(-eigenvalues[order]), V[:, order]


def sode_noise_tables(model: SodeModel, grid: GridSpec, master_seed: int,
                      stream_id: int) -> Tuple[NoiseTable, NoiseTable]:
    """W and W~ tables in the eigen-coordinates of C (Q = I)."""
    op, _ = sode_eigensystem(model)
    noise = NoiseSpec(q=np.ones(model.d))
    return (
        build_noise_table(grid, noise, op, master_seed, stream_id),
        build_independent_copy(grid, noise, op, master_seed, stream_id),
    )


def _check(model: SodeModel, grid: GridSpec, table: NoiseTable) -> None:
    if not math.isclose(model.T, grid.T, rel_tol=1e-12):
        raise InvalidArgumentError(f"Grid horizon {grid.T} differs from model horizon {model.T}")
    if table.n != model.d or table.steps != grid.fine_steps:
        raise InvalidArgumentError("Noise table does not match the model dimension or the grid")


def sode_aee_solve(model: SodeModel, grid: GridSpec, table: NoiseTable, coarse_m: int) -> Trajectory:
    """Y_{k+1} = e^{tau C} Y_k + C^-1 (e^{tau C} - I) b(Y_k) + conv_k at the coarse nodes."""
    _check(model, grid, table)
    try:
        grid.steps_per_coarse(coarse_m)
    except ValueError as e:
        raise InvalidArgumentError(str(e))
    op, V = sode_eigensystem(model)
    tau = grid.T / coarse_m
    decay = np.exp(-op.eigenvalues * tau)
    weights = phi1_weights(op, tau)
    convs = aggregate_all_convolutions(table, op, grid, coarse_m)

    z = np.broadcast_to(model.Y0 @ V, table.batch_shape + (model.d,)).copy()
    states = np.empty((coarse_m + 1,) + z.shape)
    states[0] = z @ V.T
    for k in range(coarse_m):
        y = z @ V.T
        z = decay * z + weights * (model.drift.b(y) @ V) + convs[..., k]
        states[k + 1] = z @ V.T

    if not np.all(np.isfinite(states)):
        raise NumericOverflowError("sode_aee_solve produced non-finite states")
    return Trajectory(times=np.arange(coarse_m + 1) * tau, states=states)


def sode_reference_solve(model: SodeModel, grid: GridSpec, table: NoiseTable) -> Trajectory:
    return sode_aee_solve(model, grid, table, grid.fine_steps)


def sode_limit_solve(model: SodeModel, grid: GridSpec, table_w: NoiseTable, table_w_tilde: NoiseTable,
                     y_ref: Trajectory) -> Trajectory:
    """Exponential left-point stepping of the limit equation for M, with Q = I.

    M_{j+1} = e^{hC} (M_j + h D_j + S_j),
      D_j = b'(Y_j) M_j - T/2 b'(Y_j) C Y_j - T/2 b'(Y_j) b(Y_j) - T/4 sum_i d^2 b / dx_i^2 (Y_j)
      S_j = -T/2 b'(Y_j) dW_j - sqrt(3) T/6 b'(Y_j) dW~_j.
    """
    _check(model, grid, table_w)
    _check(model, grid, table_w_tilde)
    steps = grid.fine_steps
    if y_ref.states.shape[0] != steps + 1:
        raise InvalidArgumentError("Reference path is not sampled on the fine grid")
    _, V = sode_eigensystem(model)
    h = grid.h
    T = model.T
    propagator = expm_symmetric(model.C, h)
    C = model.C
    drift = model.drift

    M = np.zeros(y_ref.states.shape[1:])
    states = np.empty(y_ref.states.shape)
    states[0] = M
    for j in range(steps):
        Y = y_ref.states[j]
        dW = table_w.db[..., j] @ V.T
        dW_tilde = table_w_tilde.db[..., j] @ V.T
        direction = h * (M - 0.5 * T * (Y @ C.T) - 0.5 * T * drift.b(Y)) - 0.5 * T * dW - SQRT3_OVER_6 * T * dW_tilde
        increment = np.einsum("...ij,...j->...i", drift.jacobian(Y), direction) - 0.25 * T * h * drift.laplacian(Y)
        M = (M + increment) @ propagator.T
        states[j + 1] = M

    if not np.all(np.isfinite(states)):
        raise NumericOverflowError("sode_limit_solve produced non-finite states")
    return Trajectory(times=grid.fine_times(), states=states)

"""Time steppers for the truncated SPDE and its limit error equation."""

import logging
import math
from typing import Optional

import numpy as np

from aee_lab.core.exceptions import InvalidArgumentError, NumericOverflowError
from aee_lab.models.integrators import ModelSpec, Trajectory
from aee_lab.models.noise import GridSpec, NoiseTable
from aee_lab.services.nemytskii import nemytskii_apply, q_trace_kernel
from aee_lab.services.noise_engine import aggregate_all_convolutions
from aee_lab.services.spectral_core import (
    phi1_weights,
    project,
    sine_transform_to_physical,
    sine_transform_to_spectral,
)

logger = logging.getLogger(__name__)

SQRT3_OVER_6 = math.sqrt(3.0) / 6.0


def _check_grid(model: ModelSpec, grid: GridSpec, table: NoiseTable) -> None:
    if not math.isclose(model.T, grid.T, rel_tol=1e-12):
        raise InvalidArgumentError(f"Grid horizon {grid.T} differs from model horizon {model.T}")
    if table.n != model.n:
        raise InvalidArgumentError(f"Table has {table.n} modes but the model has {model.n}")
    if table.steps != grid.fine_steps:
        raise InvalidArgumentError(f"Table has {table.steps} steps but the grid has {grid.fine_steps}")


def _ensure_finite(states: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(states)):
        raise NumericOverflowError(f"{what} produced non-finite states")
    return states


def aee_solve(model: ModelSpec, grid: GridSpec, table: NoiseTable, coarse_m: int,
              galerkin_modes: Optional[int] = None, record: bool = True) -> Trajectory:
    """Accelerated exponential Euler on ``coarse_m`` steps driven by ``table``.

    X_{k+1} = E(tau) X_k + A^-1 (E(tau) - I) F(X_k) + sqrt(q) conv_k, where conv_k
    aggregates the fine convolution entries of coarse step k. With
    ``galerkin_modes=k`` every term is projected by P_k (fully discrete scheme).
    With ``record=False`` only the initial and terminal states are kept.

    Args:
        model: SPDE model.
        grid: Nested grid the table was drawn on.
        table: Noise table, possibly stacking several replicas.
        coarse_m: Coarse step count; must divide the fine step count.
        galerkin_modes: Optional number of modes kept by a fully discrete scheme.
        record: Keep every coarse node rather than just the endpoints.

    Returns:
        Trajectory at the coarse nodes, states of shape (nodes, *batch, n).

    Raises:
        InvalidArgumentError: When the table or coarse_m does not fit the grid.
        NumericOverflowError: When a state becomes non-finite.
    """
    _check_grid(model, grid, table)
    try:
        grid.steps_per_coarse(coarse_m)
    except ValueError as e:
        raise InvalidArgumentError(str(e))

    tau = grid.T / coarse_m
    op = model.op
    decay = np.exp(-op.eigenvalues * tau)
    weights = phi1_weights(op, tau)
    convs = aggregate_all_convolutions(table, op, grid, coarse_m) * model.noise.sqrt_q[:, None]

    X = np.broadcast_to(model.X0, table.batch_shape + (model.n,)).copy()
    mask = None
    if galerkin_modes is not None and galerkin_modes < model.n:
        mask = project(np.ones(model.n), galerkin_modes)
        X = project(X, galerkin_modes)
        weights = weights * mask
        convs = convs * mask[:, None]

    X_start = X
    states = np.empty((coarse_m + 1,) + X.shape) if record else None
    if record:
        states[0] = X
    for k in range(coarse_m):
        X = decay * X + weights * nemytskii_apply(model.nl, X) + convs[..., k]
        if record:
            states[k + 1] = X

    if not record:
        return Trajectory(times=np.array([0.0, grid.T]), states=_ensure_finite(np.stack([X_start, X]), "aee_solve"))
    times = np.arange(coarse_m + 1) * tau
    return Trajectory(times=times, states=_ensure_finite(states, "aee_solve"))


def reference_solve(model: ModelSpec, grid: GridSpec, table: NoiseTable, record: bool = True) -> Trajectory:
    """The scheme on every fine step; stands in for the exact solution with bias O(1/(mR)).

    Returns:
        Trajectory at every fine node, or at the endpoints with ``record=False``.

    Raises:
        InvalidArgumentError: When the table does not fit the grid.
        NumericOverflowError: When a state becomes non-finite.
    """
    return aee_solve(model, grid, table, grid.fine_steps, record=record)


def limit_u_solve(model: ModelSpec, grid: GridSpec, table_w: NoiseTable, table_w_tilde: NoiseTable,
                  x_ref: Trajectory, U0: Optional[np.ndarray] = None, record: bool = True) -> Trajectory:
    """Exponential left-point stepping of the limit error equation on the fine grid.

    U_{j+1} = E(h) (U_j + h D_j + S_j) with
      D_j = DF(X_j) U_j - T/2 DF(X_j) A X_j - T/2 DF(X_j) F(X_j) - T/4 sum_k D2F(X_j)(Q^1/2 e_k, Q^1/2 e_k)
      S_j = -T/2 DF(X_j) sqrt(q) db_j - sqrt(3) T/6 DF(X_j) sqrt(q) db~_j.
    DF(X_j) is linear, so it is applied once to the combined direction.
    With ``record=False`` only the initial and terminal states are kept.

    Args:
        model: SPDE model.
        grid: Nested grid of both tables.
        table_w: Increments of W, shared with ``x_ref``.
        table_w_tilde: Increments of the independent copy W~ with the same replicas.
        x_ref: Reference path sampled at every fine node.
        U0: Optional initial error, zero by default.
        record: Keep every fine node rather than just the endpoints.

    Returns:
        Trajectory of U on the fine grid.

    Raises:
        InvalidArgumentError: When the tables or the reference path do not fit the grid.
        NumericOverflowError: When a state becomes non-finite.
    """
    _check_grid(model, grid, table_w)
    _check_grid(model, grid, table_w_tilde)
    if table_w.batch_shape != table_w_tilde.batch_shape:
        raise InvalidArgumentError("W and W~ tables must stack the same replicas")
    steps = grid.fine_steps
    if x_ref.states.shape[0] != steps + 1 or not np.allclose(x_ref.times, grid.fine_times(), rtol=1e-12, atol=1e-15):
        raise InvalidArgumentError("Reference path is not sampled on the fine grid")
    if x_ref.states.shape[1:] != table_w.batch_shape + (model.n,):
        raise InvalidArgumentError("Reference path and tables disagree on replicas or modes")

    h = grid.h
    T = model.T
    op = model.op
    nl = model.nl
    decay = np.exp(-op.eigenvalues * h)
    sqrt_q = model.noise.sqrt_q
    kappa = q_trace_kernel(model.noise)

    shape = x_ref.states.shape[1:]
    U = np.zeros(shape) if U0 is None else np.broadcast_to(np.asarray(U0, dtype=np.float64), shape).copy()
    U_start = U
    states = np.empty((steps + 1,) + shape) if record else None
    if record:
        states[0] = U

    for j in range(steps):
        if nl.is_zero:
            U = decay * U
        else:
            X = x_ref.states[j]
            physical = sine_transform_to_physical(X)
            FX = sine_transform_to_spectral(nl.f(physical))
            AX = -op.eigenvalues * X
            direction = (
                h * (U - 0.5 * T * AX - 0.5 * T * FX)
                - 0.5 * T * sqrt_q * table_w.db[..., j]
                - SQRT3_OVER_6 * T * sqrt_q * table_w_tilde.db[..., j]
            )
            increment = sine_transform_to_spectral(
                nl.df(physical) * sine_transform_to_physical(direction)
                - 0.25 * T * h * nl.d2f(physical) * kappa
            )
            U = decay * (U + increment)
        if record:
            states[j + 1] = U

    if not record:
        return Trajectory(times=np.array([0.0, grid.T]), states=_ensure_finite(np.stack([U_start, U]), "limit_u_solve"))
    return Trajectory(times=grid.fine_times(), states=_ensure_finite(states, "limit_u_solve"))

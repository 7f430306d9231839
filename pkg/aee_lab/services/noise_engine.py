"""Exact sampling of Q-Wiener increments and their stochastic convolutions.

For each mode with eigenvalue lambda and fine step h the pair

    db   = beta(s + h) - beta(s)
    conv = int_s^{s+h} exp(-lambda (s + h - u)) d beta(u)

is jointly Gaussian with the covariance returned by ``conv_pair_covariance``.
Tables store unit-q pairs; sqrt(q_i) is applied by the solvers.

Every mode of every table draws from its own Philox stream keyed by
SeedSequence(master_seed, spawn_key=(domain, stream_id, mode)), so a table is a
pure function of (master_seed, stream_id, domain) and modes can be generated in
any order. The first 2 * steps raw words of a mode give the normals driving db
and then those completing conv. The W~ copy lives in ``NoiseDomain.W_TILDE``
and can never share a key with a W table.
"""

import logging
from typing import Sequence

import numpy as np
from scipy.special import ndtri

from aee_lab.core.exceptions import InvalidArgumentError
from aee_lab.models.noise import GridSpec, NoiseDomain, NoiseTable
from aee_lab.models.nonlinearity import NoiseSpec
from aee_lab.models.spectral import SpectralOperator

logger = logging.getLogger(__name__)

SMALL_X = 1e-3
# uniforms on the open interval (0, 1) from the top 52 bits of a raw word
UNIFORM_SHIFT = np.uint64(12)
UNIFORM_SCALE = 2.0**-52


def conv_pair_covariance(lam: float, h: float) -> np.ndarray:
    """Covariance of (db, conv) over one step of size h for eigenvalue lam."""
    if lam <= 0.0 or h <= 0.0:
        raise InvalidArgumentError(f"lambda and h must be positive, got lambda={lam}, h={h}")
    c12 = -np.expm1(-lam * h) / lam
    c22 = -np.expm1(-2.0 * lam * h) / (2.0 * lam)
    return np.array([[h, c12], [c12, c22]])


def _schur_factor(x: np.ndarray) -> np.ndarray:
    """(1 - e^-2x)/(2x) - ((1 - e^-x)/x)^2, the conditional variance of conv given db over h."""
    x = np.asarray(x, dtype=np.float64)
    small = x < SMALL_X
    safe = np.where(small, 1.0, x)
    direct = -np.expm1(-2.0 * safe) / (2.0 * safe) - (np.expm1(-safe) / safe) ** 2
    series = x**2 / 12.0 - x**3 / 12.0 + 17.0 * x**4 / 360.0
    return np.maximum(np.where(small, series, direct), 0.0)


def pair_cholesky(eigenvalues: np.ndarray, h: float):
    """Lower Cholesky entries (l11, l21, l22) per mode of the pair covariance."""
    lam = np.asarray(eigenvalues, dtype=np.float64)
    x = lam * h
    l11 = np.full_like(lam, np.sqrt(h))
    l21 = np.sqrt(h) * (-np.expm1(-x) / x)
    l22 = np.sqrt(h * _schur_factor(x))
    return l11, l21, l22


def mode_bit_generator(master_seed: int, stream_id: int, domain: NoiseDomain, mode: int) -> np.random.Philox:
    seed_seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(domain), int(stream_id), int(mode)))
    return np.random.Philox(seed_seq)


def standard_normals(bit_generator: np.random.BitGenerator, size: int) -> np.ndarray:
    """Inverse-CDF normals z = ndtri(((w >> 12) + 1/2) 2^-52) from raw 64-bit words w.

    Each value depends on a single raw word, so a table is reproducible from the
    Philox output alone.
    """
    raw = bit_generator.random_raw(size)
    return ndtri(((raw >> UNIFORM_SHIFT).astype(np.float64) + 0.5) * UNIFORM_SCALE)


def _build(grid: GridSpec, noise: NoiseSpec, op: SpectralOperator, master_seed: int,
           stream_id: int, domain: NoiseDomain) -> NoiseTable:
    if noise.n != op.n:
        raise InvalidArgumentError(f"Noise has {noise.n} modes but the operator has {op.n}")
    if master_seed < 0 or stream_id < 0:
        raise InvalidArgumentError("Seeds and stream ids must be nonnegative")
    steps = grid.fine_steps
    l11, l21, l22 = pair_cholesky(op.eigenvalues, grid.h)
    db = np.empty((op.n, steps))
    conv = np.empty((op.n, steps))
    for i in range(op.n):
        z = standard_normals(mode_bit_generator(master_seed, stream_id, domain, i), 2 * steps).reshape(2, steps)
        db[i] = l11[i] * z[0]
        conv[i] = l21[i] * z[0] + l22[i] * z[1]
    return NoiseTable(db=db, conv=conv, h=grid.h, master_seed=master_seed,
                      stream_ids=(stream_id,), domain=domain)


def build_noise_table(grid: GridSpec, noise: NoiseSpec, op: SpectralOperator,
                      master_seed: int, stream_id: int) -> NoiseTable:
    """Unit-q increments of W for one replica.

    Args:
        grid: Grid whose fine step is the table step.
        noise: Noise spectrum; only its size is used, the table has q = 1.
        op: Operator whose eigenvalues set the convolution weights.
        master_seed: Seed of the whole experiment.
        stream_id: Nonnegative replica index.

    Returns:
        NoiseTable with db and conv of shape (n, fine_steps).

    Raises:
        InvalidArgumentError: When noise and op disagree on n or stream_id is negative.
    """
    return _build(grid, noise, op, master_seed, stream_id, NoiseDomain.W)


def build_independent_copy(grid: GridSpec, noise: NoiseSpec, op: SpectralOperator,
                           master_seed: int, stream_id: int) -> NoiseTable:
    """Unit-q increments of the independent copy W~ for one replica."""
    return _build(grid, noise, op, master_seed, stream_id, NoiseDomain.W_TILDE)


def stack_tables(tables: Sequence[NoiseTable]) -> NoiseTable:
    """Stack single-replica tables along a leading batch axis."""
    if not tables:
        raise InvalidArgumentError("No tables to stack")
    first = tables[0]
    for table in tables:
        if table.batch_shape or table.db.shape != first.db.shape or table.h != first.h or table.domain != first.domain:
            raise InvalidArgumentError("Only single-replica tables of one grid and domain can be stacked")
    return NoiseTable(
        db=np.stack([t.db for t in tables]),
        conv=np.stack([t.conv for t in tables]),
        h=first.h,
        master_seed=first.master_seed,
        stream_ids=tuple(t.stream_id for t in tables),
        domain=first.domain,
    )


def _check_table(table: NoiseTable, grid: GridSpec) -> None:
    if table.steps != grid.fine_steps or not np.isclose(table.h, grid.h, rtol=1e-12, atol=0.0):
        raise InvalidArgumentError(
            f"Table with {table.steps} steps of {table.h} does not match a grid of {grid.fine_steps} steps of {grid.h}"
        )


def aggregate_convolution(table: NoiseTable, mode: int, coarse_step: int, lam: float,
                          grid: GridSpec, coarse_m: int = None) -> float:
    """Convolution over coarse step k from the fine entries of one single-replica table.

    Sum over the fine steps j of coarse step k of exp(-lambda (t_{k+1} - s_{j+1})) conv[mode][j].
    """
    _check_table(table, grid)
    coarse_m = grid.m if coarse_m is None else coarse_m
    try:
        r = grid.steps_per_coarse(coarse_m)
    except ValueError as e:
        raise InvalidArgumentError(str(e))
    if table.batch_shape:
        raise InvalidArgumentError("aggregate_convolution expects a single-replica table")
    if not 0 <= mode < table.n or not 0 <= coarse_step < coarse_m:
        raise InvalidArgumentError(f"Index out of range: mode={mode}, coarse_step={coarse_step}")
    entries = table.conv[mode, coarse_step * r:(coarse_step + 1) * r]
    weights = np.exp(-lam * table.h * np.arange(r - 1, -1, -1))
    return float(np.dot(weights, entries))


def aggregate_all_convolutions(table: NoiseTable, op: SpectralOperator, grid: GridSpec,
                               coarse_m: int) -> np.ndarray:
    """Coarse convolution increments for every mode and coarse step, shape (..., n, coarse_m)."""
    _check_table(table, grid)
    if table.n != op.n:
        raise InvalidArgumentError(f"Table has {table.n} modes but the operator has {op.n}")
    try:
        r = grid.steps_per_coarse(coarse_m)
    except ValueError as e:
        raise InvalidArgumentError(str(e))
    if r == 1:
        return np.array(table.conv)
    blocks = table.conv.reshape(table.batch_shape + (op.n, coarse_m, r))
    weights = np.exp(-np.outer(op.eigenvalues, np.arange(r - 1, -1, -1)) * table.h)
    return np.einsum("...ikr,ir->...ik", blocks, weights)

"""Monte Carlo orchestration of normalised error and limit-process ensembles.

Replicas are grouped into batches of ``batch_size`` stream ids; each batch is
one task advanced as a single vectorised solve. Batches may run in a process
pool, and results are always reassembled in stream-id order.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from aee_lab.core.config import settings
from aee_lab.core.exceptions import AeeLabError, InvalidArgumentError, ReplicaFailedError
from aee_lab.models.integrators import ModelSpec, SodeModel
from aee_lab.models.noise import GridSpec
from aee_lab.models.statistics import Ensemble
from aee_lab.services.integrators import aee_solve, limit_u_solve, reference_solve
from aee_lab.services.noise_engine import build_independent_copy, build_noise_table, stack_tables
from aee_lab.services.sode import sode_aee_solve, sode_limit_solve, sode_noise_tables, sode_reference_solve
from aee_lab.utils.fingerprint import config_fingerprint

logger = logging.getLogger(__name__)

# limit ensembles draw from stream ids disjoint from error ensembles
LIMIT_STREAM_BASE = 2**40


def normalized_error(m: int, xm_terminal: np.ndarray, xref_terminal: np.ndarray) -> np.ndarray:
    """U^m = m (X^m - X)."""
    xm_terminal = np.asarray(xm_terminal, dtype=np.float64)
    xref_terminal = np.asarray(xref_terminal, dtype=np.float64)
    if xm_terminal.shape[-1] != xref_terminal.shape[-1]:
        raise InvalidArgumentError(
            f"Mode counts differ: {xm_terminal.shape[-1]} vs {xref_terminal.shape[-1]}"
        )
    return m * (xm_terminal - xref_terminal)


def _spde_tables(model: ModelSpec, grid: GridSpec, master_seed: int, stream_ids: Sequence[int]):
    return stack_tables([build_noise_table(grid, model.noise, model.op, master_seed, s) for s in stream_ids])


def _spde_error_batch(model: ModelSpec, grid: GridSpec, m_list: Sequence[int], proj_dim: int,
                      master_seed: int, galerkin: Dict[int, int], stream_ids: Sequence[int]):
    table = _spde_tables(model, grid, master_seed, stream_ids)
    x_ref = reference_solve(model, grid, table, record=False).terminal
    out = {}
    for m in m_list:
        x_m = aee_solve(model, grid, table, m, galerkin_modes=galerkin.get(m), record=False).terminal
        u_m = normalized_error(m, x_m, x_ref)
        out[m] = (u_m[..., :proj_dim], np.sum((x_m - x_ref) ** 2, axis=-1))
    return out


def _spde_limit_batch(model: ModelSpec, grid: GridSpec, proj_dim: int, master_seed: int,
                      stream_ids: Sequence[int]):
    table_w = _spde_tables(model, grid, master_seed, stream_ids)
    table_w_tilde = stack_tables(
        [build_independent_copy(grid, model.noise, model.op, master_seed, s) for s in stream_ids]
    )
    x_ref = reference_solve(model, grid, table_w)
    u = limit_u_solve(model, grid, table_w, table_w_tilde, x_ref, record=False).terminal
    return u[..., :proj_dim]


def _sode_tables(model: SodeModel, grid: GridSpec, master_seed: int, stream_ids: Sequence[int]):
    pairs = [sode_noise_tables(model, grid, master_seed, s) for s in stream_ids]
    return stack_tables([p[0] for p in pairs]), stack_tables([p[1] for p in pairs])


def _sode_error_batch(model: SodeModel, grid: GridSpec, m_list: Sequence[int], master_seed: int,
                      stream_ids: Sequence[int]):
    table_w, _ = _sode_tables(model, grid, master_seed, stream_ids)
    y_ref = sode_reference_solve(model, grid, table_w).terminal
    out = {}
    for m in m_list:
        y_m = sode_aee_solve(model, grid, table_w, m).terminal
        out[m] = (normalized_error(m, y_m, y_ref), np.sum((y_m - y_ref) ** 2, axis=-1))
    return out


def _sode_limit_batch(model: SodeModel, grid: GridSpec, master_seed: int, with_state: bool,
                      stream_ids: Sequence[int]):
    table_w, table_w_tilde = _sode_tables(model, grid, master_seed, stream_ids)
    y_ref = sode_reference_solve(model, grid, table_w)
    m_terminal = sode_limit_solve(model, grid, table_w, table_w_tilde, y_ref).terminal
    if with_state:
        return np.concatenate([y_ref.terminal, m_terminal], axis=-1)
    return m_terminal


def _guarded(fn: Callable, stream_ids: Sequence[int]):
    """Run one batch; on failure rerun its replicas one by one to name the failing stream."""
    try:
        return fn(list(stream_ids))
    except AeeLabError as batch_error:
        if len(stream_ids) == 1:
            raise ReplicaFailedError(stream_ids[0], batch_error)
        for s in stream_ids:
            try:
                fn([s])
            except AeeLabError as e:
                raise ReplicaFailedError(s, e)
        raise ReplicaFailedError(stream_ids[0], batch_error)


class ErrorLab:
    """Runs replica ensembles with deterministic, replica-ordered reduction."""

    def __init__(self, threads: Optional[int] = None, batch_size: Optional[int] = None):
        self.threads = max(1, threads or settings.THREADS)
        self.batch_size = max(1, batch_size or settings.BATCH_SIZE)

    def _batches(self, stream_ids: Sequence[int]) -> List[List[int]]:
        ids = list(stream_ids)
        return [ids[i:i + self.batch_size] for i in range(0, len(ids), self.batch_size)]

    def _map(self, fn: Callable, stream_ids: Sequence[int]) -> list:
        batches = self._batches(stream_ids)
        task = partial(_guarded, fn)
        logger.info(f"Running {len(stream_ids)} replicas in {len(batches)} batches on {self.threads} worker(s)")
        if self.threads == 1 or len(batches) == 1:
            return [task(batch) for batch in batches]
        with ProcessPoolExecutor(max_workers=self.threads) as executor:
            return list(executor.map(task, batches))

    @staticmethod
    def _check_replicas(N: int) -> None:
        if N < 2:
            raise InvalidArgumentError(f"At least two replicas are required, got {N}")

    def run_error_ensembles(self, model: ModelSpec, grid: GridSpec, m_list: Sequence[int], N: int,
                            proj_dim: int, master_seed: int,
                            galerkin: Optional[Dict[int, int]] = None) -> Dict[int, Ensemble]:
        """U^m(T) ensembles for every m in ``m_list``, sharing one reference path per replica.

        Args:
            model: SPDE model.
            grid: Nested grid; every m must divide its fine step count.
            m_list: Coarse step counts.
            N: Replica count, at least two. Replica r uses stream id r.
            proj_dim: Leading modes kept in the samples.
            master_seed: Seed of the noise engine.
            galerkin: Optional map from m to the Galerkin mode count of that scheme.

        Returns:
            Ensembles keyed by m, each also carrying the squared full-mode error norms.

        Raises:
            InvalidArgumentError: For fewer than two replicas, an m that does not
                divide the fine grid or a proj_dim outside 1..n.
            ReplicaFailedError: When a replica produces non-finite values.
        """
        self._check_replicas(N)
        galerkin = galerkin or {}
        for m in m_list:
            try:
                grid.steps_per_coarse(m)
            except ValueError as e:
                raise InvalidArgumentError(str(e))
        if not 1 <= proj_dim <= model.n:
            raise InvalidArgumentError(f"proj_dim={proj_dim} outside 1..{model.n}")

        stream_ids = list(range(N))
        fn = partial(_spde_error_batch, model, grid, list(m_list), proj_dim, master_seed, dict(galerkin))
        results = self._map(fn, stream_ids)

        ensembles = {}
        for m in m_list:
            samples = np.concatenate([r[m][0] for r in results])
            full_sq = np.concatenate([r[m][1] for r in results])
            ensembles[m] = Ensemble(
                samples=samples,
                replica_ids=stream_ids,
                label=f"U^{m}",
                fingerprint=config_fingerprint(model, grid, master_seed, "W", m, galerkin.get(m)),
                m=m,
                galerkin_modes=galerkin.get(m, model.n),
                full_norm_sq=full_sq,
            )
        return ensembles

    def run_error_ensemble(self, model: ModelSpec, grid: GridSpec, m: int, N: int, proj_dim: int,
                           master_seed: int, galerkin_modes: Optional[int] = None) -> Ensemble:
        galerkin = {m: galerkin_modes} if galerkin_modes is not None else None
        return self.run_error_ensembles(model, grid, [m], N, proj_dim, master_seed, galerkin)[m]

    def run_limit_ensemble(self, model: ModelSpec, grid: GridSpec, N: int, proj_dim: int,
                           master_seed: int) -> Ensemble:
        """U(T) ensemble from fresh W and W~ streams disjoint from the error ensembles.

        Args:
            model: SPDE model.
            grid: Nested grid; the limit equation is stepped on its fine steps.
            N: Replica count, at least two.
            proj_dim: Leading modes kept in the samples.
            master_seed: Seed shared with the error ensembles; limit replicas
                use the stream ids LIMIT_STREAM_BASE + r.

        Returns:
            Ensemble labelled "U".

        Raises:
            InvalidArgumentError: For fewer than two replicas or a proj_dim outside 1..n.
            ReplicaFailedError: When a replica produces non-finite values.
        """
        self._check_replicas(N)
        if not 1 <= proj_dim <= model.n:
            raise InvalidArgumentError(f"proj_dim={proj_dim} outside 1..{model.n}")
        stream_ids = [LIMIT_STREAM_BASE + r for r in range(N)]
        fn = partial(_spde_limit_batch, model, grid, proj_dim, master_seed)
        samples = np.concatenate(self._map(fn, stream_ids))
        return Ensemble(
            samples=samples,
            replica_ids=stream_ids,
            label="U",
            fingerprint=config_fingerprint(model, grid, master_seed, "W+W~"),
        )

    def run_sode_error_ensembles(self, model: SodeModel, grid: GridSpec, m_list: Sequence[int], N: int,
                                 master_seed: int) -> Dict[int, Ensemble]:
        """m (Y^m(T) - Y(T)) ensembles; the projection is the full state (proj_dim = d)."""
        self._check_replicas(N)
        for m in m_list:
            try:
                grid.steps_per_coarse(m)
            except ValueError as e:
                raise InvalidArgumentError(str(e))
        stream_ids = list(range(N))
        fn = partial(_sode_error_batch, model, grid, list(m_list), master_seed)
        results = self._map(fn, stream_ids)
        return {
            m: Ensemble(
                samples=np.concatenate([r[m][0] for r in results]),
                replica_ids=stream_ids,
                label=f"M^{m}",
                fingerprint=config_fingerprint(model, grid, master_seed, "W", m),
                m=m,
                full_norm_sq=np.concatenate([r[m][1] for r in results]),
            )
            for m in m_list
        }

    def run_sode_limit_ensemble(self, model: SodeModel, grid: GridSpec, N: int, master_seed: int,
                                with_state: bool = False) -> Ensemble:
        """M(T) ensemble, or the stacked (Y(T), M(T)) of length 2d when ``with_state`` is set.

        Args:
            model: SODE model.
            grid: Nested grid; the limit equation is stepped on its fine steps.
            N: Replica count, at least two.
            master_seed: Seed shared with the error ensembles; limit replicas
                use the stream ids LIMIT_STREAM_BASE + r.
            with_state: Prepend the reference state Y(T) of each replica.

        Returns:
            Ensemble labelled "M", or "(Y,M)" with ``with_state``.

        Raises:
            InvalidArgumentError: For fewer than two replicas.
            ReplicaFailedError: When a replica produces non-finite values.
        """
        self._check_replicas(N)
        stream_ids = [LIMIT_STREAM_BASE + r for r in range(N)]
        fn = partial(_sode_limit_batch, model, grid, master_seed, with_state)
        return Ensemble(
            samples=np.concatenate(self._map(fn, stream_ids)),
            replica_ids=stream_ids,
            label="(Y,M)" if with_state else "M",
            fingerprint=config_fingerprint(model, grid, master_seed, "W+W~", *(("Y",) if with_state else ())),
        )


def rms_error(ensemble: Ensemble) -> float:
    """sqrt(E ||X^m(T) - X(T)||^2) over all modes."""
    if ensemble.full_norm_sq is None:
        raise InvalidArgumentError("Ensemble carries no full-norm errors")
    return float(np.sqrt(np.mean(ensemble.full_norm_sq)))


# Create a singleton instance
error_lab = ErrorLab()

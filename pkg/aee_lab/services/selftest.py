"""Deterministic invariant suite behind ``aee_lab selftest``."""

import logging
import math
from pathlib import Path
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.fft import dst

from aee_lab.core.config import settings
from aee_lab.models.noise import GridSpec
from aee_lab.models.nonlinearity import NoiseSpec
from aee_lab.services.noise_engine import aggregate_all_convolutions, aggregate_convolution, build_noise_table, conv_pair_covariance
from aee_lab.services.spectral_core import (
    make_dirichlet_laplacian,
    phi1_weights,
    semigroup_apply,
    sine_transform_to_physical,
    sine_transform_to_spectral,
)
from aee_lab.utils.table_io import dump_noise_table, load_noise_table

logger = logging.getLogger(__name__)

# golden table: small enough to pin, large enough to touch several Philox streams
GOLDEN_SEED = 20240917
GOLDEN_STREAM = 7
GOLDEN_N = 4
GOLDEN_GRID = GridSpec(T=1.0, m=4, refine=2)
# (mode, fine step) -> (db, conv) of the golden table
GOLDEN_ENTRIES = {
    (0, 0): (0.067443529144968137, 0.20452013900588384),
    (0, 1): (0.58098515010180818, 0.41871194390310951),
    (1, 6): (0.44340241574136102, -0.0058771245277974005),
    (2, 3): (0.30261390368690327, -0.071399337540702906),
    (3, 7): (-0.49129607410316695, -0.14041208366560615),
}


class CheckFailed(AssertionError):
    pass


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise CheckFailed(message)


def check_transform_round_trip() -> None:
    rng = np.random.default_rng(0)
    for n in (1, 7, 64):
        v = rng.standard_normal(n)
        back = sine_transform_to_spectral(sine_transform_to_physical(v))
        _require(np.allclose(back, v, rtol=0.0, atol=1e-12), f"round trip failed at n={n}")


def check_transform_matches_dst() -> None:
    v = np.random.default_rng(1).standard_normal(32)
    reference = dst(v, type=1) / math.sqrt(2.0)
    _require(np.allclose(sine_transform_to_physical(v), reference, atol=1e-12), "dense transform differs from DST-I")


def check_semigroup_law() -> None:
    op = make_dirichlet_laplacian(16)
    v = np.random.default_rng(2).standard_normal(16)
    lhs = semigroup_apply(op, 0.03, v)
    rhs = semigroup_apply(op, 0.01, semigroup_apply(op, 0.02, v))
    _require(np.allclose(lhs, rhs, rtol=1e-12, atol=1e-15), "E(t+s) != E(t)E(s)")
    _require(np.array_equal(semigroup_apply(op, 0.0, v), v), "E(0) is not the identity")
    _require(math.isclose(float(np.exp(-0.1 * op.eigenvalues[0])), 0.3727, abs_tol=1e-4), "e^{-0.1 pi^2} mismatch")


def check_phi1_weights() -> None:
    op = make_dirichlet_laplacian(1)
    _require(math.isclose(float(phi1_weights(op, 0.1)[0]), 0.063558, abs_tol=1e-5), "phi1 weight mismatch")


def check_pair_covariance() -> None:
    expected = np.array([[1.0, 0.632121], [0.632121, 0.432332]])
    _require(np.allclose(conv_pair_covariance(1.0, 1.0), expected, atol=1e-6), "pair covariance at lambda=h=1")


def check_nesting_identity() -> None:
    rng = np.random.default_rng(3)
    for _ in range(50):
        lam = 10.0 ** rng.uniform(-2.0, 4.0)
        tau = 10.0 ** rng.uniform(-3.0, 0.0)
        R = int(rng.integers(1, 129))
        h = tau / R
        lags = h * np.arange(R - 1, -1, -1)
        total = math.fsum(np.exp(-2.0 * lam * lags) * (-np.expm1(-2.0 * lam * h) / (2.0 * lam)))
        exact = -math.expm1(-2.0 * lam * tau) / (2.0 * lam)
        _require(math.isclose(total, exact, rel_tol=1e-12, abs_tol=1e-15),
                 f"geometric sum mismatch at lambda={lam:.4g}, tau={tau:.4g}, R={R}")


def check_aggregation_consistency() -> None:
    op = make_dirichlet_laplacian(GOLDEN_N)
    table = build_noise_table(GOLDEN_GRID, NoiseSpec.power_decay(op, 2.0), op, GOLDEN_SEED, GOLDEN_STREAM)
    coarse = aggregate_all_convolutions(table, op, GOLDEN_GRID, 2)
    for i in range(op.n):
        for k in range(2):
            scalar = aggregate_convolution(table, i, k, float(op.eigenvalues[i]), GOLDEN_GRID, coarse_m=2)
            _require(math.isclose(coarse[i, k], scalar, rel_tol=1e-10, abs_tol=1e-14), "vectorised aggregation differs")


def golden_table():
    op = make_dirichlet_laplacian(GOLDEN_N)
    return build_noise_table(GOLDEN_GRID, NoiseSpec.power_decay(op, 2.0), op, GOLDEN_SEED, GOLDEN_STREAM)


def check_golden_noise(path: Optional[Path] = None, record: bool = False) -> None:
    """Check the golden table against the pinned entries, then bit for bit against the golden file.

    With ``record`` the file is (re)written once the pinned entries match.
    """
    path = Path(path or settings.GOLDEN_NOISE_PATH)
    table = golden_table()
    for (i, j), (db, conv) in GOLDEN_ENTRIES.items():
        _require(math.isclose(table.db[i, j], db, rel_tol=1e-12) and math.isclose(table.conv[i, j], conv, rel_tol=1e-12),
                 f"golden entry at mode {i}, step {j} differs from the pinned value")
    if record:
        dump_noise_table(table, path)
        logger.info(f"Recorded golden noise file {path}")
        return
    if not path.exists():
        raise CheckFailed(f"golden file {path} is missing; record it with selftest --record-golden")
    try:
        pinned = load_noise_table(path)
    except Exception as e:
        raise CheckFailed(f"unreadable golden file: {e}")
    _require(pinned.master_seed == GOLDEN_SEED and pinned.stream_id == GOLDEN_STREAM, "golden header differs")
    _require(pinned.db.shape == table.db.shape, "golden shape differs")
    _require(np.array_equal(pinned.db, table.db) and np.array_equal(pinned.conv, table.conv), "golden values differ")


def default_checks(golden_path: Optional[Path] = None,
                   record: bool = False) -> List[Tuple[str, Callable[[], None]]]:
    return [
        ("transform_round_trip", check_transform_round_trip),
        ("transform_matches_dst", check_transform_matches_dst),
        ("semigroup_law", check_semigroup_law),
        ("phi1_weights", check_phi1_weights),
        ("pair_covariance", check_pair_covariance),
        ("nesting_identity", check_nesting_identity),
        ("aggregation_consistency", check_aggregation_consistency),
        ("golden_noise", lambda: check_golden_noise(golden_path, record)),
    ]


def run_selftest(golden_path: Optional[Path] = None, record: bool = False) -> Tuple[bool, List[str]]:
    """Run every check; returns (all passed, names of failed checks)."""
    failed = []
    for name, check in default_checks(golden_path, record):
        try:
            check()
            logger.info(f"selftest {name}: ok")
        except Exception as e:
            logger.error(f"selftest {name}: FAILED ({e})")
            failed.append(name)
    return not failed, failed

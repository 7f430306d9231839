import sys

import numpy as np
import pytest

from aee_lab.core.exceptions import InvalidArgumentError, NumericOverflowError, ReplicaFailedError
from aee_lab.models.experiment import ExperimentConfig
from aee_lab.models.noise import GridSpec
from aee_lab.models.nonlinearity import NonlinearityKind
from aee_lab.models.statistics import Ensemble, StatReport
from aee_lab.services.error_lab import LIMIT_STREAM_BASE, ErrorLab, normalized_error, rms_error
from aee_lab.services.integrators import aee_solve, reference_solve
from aee_lab.services.noise_engine import build_noise_table, stack_tables
from aee_lab.services.statistics import (
    convergence_order_fit,
    covariance_standard_errors,
    distribution_report,
    empirical_moments,
    ks_effective_size,
    ks_trend_check,
)

M_LIST = [2, 4, 8]
# the package re-exports the singleton under the module name
error_lab_module = sys.modules[ErrorLab.__module__]


@pytest.fixture
def lab():
    return ErrorLab(threads=1, batch_size=4)


def test_normalized_error_example():
    u = normalized_error(10, np.array([0.11, 0.0]), np.array([0.1, 0.0]))
    np.testing.assert_allclose(u, [0.1, 0.0], rtol=1e-12, atol=1e-15)


def test_normalized_error_of_identical_paths_is_zero():
    x = np.random.default_rng(0).standard_normal((3, 5))
    np.testing.assert_array_equal(normalized_error(64, x, x), 0.0)


def test_normalized_error_rejects_mode_mismatch():
    with pytest.raises(InvalidArgumentError):
        normalized_error(4, np.zeros(3), np.zeros(4))


def test_zero_nonlinearity_gives_silent_errors(lab, make_model, small_grid):
    model = make_model(n=6, kind=NonlinearityKind.ZERO)
    ensembles = lab.run_error_ensembles(model, small_grid, M_LIST, N=6, proj_dim=3, master_seed=11)
    assert sorted(ensembles) == M_LIST
    for m, e in ensembles.items():
        assert e.label == f"U^{m}" and e.m == m and e.galerkin_modes == 6
        assert e.samples.shape == (6, 3)
        np.testing.assert_array_equal(e.replica_ids, np.arange(6))
        assert np.max(np.abs(e.samples)) < 1e-12
        assert rms_error(e) < 1e-12


def test_ensembles_are_reproducible(lab, make_model, small_grid):
    model = make_model(n=5)
    first = lab.run_error_ensembles(model, small_grid, M_LIST, N=5, proj_dim=2, master_seed=3)
    again = lab.run_error_ensembles(model, small_grid, M_LIST, N=5, proj_dim=2, master_seed=3)
    other = lab.run_error_ensembles(model, small_grid, M_LIST, N=5, proj_dim=2, master_seed=4)
    for m in M_LIST:
        np.testing.assert_array_equal(first[m].samples, again[m].samples)
        assert first[m].fingerprint == again[m].fingerprint
        assert not np.array_equal(first[m].samples, other[m].samples)
        assert first[m].fingerprint != other[m].fingerprint


def test_worker_count_does_not_change_results(make_model, small_grid):
    model = make_model(n=4)
    serial = ErrorLab(threads=1, batch_size=2).run_error_ensemble(model, small_grid, 4, N=6, proj_dim=2,
                                                                  master_seed=5)
    pooled = ErrorLab(threads=2, batch_size=2).run_error_ensemble(model, small_grid, 4, N=6, proj_dim=2,
                                                                  master_seed=5)
    np.testing.assert_array_equal(serial.samples, pooled.samples)
    np.testing.assert_array_equal(serial.full_norm_sq, pooled.full_norm_sq)


def test_batch_size_only_regroups_replicas(make_model, small_grid):
    model = make_model(n=4)
    a = ErrorLab(threads=1, batch_size=1).run_error_ensemble(model, small_grid, 8, N=5, proj_dim=4, master_seed=9)
    b = ErrorLab(threads=1, batch_size=16).run_error_ensemble(model, small_grid, 8, N=5, proj_dim=4, master_seed=9)
    np.testing.assert_allclose(a.samples, b.samples, rtol=1e-12, atol=1e-14)


def test_galerkin_truncation_is_recorded(lab, make_model, small_grid):
    model = make_model(n=6)
    e = lab.run_error_ensemble(model, small_grid, 4, N=3, proj_dim=2, master_seed=1, galerkin_modes=3)
    assert e.galerkin_modes == 3


def test_limit_ensemble_uses_disjoint_streams(lab, make_model, small_grid):
    model = make_model(n=5)
    e = lab.run_limit_ensemble(model, small_grid, N=4, proj_dim=3, master_seed=2)
    assert e.label == "U" and e.samples.shape == (4, 3)
    assert e.replica_ids[0] == LIMIT_STREAM_BASE
    assert np.all(np.isfinite(e.samples))


def test_limit_ensemble_of_linear_free_model_is_zero(lab, make_model, small_grid):
    model = make_model(n=5, kind=NonlinearityKind.ZERO)
    e = lab.run_limit_ensemble(model, small_grid, N=3, proj_dim=5, master_seed=2)
    np.testing.assert_array_equal(e.samples, 0.0)


def test_failing_replica_is_named(lab, make_model, small_grid, monkeypatch):
    real_reference = error_lab_module.reference_solve

    def flaky_reference(model, grid, table, record=True):
        if 3 in table.stream_ids:
            raise NumericOverflowError("state is not finite")
        return real_reference(model, grid, table, record=record)

    monkeypatch.setattr(error_lab_module, "reference_solve", flaky_reference)
    with pytest.raises(ReplicaFailedError) as info:
        lab.run_error_ensemble(make_model(n=3), small_grid, 4, N=6, proj_dim=1, master_seed=0)
    assert info.value.stream_id == 3
    assert isinstance(info.value.cause, NumericOverflowError)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"m_list": [3], "N": 4, "proj_dim": 2},
        {"m_list": [4], "N": 1, "proj_dim": 2},
        {"m_list": [4], "N": 4, "proj_dim": 0},
        {"m_list": [4], "N": 4, "proj_dim": 7},
    ],
)
def test_error_ensembles_reject_bad_requests(lab, make_model, small_grid, kwargs):
    with pytest.raises(InvalidArgumentError):
        lab.run_error_ensembles(make_model(n=6), small_grid, master_seed=0, **kwargs)


def test_sode_ensembles(lab, make_sode, small_grid):
    model = make_sode()
    ensembles = lab.run_sode_error_ensembles(model, small_grid, M_LIST, N=5, master_seed=8)
    for m, e in ensembles.items():
        assert e.label == f"M^{m}" and e.samples.shape == (5, 2)
        assert rms_error(e) > 0.0
    limit = lab.run_sode_limit_ensemble(model, small_grid, N=5, master_seed=8)
    assert limit.label == "M" and limit.samples.shape == (5, 2)
    assert limit.replica_ids[-1] == LIMIT_STREAM_BASE + 4


def test_doubling_replicas_shrinks_standard_errors(make_model, small_grid):
    model = make_model(n=4, kind=NonlinearityKind.LINEAR, coef=0.5)
    lab = ErrorLab(threads=1, batch_size=100)
    small = empirical_moments(lab.run_error_ensemble(model, small_grid, 4, N=200, proj_dim=2, master_seed=6))
    large = empirical_moments(lab.run_error_ensemble(model, small_grid, 4, N=400, proj_dim=2, master_seed=6))
    ratio = small.standard_error / large.standard_error
    assert np.all(np.abs(ratio / np.sqrt(2.0) - 1.0) < 0.3)


def test_rms_error_needs_full_norms():
    e = Ensemble(samples=np.zeros((2, 1)), replica_ids=[0, 1], label="U", fingerprint="x")
    with pytest.raises(InvalidArgumentError):
        rms_error(e)
    e = Ensemble(samples=np.zeros((2, 1)), replica_ids=[0, 1], label="U^4", fingerprint="x",
                 full_norm_sq=[1.0, 3.0])
    assert rms_error(e) == pytest.approx(np.sqrt(2.0))


@pytest.mark.slow
def test_mean_square_order_is_one(make_model):
    m_list = [8, 16, 32, 64, 128]
    grid = GridSpec(T=1.0, m=128, refine=64)
    ensembles = ErrorLab().run_error_ensembles(make_model(n=64), grid, m_list, N=500, proj_dim=5, master_seed=21)
    fit = convergence_order_fit([(m, rms_error(ensembles[m])) for m in m_list])
    assert 0.85 <= fit.order <= 1.15
    assert fit.max_residual < 0.15


@pytest.mark.slow
def test_error_law_approaches_limit(make_model):
    m_list = [16, 64, 256]
    cfg = ExperimentConfig(iota=0.75)
    model = make_model(n=64)
    grid = GridSpec(T=1.0, m=256, refine=64)
    lab = ErrorLab()
    ensembles = lab.run_error_ensembles(model, grid, m_list, N=2000, proj_dim=5, master_seed=22,
                                        galerkin={m: cfg.galerkin_modes(m) for m in m_list})
    limit = lab.run_limit_ensemble(model, grid, N=2000, proj_dim=5, master_seed=22)
    reports = [distribution_report(ensembles[m], limit) for m in m_list]
    assert all(row.passed for row in reports[-1].rows if row.metric == "ks_p_value")
    distances = [[row.value for row in r.rows if row.metric == "ks_statistic"] for r in reports]
    assert ks_trend_check(np.array(distances), [ks_effective_size(2000, 2000)] * 3, StatReport(label="trend"))


@pytest.mark.slow
def test_reference_refinement_is_stable(make_model, coarsen):
    model = make_model(n=8, kind=NonlinearityKind.LINEAR, coef=0.5)
    fine_grid = GridSpec(T=1.0, m=128, refine=128)
    grid = GridSpec(T=1.0, m=128, refine=64)
    runs = {64: [], 128: []}
    for start in range(0, 4000, 50):
        streams = range(start, start + 50)
        fine = stack_tables([build_noise_table(fine_grid, model.noise, model.op, 23, s) for s in streams])
        coarse = coarsen(fine, model.op.eigenvalues)
        for R, g, table in ((128, fine_grid, fine), (64, grid, coarse)):
            xm = aee_solve(model, g, table, 128, record=False).terminal
            runs[R].append(normalized_error(128, xm, reference_solve(model, g, table, record=False).terminal)[:, :5])
    # both refinements share every Brownian path
    a, b = (np.concatenate(runs[R]) for R in (64, 128))
    moments_a, moments_b = empirical_moments(a), empirical_moments(b)
    assert np.all(np.abs(moments_a.mean - moments_b.mean) <= moments_b.standard_error)
    assert np.all(np.abs(moments_a.covariance - moments_b.covariance) <= covariance_standard_errors(b))

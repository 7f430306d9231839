import math

import numpy as np
import pytest

from aee_lab.core.exceptions import InvalidArgumentError, NumericOverflowError
from aee_lab.models.noise import GridSpec
from aee_lab.models.nonlinearity import NoiseSpec, NonlinearityKind
from aee_lab.services.integrators import aee_solve, limit_u_solve, reference_solve
from aee_lab.services.noise_engine import aggregate_convolution, build_independent_copy, build_noise_table, stack_tables
from aee_lab.services.spectral_core import semigroup_apply

SEED = 7


def _table(model, grid, stream=0):
    return build_noise_table(grid, model.noise, model.op, SEED, stream)


def test_deterministic_heat_flow_is_exact(make_model):
    model = make_model(n=6, kind=NonlinearityKind.ZERO, q=np.zeros(6), X0=np.linspace(1.0, 0.5, 6))
    grid = GridSpec(T=1.0, m=10, refine=2)
    path = aee_solve(model, grid, _table(model, grid), 10)
    for k in range(11):
        np.testing.assert_allclose(path.states[k], semigroup_apply(model.op, k * grid.tau, model.X0), rtol=1e-12, atol=0.0)


def test_ou_scheme_matches_mild_solution(make_model):
    model = make_model(n=5, kind=NonlinearityKind.ZERO)
    grid = GridSpec(T=1.0, m=4, refine=8)
    table = _table(model, grid)
    path = aee_solve(model, grid, table, 4)
    lam = model.op.eigenvalues
    sqrt_q = model.noise.sqrt_q
    for k in range(1, 5):
        expected = np.exp(-lam * k * grid.tau) * model.X0
        for i in range(5):
            for l in range(k):
                conv = aggregate_convolution(table, i, l, float(lam[i]), grid)
                expected[i] += math.exp(-lam[i] * (k - 1 - l) * grid.tau) * sqrt_q[i] * conv
        np.testing.assert_allclose(path.states[k], expected, rtol=1e-10, atol=1e-14)


def test_one_linear_step_matches_hand_formula(make_model):
    c = 0.5
    model = make_model(n=1, kind=NonlinearityKind.LINEAR, coef=c, X0=[0.8], T=0.1)
    grid = GridSpec(T=0.1, m=1, refine=4)
    table = _table(model, grid)
    lam = float(model.op.eigenvalues[0])
    tau = grid.tau
    conv = aggregate_convolution(table, 0, 0, lam, grid)
    expected = math.exp(-lam * tau) * 0.8 + c * 0.8 * (1.0 - math.exp(-lam * tau)) / lam + model.noise.sqrt_q[0] * conv
    assert aee_solve(model, grid, table, 1).terminal[0] == pytest.approx(expected, rel=1e-12)


def test_reference_equals_scheme_without_refinement(make_model):
    model = make_model(n=4)
    grid = GridSpec(T=1.0, m=16, refine=1)
    table = _table(model, grid)
    np.testing.assert_array_equal(reference_solve(model, grid, table).states, aee_solve(model, grid, table, 16).states)


def test_record_false_keeps_endpoints(make_model):
    model = make_model(n=4)
    grid = GridSpec(T=1.0, m=8, refine=4)
    table = _table(model, grid)
    full = aee_solve(model, grid, table, 8)
    ends = aee_solve(model, grid, table, 8, record=False)
    assert ends.states.shape == (2, 4)
    np.testing.assert_array_equal(ends.terminal, full.terminal)
    np.testing.assert_array_equal(ends.states[0], full.states[0])


def test_refinement_differences_halve(make_model):
    """On shared paths, successive refinements of the step change the terminal state by O(1/m)."""
    model = make_model(n=8)
    grid = GridSpec(T=1.0, m=8, refine=64)
    table = stack_tables([_table(model, grid, s) for s in range(32)])
    terminal = {m: aee_solve(model, grid, table, m, record=False).terminal for m in (128, 256, 512)}
    d1 = np.sqrt(np.mean(np.sum((terminal[256] - terminal[128]) ** 2, axis=-1)))
    d2 = np.sqrt(np.mean(np.sum((terminal[512] - terminal[256]) ** 2, axis=-1)))
    assert 1.7 < d1 / d2 < 2.3


def test_batched_solve_matches_single_replicas(make_model):
    model = make_model(n=6)
    grid = GridSpec(T=1.0, m=4, refine=2)
    tables = [_table(model, grid, s) for s in range(3)]
    batched = aee_solve(model, grid, stack_tables(tables), 8).terminal
    for b, table in enumerate(tables):
        np.testing.assert_allclose(batched[b], aee_solve(model, grid, table, 8).terminal, rtol=1e-13, atol=1e-15)


def test_galerkin_projection_zeroes_tail(make_model):
    model = make_model(n=10, X0=np.ones(10))
    grid = GridSpec(T=1.0, m=4, refine=2)
    path = aee_solve(model, grid, _table(model, grid), 8, galerkin_modes=3)
    np.testing.assert_array_equal(path.states[:, 3:], 0.0)
    assert np.all(path.states[-1, :3] != 0.0)


def test_scheme_rejects_bad_arguments(make_model):
    model = make_model(n=4)
    grid = GridSpec(T=1.0, m=4, refine=2)
    table = _table(model, grid)
    with pytest.raises(InvalidArgumentError):
        aee_solve(model, grid, table, 3)
    with pytest.raises(InvalidArgumentError):
        aee_solve(model, GridSpec(T=2.0, m=4, refine=2), table, 4)
    with pytest.raises(InvalidArgumentError):
        aee_solve(make_model(n=5), grid, table, 4)


def test_overflow_is_reported(make_model):
    model = make_model(n=2, kind=NonlinearityKind.LINEAR, coef=1e300, q=np.zeros(2))
    grid = GridSpec(T=1.0, m=4, refine=1)
    with pytest.raises(NumericOverflowError):
        aee_solve(model, grid, _table(model, grid), 4)


def test_limit_equation_vanishes_without_nonlinearity(make_model):
    model = make_model(n=4, kind=NonlinearityKind.ZERO)
    grid = GridSpec(T=1.0, m=4, refine=4)
    table_w = _table(model, grid)
    table_w_tilde = build_independent_copy(grid, model.noise, model.op, SEED, 0)
    x_ref = reference_solve(model, grid, table_w)
    path = limit_u_solve(model, grid, table_w, table_w_tilde, x_ref)
    np.testing.assert_array_equal(path.states, 0.0)
    assert path.states.shape == (17, 4)


def test_limit_equation_batched_and_recorded(make_model):
    model = make_model(n=4)
    grid = GridSpec(T=1.0, m=4, refine=4)
    table_w = stack_tables([_table(model, grid, s) for s in range(2)])
    table_w_tilde = stack_tables([build_independent_copy(grid, model.noise, model.op, SEED, s) for s in range(2)])
    x_ref = reference_solve(model, grid, table_w)
    full = limit_u_solve(model, grid, table_w, table_w_tilde, x_ref)
    ends = limit_u_solve(model, grid, table_w, table_w_tilde, x_ref, record=False)
    assert full.states.shape == (17, 2, 4)
    np.testing.assert_array_equal(ends.terminal, full.terminal)
    assert np.all(np.isfinite(full.terminal)) and np.any(full.terminal != 0.0)


def test_limit_equation_needs_fine_reference(make_model):
    model = make_model(n=4)
    grid = GridSpec(T=1.0, m=4, refine=4)
    table_w = _table(model, grid)
    table_w_tilde = build_independent_copy(grid, model.noise, model.op, SEED, 0)
    coarse = aee_solve(model, grid, table_w, 4)
    with pytest.raises(InvalidArgumentError):
        limit_u_solve(model, grid, table_w, table_w_tilde, coarse)
    with pytest.raises(InvalidArgumentError):
        limit_u_solve(model, grid, table_w, stack_tables([table_w_tilde, table_w_tilde]), reference_solve(model, grid, table_w))


def test_limit_equation_is_affine_in_initial_value(make_model):
    model = make_model(n=4)
    grid = GridSpec(T=1.0, m=4, refine=4)
    table_w = _table(model, grid)
    table_w_tilde = build_independent_copy(grid, model.noise, model.op, SEED, 0)
    x_ref = reference_solve(model, grid, table_w)
    u0 = np.array([0.3, -0.2, 0.1, 0.05])
    base, once, twice = (
        limit_u_solve(model, grid, table_w, table_w_tilde, x_ref, U0=scale * u0).terminal for scale in (0.0, 1.0, 2.0)
    )
    np.testing.assert_allclose(twice - base, 2.0 * (once - base), rtol=1e-10, atol=1e-14)


@pytest.mark.slow
def test_limit_equation_step_halving_on_fixed_path(make_model, coarsen):
    model = make_model(n=4)
    fine_grid = GridSpec(T=1.0, m=8, refine=512)
    grid = GridSpec(T=1.0, m=8, refine=256)
    streams = range(8)
    fine_w = stack_tables([_table(model, fine_grid, s) for s in streams])
    fine_w_tilde = stack_tables([build_independent_copy(fine_grid, model.noise, model.op, SEED, s) for s in streams])
    u_fine = limit_u_solve(model, fine_grid, fine_w, fine_w_tilde, reference_solve(model, fine_grid, fine_w),
                           record=False).terminal
    w, w_tilde = coarsen(fine_w, model.op.eigenvalues), coarsen(fine_w_tilde, model.op.eigenvalues)
    u = limit_u_solve(model, grid, w, w_tilde, reference_solve(model, grid, w), record=False).terminal
    rms_change = np.sqrt(np.mean(np.sum((u - u_fine) ** 2, axis=-1)))
    rms_size = np.sqrt(np.mean(np.sum(u_fine**2, axis=-1)))
    assert rms_change < 0.1 * rms_size

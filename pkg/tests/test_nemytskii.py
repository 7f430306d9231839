import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aee_lab.core.exceptions import InvalidArgumentError, NumericOverflowError
from aee_lab.models.nonlinearity import NoiseSpec, Nonlinearity, NonlinearityKind
from aee_lab.models.spectral import AssumptionParams
from aee_lab.services.nemytskii import (
    nemytskii_apply,
    nemytskii_hessian_apply,
    nemytskii_jacobian_apply,
    q_trace_kernel,
    q_trace_term,
    validate_regime,
)
from aee_lab.services.spectral_core import collocation_points, make_dirichlet_laplacian

ZERO = Nonlinearity(kind=NonlinearityKind.ZERO)
SINE = Nonlinearity(kind=NonlinearityKind.SINE, coef=1.0)


def linear(c):
    return Nonlinearity(kind=NonlinearityKind.LINEAR, coef=c)


@pytest.fixture
def field():
    return np.random.default_rng(11).standard_normal(12) / np.arange(1, 13)


def test_apply_presets(field):
    np.testing.assert_array_equal(nemytskii_apply(ZERO, field), np.zeros(12))
    np.testing.assert_allclose(nemytskii_apply(linear(0.5), field), 0.5 * field, atol=1e-12)
    np.testing.assert_allclose(nemytskii_apply(SINE, np.zeros(12)), np.zeros(12), atol=0.0)


def test_apply_sine_pointwise(field):
    physical = np.zeros(12)
    x = collocation_points(12)
    for i, v in enumerate(field):
        physical += v * math.sqrt(2.0) * np.sin((i + 1) * np.pi * x)
    back = nemytskii_apply(SINE, field)
    expected = np.array([np.sum(np.sin(physical) * math.sqrt(2.0) * np.sin(k * np.pi * x)) / 13.0 for k in range(1, 13)])
    np.testing.assert_allclose(back, expected, atol=1e-12)


def test_jacobian_presets(field):
    direction = np.linspace(-1.0, 1.0, 12)
    np.testing.assert_allclose(nemytskii_jacobian_apply(linear(-2.0), field, direction), -2.0 * direction, atol=1e-12)
    np.testing.assert_array_equal(nemytskii_jacobian_apply(ZERO, field, direction), np.zeros(12))
    np.testing.assert_allclose(nemytskii_jacobian_apply(SINE, np.zeros(12), direction), direction, atol=1e-12)


def test_jacobian_matches_finite_difference(field):
    direction = np.cos(np.arange(12.0))
    eps = 1e-6
    fd = (nemytskii_apply(SINE, field + eps * direction) - nemytskii_apply(SINE, field)) / eps
    np.testing.assert_allclose(nemytskii_jacobian_apply(SINE, field, direction), fd, atol=1e-5)


def test_jacobian_error_is_first_order(field):
    direction = np.cos(np.arange(12.0))
    exact = nemytskii_jacobian_apply(SINE, field, direction)
    constants = []
    for eps in (1e-3, 1e-4, 1e-5):
        fd = (nemytskii_apply(SINE, field + eps * direction) - nemytskii_apply(SINE, field)) / eps
        constants.append(np.linalg.norm(fd - exact) / eps)
    assert constants[0] > 0.0
    assert max(constants) / min(constants) < 1.2


def test_hessian_matches_second_difference(field):
    u = 0.1 * np.sin(np.arange(12.0))
    w = 0.1 * np.cos(np.arange(12.0))
    exact = nemytskii_hessian_apply(SINE, field, u, w)
    errors = []
    for eps in (1e-2, 1e-3):
        fd = (
            nemytskii_apply(SINE, field + eps * (u + w))
            - nemytskii_apply(SINE, field + eps * u)
            - nemytskii_apply(SINE, field + eps * w)
            + nemytskii_apply(SINE, field)
        ) / eps**2
        errors.append(np.linalg.norm(fd - exact))
    assert errors[1] < 0.02 * np.linalg.norm(exact)
    # first order: a tenfold smaller step shrinks the error about tenfold
    assert 5.0 < errors[0] / errors[1] < 20.0


@pytest.mark.parametrize("a", [1.0, -0.3, 2.5])
def test_sine_is_globally_lipschitz(a):
    nl = Nonlinearity(kind=NonlinearityKind.SINE, coef=a)
    rng = np.random.default_rng(17)
    for _ in range(100):
        u, v = 3.0 * rng.standard_normal((2, 16))
        lhs = np.linalg.norm(nemytskii_apply(nl, u) - nemytskii_apply(nl, v))
        assert lhs <= abs(a) * np.linalg.norm(u - v) * (1.0 + 1e-12)


def test_jacobian_rejects_mismatched_lengths():
    with pytest.raises(InvalidArgumentError):
        nemytskii_jacobian_apply(SINE, np.zeros(3), np.zeros(4))


def test_hessian_presets(field):
    u = np.sin(np.arange(12.0))
    w = np.cos(np.arange(12.0))
    np.testing.assert_array_equal(nemytskii_hessian_apply(linear(3.0), field, u, w), np.zeros(12))
    np.testing.assert_allclose(nemytskii_hessian_apply(SINE, np.zeros(12), u, w), np.zeros(12), atol=1e-15)
    np.testing.assert_array_equal(nemytskii_hessian_apply(SINE, field, u, w), nemytskii_hessian_apply(SINE, field, w, u))


def test_hessian_is_symmetric_bit_for_bit():
    rng = np.random.default_rng(5)
    for _ in range(100):
        base, u, w = rng.standard_normal((3, 16))
        np.testing.assert_array_equal(nemytskii_hessian_apply(SINE, base, u, w), nemytskii_hessian_apply(SINE, base, w, u))


def test_hessian_is_bilinear(field):
    rng = np.random.default_rng(8)
    u1, u2, w = rng.standard_normal((3, 12))

    def h(a, b):
        return nemytskii_hessian_apply(SINE, field, a, b)

    np.testing.assert_allclose(h(u1 + u2, w), h(u1, w) + h(u2, w), atol=1e-12)
    np.testing.assert_allclose(h(w, u1 + u2), h(w, u1) + h(w, u2), atol=1e-12)
    np.testing.assert_allclose(h(-2.5 * u1, w), -2.5 * h(u1, w), atol=1e-12)
    np.testing.assert_allclose(h(u1, 0.75 * w), 0.75 * h(u1, w), atol=1e-12)


def test_q_trace_term_matches_mode_sum(field):
    op = make_dirichlet_laplacian(12)
    noise = NoiseSpec.power_decay(op, 1.0)
    brute = np.zeros(12)
    for k in range(12):
        e_k = np.zeros(12)
        e_k[k] = math.sqrt(noise.q[k])
        brute += nemytskii_hessian_apply(SINE, field, e_k, e_k)
    np.testing.assert_allclose(q_trace_term(SINE, field, noise), brute, atol=1e-10)
    np.testing.assert_array_equal(q_trace_term(linear(1.0), field, noise), np.zeros(12))


def test_q_trace_kernel_single_mode():
    kernel = q_trace_kernel(NoiseSpec(q=[1.0]))
    assert kernel[0] == pytest.approx(2.0 * math.sin(math.pi / 2.0) ** 2)


def test_non_finite_values_raise():
    huge = Nonlinearity(kind=NonlinearityKind.LINEAR, coef=1e308)
    with pytest.raises(NumericOverflowError):
        nemytskii_apply(huge, np.full(4, 10.0))


@given(st.floats(min_value=-3.0, max_value=3.0))
def test_sine_jacobian_is_bounded(scale):
    base = scale * np.ones(6)
    direction = np.eye(6)[0]
    out = nemytskii_jacobian_apply(SINE, base, direction)
    assert np.linalg.norm(out) <= np.linalg.norm(direction) + 1e-12


@pytest.mark.parametrize(
    "rho_decay, beta, passed",
    [
        (2.0, 2.0, True),
        (0.4, 1.5, False),
        (2.0, 1.0, False),
    ],
)
def test_validate_regime(rho_decay, beta, passed):
    op = make_dirichlet_laplacian(16)
    report = validate_regime(AssumptionParams(beta=beta, rho_decay=rho_decay), NoiseSpec.power_decay(op, rho_decay), op)
    assert report.passed is passed
    if not passed:
        assert report.messages


def test_validate_regime_tail():
    op = make_dirichlet_laplacian(16)
    good = validate_regime(AssumptionParams(beta=2.0, rho_decay=2.0), NoiseSpec.power_decay(op, 2.0), op)
    assert good.summability_exponent == pytest.approx(-2.0)
    assert math.isfinite(good.tail_estimate) and good.tail_estimate > 0.0
    bad = validate_regime(AssumptionParams(beta=1.5, rho_decay=0.4), NoiseSpec.power_decay(op, 0.4), op)
    assert not bad.decay_summable and bad.tail_estimate == math.inf


def test_validate_regime_rejects_mismatched_noise():
    with pytest.raises(InvalidArgumentError):
        validate_regime(AssumptionParams(), NoiseSpec(q=np.ones(3)), make_dirichlet_laplacian(4))

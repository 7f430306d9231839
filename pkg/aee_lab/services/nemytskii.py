"""Pseudo-spectral Nemytskii operator F(u)(x) = f(u(x)) and its derivatives.

Products are formed pointwise on the collocation grid without de-aliasing.
"""

import logging
from functools import lru_cache

import numpy as np

from aee_lab.core.exceptions import InvalidArgumentError, NumericOverflowError
from aee_lab.models.nonlinearity import Nonlinearity, NonlinearityKind, NoiseSpec
from aee_lab.models.spectral import AssumptionParams, BasisKind, RegimeReport, SpectralField, SpectralOperator
from aee_lab.services.spectral_core import sine_tables, sine_transform_to_physical, sine_transform_to_spectral

logger = logging.getLogger(__name__)


def _finite(values: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(values)):
        raise NumericOverflowError(f"Non-finite values in {what}")
    return values


def _same_length(*fields: np.ndarray) -> None:
    sizes = {np.shape(f)[-1] for f in fields}
    if len(sizes) != 1:
        raise InvalidArgumentError(f"Fields have different mode counts: {sorted(sizes)}")


def nemytskii_apply(nl: Nonlinearity, v: SpectralField) -> SpectralField:
    """F(v) = to_spectral(f(to_physical(v)))."""
    if nl.is_zero:
        return np.zeros_like(np.asarray(v, dtype=np.float64))
    values = nl.f(sine_transform_to_physical(v))
    return sine_transform_to_spectral(_finite(values, "F(u)"))


def nemytskii_jacobian_apply(nl: Nonlinearity, base: SpectralField, direction: SpectralField) -> SpectralField:
    """DF(base) direction = to_spectral(f'(base) * direction) on the grid."""
    _same_length(base, direction)
    if nl.is_zero:
        return np.zeros(np.broadcast_shapes(np.shape(base), np.shape(direction)))
    slope = nl.df(sine_transform_to_physical(base))
    values = slope * sine_transform_to_physical(direction)
    return sine_transform_to_spectral(_finite(values, "DF(u)v"))


def nemytskii_hessian_apply(nl: Nonlinearity, base: SpectralField, u: SpectralField, w: SpectralField) -> SpectralField:
    """D^2F(base)(u, w) = to_spectral(f''(base) * u * w) on the grid."""
    _same_length(base, u, w)
    shape = np.broadcast_shapes(np.shape(base), np.shape(u), np.shape(w))
    if nl.is_zero:
        return np.zeros(shape)
    curvature = nl.d2f(sine_transform_to_physical(base))
    values = curvature * (sine_transform_to_physical(u) * sine_transform_to_physical(w))
    return sine_transform_to_spectral(_finite(values, "D2F(u)(v,w)"))


@lru_cache(maxsize=64)
def _q_kernel_cached(q_bytes: bytes, n: int) -> np.ndarray:
    q = np.frombuffer(q_bytes, dtype=np.float64)
    forward, _ = sine_tables(n)
    kernel = (forward**2) @ q
    kernel.setflags(write=False)
    return kernel


def q_trace_kernel(noise: NoiseSpec) -> np.ndarray:
    """kappa_Q(x_j) = sum_k q_k 2 sin^2(k pi x_j) on the collocation grid."""
    return _q_kernel_cached(noise.q.tobytes(), noise.n)


def q_trace_term(nl: Nonlinearity, base: SpectralField, noise: NoiseSpec) -> SpectralField:
    """sum_k D^2F(base)(Q^1/2 e_k, Q^1/2 e_k), evaluated as f''(base) kappa_Q."""
    base = np.asarray(base, dtype=np.float64)
    if base.shape[-1] != noise.n:
        raise InvalidArgumentError(f"Field has {base.shape[-1]} modes but noise has {noise.n}")
    if nl.is_zero or nl.kind == NonlinearityKind.LINEAR:
        return np.zeros_like(base)
    values = nl.d2f(sine_transform_to_physical(base)) * q_trace_kernel(noise)
    return sine_transform_to_spectral(_finite(values, "Q-trace term"))


def validate_regime(params: AssumptionParams, noise: NoiseSpec, op: SpectralOperator) -> RegimeReport:
    """Report whether the truncated model sits in the trace-class regime.

    Nothing is raised; failures are listed in the report and logged as warnings.
    """
    messages = []
    beta_in_range = 1.0 < params.beta <= 2.0
    if not beta_in_range:
        messages.append(f"beta={params.beta} outside (1, 2]")

    # lambda_i^(beta-1) q_i ~ i^(alpha (beta - 1 - rho)) is summable iff the exponent is < -1
    exponent = params.alpha * (params.beta - 1.0 - params.rho_decay)
    decay_summable = exponent < -1.0
    if not decay_summable:
        messages.append(
            f"decay criterion fails: beta={params.beta} >= rho_decay + 1/2 = {params.rho_decay + 0.5} "
            f"(summability exponent {exponent:.3g} >= -1)"
        )

    alpha_consistent = op.basis_kind != BasisKind.DIRICHLET_SINE or params.alpha == 2.0
    if not alpha_consistent:
        messages.append(f"alpha={params.alpha} but the Dirichlet sine basis has alpha = 2")

    proof_params_in_range = (
        1.0 <= params.eta < 2.0 and 1.0 <= params.delta < 2.0 and 0.0 <= params.sigma < params.beta
    )
    if not proof_params_in_range:
        messages.append(f"eta={params.eta}, delta={params.delta}, sigma={params.sigma} outside their ranges")

    if noise.n != op.n:
        raise InvalidArgumentError(f"Noise has {noise.n} modes but the operator has {op.n}")
    terms = op.eigenvalues ** (params.beta - 1.0) * noise.q
    hs_sum = float(np.sum(terms))
    if not decay_summable:
        tail = float("inf")
    else:
        tail = float(terms[-1] * op.n / (-exponent - 1.0))

    report = RegimeReport(
        passed=beta_in_range and decay_summable and alpha_consistent,
        beta_in_range=beta_in_range,
        decay_summable=decay_summable,
        alpha_consistent=alpha_consistent,
        proof_params_in_range=proof_params_in_range,
        hilbert_schmidt_sum=hs_sum,
        tail_estimate=tail,
        messages=messages,
        summability_exponent=exponent,
    )
    if not report.passed:
        logger.warning(f"Assumption regime check failed: {'; '.join(messages)}")
    return report

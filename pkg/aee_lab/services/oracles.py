"""Gaussian ground truth for linear drifts.

The covariance of a linear SDE dZ = G Z dt + B dW solves the Lyapunov ODE
dSigma/dt = G Sigma + Sigma G^T + B B^T. It is integrated on a fixed grid of
``steps`` points, each step being the exact one-step map
Sigma <- Phi Sigma Phi^T + Q_h with Phi = expm(G h) and Q_h obtained by matrix
fraction decomposition. Means follow dmu/dt = G mu.
"""

import logging
import math
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import expm

from aee_lab.core.config import settings
from aee_lab.core.exceptions import InvalidArgumentError
from aee_lab.models.integrators import ModelSpec, SodeDriftKind, SodeModel
from aee_lab.models.noise import GridSpec
from aee_lab.models.nonlinearity import NonlinearityKind
from aee_lab.models.oracles import LinearLimitMoments, OUMoments, SchemeErrorMoments, SodeLimitMoments

logger = logging.getLogger(__name__)

# keeps the augmented exponential below overflow for stiff modes
MAX_EXPONENT_PER_SUBSTEP = 50.0


def _one_step(G: np.ndarray, BBt: np.ndarray, h: float) -> Tuple[np.ndarray, np.ndarray]:
    """Phi = expm(G h) and the diffusion increment Q_h, batched over leading axes."""
    nx = G.shape[-1]
    stiffness = float(np.max(np.abs(np.diagonal(G, axis1=-2, axis2=-1)))) * h
    substeps = max(1, int(math.ceil(stiffness / MAX_EXPONENT_PER_SUBSTEP)))
    dt = h / substeps

    F = np.zeros(G.shape[:-2] + (2 * nx, 2 * nx))
    F[..., :nx, :nx] = G
    F[..., nx:, nx:] = -np.swapaxes(G, -1, -2)
    F[..., :nx, nx:] = BBt
    Fd = expm(F * dt)[..., :nx, :]
    phi = Fd[..., :, :nx]
    q = Fd[..., :, nx:] @ np.swapaxes(phi, -1, -2)

    phi_h = np.broadcast_to(np.eye(nx), G.shape).copy()
    q_h = np.zeros(G.shape)
    for _ in range(substeps):
        q_h = phi @ q_h @ np.swapaxes(phi, -1, -2) + q
        phi_h = phi @ phi_h
    return phi_h, 0.5 * (q_h + np.swapaxes(q_h, -1, -2))


def integrate_lyapunov(G: np.ndarray, BBt: np.ndarray, mu0: np.ndarray, t: float,
                       steps: int = None) -> Tuple[np.ndarray, np.ndarray]:
    """Mean and covariance at time t from Sigma(0) = 0, batched over leading axes."""
    steps = steps or settings.ORACLE_STEPS
    if t < 0.0:
        raise InvalidArgumentError(f"Time must be nonnegative, got {t}")
    mean = np.array(mu0, dtype=np.float64)
    cov = np.zeros(G.shape)
    if t == 0.0:
        return mean, cov
    phi, q = _one_step(G, BBt, t / steps)
    phi_t = np.swapaxes(phi, -1, -2)
    for _ in range(steps):
        cov = phi @ cov @ phi_t + q
        mean = np.einsum("...ij,...j->...i", phi, mean)
    return mean, 0.5 * (cov + np.swapaxes(cov, -1, -2))


def linear_limit_covariance(model: ModelSpec, t: float, steps: int = None) -> LinearLimitMoments:
    """Per-mode law of (X_i(t), U_i(t)) when f(x) = c x."""
    if model.nl.kind != NonlinearityKind.LINEAR:
        raise InvalidArgumentError(f"Linear oracle needs a linear nonlinearity, got {model.nl.kind.value}")
    if not 0.0 <= t <= model.T:
        raise InvalidArgumentError(f"t={t} outside [0, {model.T}]")
    c = model.nl.coef
    T = model.T
    lam = model.op.eigenvalues
    q = model.noise.q
    n = model.n

    G = np.zeros((n, 2, 2))
    G[:, 0, 0] = -lam + c
    G[:, 1, 1] = -lam + c
    G[:, 1, 0] = 0.5 * T * c * (lam - c)
    # rows (sqrt q, 0) and (-T/2 c sqrt q, -sqrt(3) T/6 c sqrt q); the U weight sums to T^2/3
    BBt = np.zeros((n, 2, 2))
    BBt[:, 0, 0] = q
    BBt[:, 0, 1] = BBt[:, 1, 0] = -0.5 * T * c * q
    BBt[:, 1, 1] = (T**2 / 3.0) * c**2 * q
    mu0 = np.stack([model.X0, np.zeros(n)], axis=-1)

    mean, cov = integrate_lyapunov(G, BBt, mu0, t, steps)
    return LinearLimitMoments(t=t, mean=mean, covariance=cov)


def linear_scheme_error_moments(model: ModelSpec, grid: GridSpec, coarse_m: int,
                                galerkin_modes: Optional[int] = None) -> SchemeErrorMoments:
    """Exact per-mode law of m (X^m(T) - X(T)) when f(x) = c x and X is the fine-grid scheme.

    Both solutions are linear in X0 and in the fine convolution increments, so
    with a = e^{-lambda tau} + c phi1(tau) and b = e^{-lambda h} + c phi1(h) the
    error over M fine steps is m (a^m - b^M) X0 plus a weighted sum of
    independent increments.
    Fine step j inside coarse step k at offset r carries the weight
    a^{m-1-k} e^{-lambda (R-1-r) h} - b^{M-1-j}.

    Args:
        model: SPDE model with a linear nonlinearity.
        grid: Nested grid whose fine steps define the reference.
        coarse_m: Coarse step count; must divide the fine step count.
        galerkin_modes: Modes kept by a fully discrete scheme. The scheme is
            zero above them, so there the error is minus m times the reference.

    Returns:
        SchemeErrorMoments with the mean and variance of each mode. Modes are
        independent, so the covariance is diagonal.

    Raises:
        InvalidArgumentError: For a nonlinear model, a horizon mismatch or a
            step count that does not divide the fine grid.
    """
    if model.nl.kind != NonlinearityKind.LINEAR:
        raise InvalidArgumentError(f"Scheme error law needs a linear nonlinearity, got {model.nl.kind.value}")
    if not math.isclose(grid.T, model.T):
        raise InvalidArgumentError(f"Grid horizon {grid.T} differs from model horizon {model.T}")
    try:
        r_fine = grid.steps_per_coarse(coarse_m)
    except ValueError as e:
        raise InvalidArgumentError(str(e))

    c = model.nl.coef
    lam = model.op.eigenvalues[:, None]
    tau, h, total = grid.T / coarse_m, grid.h, grid.fine_steps
    a = np.exp(-lam * tau) - c * np.expm1(-lam * tau) / lam
    keep = np.ones_like(lam) if galerkin_modes is None else (np.arange(model.n)[:, None] < galerkin_modes) * 1.0
    b = np.exp(-lam * h) - c * np.expm1(-lam * h) / lam

    j = np.arange(total)
    k, r = np.divmod(j, r_fine)
    weights = keep * a ** (coarse_m - 1 - k) * np.exp(-lam * (r_fine - 1 - r) * h) - b ** (total - 1 - j)
    v_h = -np.expm1(-2.0 * lam[:, 0] * h) / (2.0 * lam[:, 0])
    variance = coarse_m**2 * model.noise.q * v_h * np.sum(weights**2, axis=-1)
    mean = coarse_m * (keep[:, 0] * a[:, 0] ** coarse_m - b[:, 0] ** total) * model.X0
    return SchemeErrorMoments(m=coarse_m, steps_per_coarse=r_fine, mean=mean, variance=variance)


def ou_exact_moments(model: ModelSpec, t: float) -> OUMoments:
    """Mean e^{-lambda t} X0 and variance q (1 - e^{-2 lambda t}) / (2 lambda) when F = 0."""
    if not model.nl.is_zero:
        logger.warning("ou_exact_moments describes the F = 0 model; the nonlinearity is ignored")
    lam = model.op.eigenvalues
    variance = model.noise.q * (-np.expm1(-2.0 * lam * t)) / (2.0 * lam)
    return OUMoments(t=t, mean=np.exp(-lam * t) * model.X0, variance=variance)


def sode_linear_limit_covariance(model: SodeModel, t: float, steps: int = None) -> SodeLimitMoments:
    """Law of the stacked (Y(t), M(t)) when b(y) = B y.

    dY = (C + B) Y dt + dW
    dM = ((C + B) M - T/2 B (C + B) Y) dt - T/2 B dW - sqrt(3) T/6 B dW~
    """
    if model.drift.kind not in (SodeDriftKind.LINEAR, SodeDriftKind.ZERO):
        raise InvalidArgumentError(f"SODE oracle needs a linear drift, got {model.drift.kind.value}")
    if not 0.0 <= t <= model.T:
        raise InvalidArgumentError(f"t={t} outside [0, {model.T}]")
    d = model.d
    T = model.T
    C = model.C
    B = model.drift.B if model.drift.kind == SodeDriftKind.LINEAR else np.zeros((d, d))
    K = C + B
    eye = np.eye(d)

    G = np.zeros((2 * d, 2 * d))
    G[:d, :d] = K
    G[d:, d:] = K
    G[d:, :d] = -0.5 * T * B @ K
    diffusion = np.zeros((2 * d, 2 * d))
    diffusion[:d, :d] = eye
    diffusion[d:, :d] = -0.5 * T * B
    diffusion[d:, d:] = -(math.sqrt(3.0) / 6.0) * T * B
    mu0 = np.concatenate([model.Y0, np.zeros(d)])

    mean, cov = integrate_lyapunov(G, diffusion @ diffusion.T, mu0, t, steps)
    return SodeLimitMoments(t=t, mean=mean, covariance=cov)

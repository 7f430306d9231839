"""Estimators and tests used to compare error ensembles."""

import logging
import math
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats
from scipy.special import kolmogi, kolmogorov

from aee_lab.core.exceptions import DegenerateDataError, InvalidArgumentError
from aee_lab.models.statistics import Ensemble, KSResult, Moments, OrderFit, StatReport

logger = logging.getLogger(__name__)

# standard deviation of the Kolmogorov distribution
KS_SCALED_STD = 0.2603

# ensembles spread less than this are treated as point masses (exact schemes up to rounding)
DEGENERATE_ATOL = 1e-12


def _samples(e: Union[Ensemble, np.ndarray]) -> np.ndarray:
    x = e.samples if isinstance(e, Ensemble) else np.asarray(e, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] < 2:
        raise InvalidArgumentError("At least two samples are required")
    return x


def empirical_moments(e: Union[Ensemble, np.ndarray]) -> Moments:
    """Unbiased mean and covariance, summed in replica order with compensated (fsum) accumulation."""
    x = _samples(e)
    N, d = x.shape
    mean = np.array([math.fsum(x[:, i]) / N for i in range(d)])
    centered = x - mean
    cov = np.empty((d, d))
    for i in range(d):
        for j in range(i, d):
            cov[i, j] = cov[j, i] = math.fsum(centered[:, i] * centered[:, j]) / (N - 1)
    standard_error = np.sqrt(np.diag(cov) / N)
    return Moments(mean=mean, standard_error=standard_error, covariance=cov, N=N)


def covariance_standard_errors(e: Union[Ensemble, np.ndarray]) -> np.ndarray:
    """Standard error of each covariance entry, from the spread of the centred products."""
    x = _samples(e)
    N = x.shape[0]
    centered = x - x.mean(axis=0)
    products = centered[:, :, None] * centered[:, None, :]
    return products.std(axis=0, ddof=1) / math.sqrt(N)


def two_sample_ks(a: Sequence[float], b: Sequence[float]) -> KSResult:
    """Two-sample Kolmogorov-Smirnov statistic with the asymptotic p-value.

    Both empirical CDFs are evaluated at every pooled point, which handles ties.
    """
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    if a.size == 0 or b.size == 0:
        raise InvalidArgumentError("Both samples must be nonempty")
    pooled = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, pooled, side="right") / a.size
    cdf_b = np.searchsorted(b, pooled, side="right") / b.size
    d = float(np.max(np.abs(cdf_a - cdf_b)))
    effective = a.size * b.size / (a.size + b.size)
    p = float(np.clip(kolmogorov(math.sqrt(effective) * d), 0.0, 1.0))
    return KSResult(statistic=d, p_value=p)


def ks_effective_size(n_a: int, n_b: int) -> float:
    return n_a * n_b / (n_a + n_b)


def convergence_order_fit(pairs: Sequence[Tuple[float, float]]) -> OrderFit:
    """Least squares of log(rms) on log(m); the order is minus the slope."""
    if len(pairs) < 3:
        raise InvalidArgumentError(f"At least three (m, error) pairs are required, got {len(pairs)}")
    m = np.array([p[0] for p in pairs], dtype=np.float64)
    err = np.array([p[1] for p in pairs], dtype=np.float64)
    if np.any(m <= 0.0):
        raise InvalidArgumentError("Step counts must be positive")
    if np.all(err == 0.0):
        raise DegenerateDataError("All errors are exactly zero; the scheme is exact for this model")
    if np.any(err <= 0.0) or not np.all(np.isfinite(err)):
        raise InvalidArgumentError("Errors must be positive and finite to take logarithms")

    x = np.log(m)
    y = np.log(err)
    slope, intercept = np.polyfit(x, y, 1)
    residuals = y - (slope * x + intercept)
    dof = x.size - 2
    sxx = float(np.sum((x - x.mean()) ** 2))
    if dof > 0 and sxx > 0.0:
        slope_se = math.sqrt(float(np.sum(residuals**2)) / dof / sxx)
        half_width = float(stats.t.ppf(0.975, dof)) * slope_se
    else:
        half_width = float("inf")
    order = -float(slope)
    return OrderFit(
        slope=float(slope),
        intercept=float(intercept),
        order=order,
        residuals=[float(r) for r in residuals],
        max_residual=float(np.max(np.abs(residuals))),
        order_low=order - half_width,
        order_high=order + half_width,
    )


def is_degenerate(x: np.ndarray, atol: float = DEGENERATE_ATOL) -> bool:
    return bool(np.all(np.ptp(x, axis=0) <= atol))


def _moment_rows(report: StatReport, a: np.ndarray, b_mean: np.ndarray, b_mean_se: np.ndarray,
                 b_cov: np.ndarray, b_cov_se: np.ndarray, n_se: float) -> None:
    mom = empirical_moments(a)
    cov_se = covariance_standard_errors(a)
    d = a.shape[1]
    for i in range(d):
        se = math.hypot(mom.standard_error[i], b_mean_se[i])
        diff = abs(mom.mean[i] - b_mean[i])
        report.add("mean_difference", f"{i + 1}", diff, n_se * se, diff <= n_se * se)
    for i in range(d):
        for j in range(i, d):
            se = math.hypot(cov_se[i, j], b_cov_se[i, j])
            diff = abs(mom.covariance[i, j] - b_cov[i, j])
            report.add("covariance_difference", f"{i + 1}-{j + 1}", diff, n_se * se, diff <= n_se * se)


def distribution_report(eU_m: Ensemble, eU: Ensemble, significance_level: float = 0.01,
                        n_se: float = 3.0) -> StatReport:
    """Per-coordinate KS tests plus mean and covariance comparisons of two independent ensembles.

    The KS level is Bonferroni-corrected across the proj_dim coordinates.
    """
    if eU_m.proj_dim != eU.proj_dim:
        raise InvalidArgumentError(f"Projection dimensions differ: {eU_m.proj_dim} vs {eU.proj_dim}")
    d = eU.proj_dim
    level = significance_level / d
    report = StatReport(label=f"{eU_m.label} vs {eU.label}", significance_level=level)
    a, b = eU_m.samples, eU.samples

    if is_degenerate(a) and is_degenerate(b) and np.allclose(a[0], b[0], rtol=0.0, atol=DEGENERATE_ATOL):
        report.degenerate = True
        report.notes.append("both ensembles are concentrated at one point")
        logger.warning(f"Degenerate comparison {report.label}: both ensembles are point masses")
        for i in range(d):
            report.add("degenerate_value", f"{i + 1}", a[0, i], 0.0, True)
        return report

    effective = ks_effective_size(a.shape[0], b.shape[0])
    critical = float(kolmogi(level)) / math.sqrt(effective)
    for i in range(d):
        ks = two_sample_ks(a[:, i], b[:, i])
        report.add("ks_statistic", f"{i + 1}", ks.statistic, critical, ks.statistic <= critical)
        report.add("ks_p_value", f"{i + 1}", ks.p_value, level, ks.p_value > level)

    b_mom = empirical_moments(b)
    _moment_rows(report, a, b_mom.mean, b_mom.standard_error, b_mom.covariance,
                 covariance_standard_errors(b), n_se)
    return report


def oracle_report(ensemble: Ensemble, mean: np.ndarray, covariance: np.ndarray, n_se: float = 3.0,
                  rel_var_tol: Optional[float] = None, rel_var_modes: int = 0,
                  rel_var_reference: Optional[np.ndarray] = None) -> StatReport:
    """Compare an ensemble with a Gaussian law entry by entry in units of sample standard errors.

    With ``rel_var_tol`` the sample variances of the first ``rel_var_modes``
    coordinates must also lie within that relative distance of
    ``rel_var_reference`` (the oracle diagonal when not given).
    """
    mean = np.asarray(mean, dtype=np.float64)
    covariance = np.asarray(covariance, dtype=np.float64)
    d = ensemble.proj_dim
    if mean.shape != (d,) or covariance.shape != (d, d):
        raise InvalidArgumentError(f"Oracle shapes {mean.shape}, {covariance.shape} do not match dimension {d}")
    report = StatReport(label=f"{ensemble.label} vs oracle")
    _moment_rows(report, ensemble.samples, mean, np.zeros(d), covariance, np.zeros((d, d)), n_se)

    if rel_var_tol is not None:
        sample_var = empirical_moments(ensemble).covariance.diagonal()
        reference = covariance.diagonal() if rel_var_reference is None else np.asarray(rel_var_reference, dtype=np.float64)
        for i in range(min(rel_var_modes, d)):
            if reference[i] == 0.0:
                report.notes.append(f"relative variance check skipped for coordinate {i + 1}: oracle variance is 0")
                continue
            rel = abs(sample_var[i] / reference[i] - 1.0)
            report.add("relative_variance_error", f"{i + 1}", rel, rel_var_tol, rel <= rel_var_tol)
    return report


def ks_trend_check(distances: np.ndarray, effective_sizes: Sequence[float], report: StatReport,
                   n_se: float = 2.0) -> bool:
    """KS distances must not increase along the m sequence by more than n_se sampling standard errors.

    ``distances`` has shape (len(m sequence), proj_dim); results are appended to ``report``.
    """
    distances = np.atleast_2d(np.asarray(distances, dtype=np.float64))
    se = KS_SCALED_STD / np.sqrt(np.asarray(effective_sizes, dtype=np.float64))
    passed = True
    for k in range(distances.shape[0] - 1):
        tolerance = n_se * math.hypot(se[k], se[k + 1])
        for i in range(distances.shape[1]):
            increase = distances[k + 1, i] - distances[k, i]
            ok = increase <= tolerance
            passed = passed and ok
            report.add("ks_trend_increase", f"{i + 1}@{k + 1}->{k + 2}", increase, tolerance, ok)
    return passed

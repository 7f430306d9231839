"""Command-line runner for the AEE error laboratory.

Subcommands: ``order``, ``distribution``, ``sode`` and ``selftest``.
Exit codes: 0 pass, 1 acceptance failure, 2 configuration error, 3 numeric failure.
"""

import argparse
import logging
import math
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from aee_lab.core.config import settings
from aee_lab.core.exceptions import ConfigError, InvalidArgumentError, NumericOverflowError, ReplicaFailedError
from aee_lab.models.experiment import ExperimentConfig
from aee_lab.models.integrators import ModelSpec, SodeDrift, SodeDriftKind, SodeModel
from aee_lab.models.noise import GridSpec
from aee_lab.models.nonlinearity import NoiseSpec, Nonlinearity, NonlinearityKind
from aee_lab.models.spectral import AssumptionParams
from aee_lab.models.statistics import Ensemble, StatReport
from aee_lab.services.error_lab import ErrorLab, rms_error
from aee_lab.services.nemytskii import validate_regime
from aee_lab.services.oracles import linear_limit_covariance, linear_scheme_error_moments, sode_linear_limit_covariance
from aee_lab.services.selftest import run_selftest
from aee_lab.services.spectral_core import make_dirichlet_laplacian
from aee_lab.services.statistics import (
    DEGENERATE_ATOL,
    convergence_order_fit,
    distribution_report,
    ks_effective_size,
    ks_trend_check,
    oracle_report,
)
from aee_lab.utils.csv_writer import write_ensemble_csv, write_report_csv, write_table_csv
from aee_lab.utils.fingerprint import config_fingerprint

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ACCEPTANCE = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def build_model(cfg: ExperimentConfig) -> ModelSpec:
    op = make_dirichlet_laplacian(cfg.n)
    try:
        return ModelSpec(
            op=op,
            nl=Nonlinearity(kind=cfg.preset, coef=cfg.coef),
            noise=NoiseSpec.power_decay(op, cfg.rho_decay),
            params=AssumptionParams(beta=cfg.beta, rho_decay=cfg.rho_decay, alpha=cfg.alpha),
            T=cfg.horizon,
            X0=cfg.initial_coefficients(),
        )
    except ValidationError as e:
        raise ConfigError(f"Invalid model: {e}")


def build_sode_model(cfg: ExperimentConfig) -> SodeModel:
    try:
        drift = SodeDrift(
            kind=cfg.sode_b,
            B=cfg.sode_b_matrix if cfg.sode_b == SodeDriftKind.LINEAR else None,
            coef=cfg.sode_coef,
        )
        return SodeModel(C=cfg.sode_c, drift=drift, T=cfg.horizon, Y0=cfg.sode_y0)
    except ValidationError as e:
        raise ConfigError(f"Invalid SODE model: {e}")


def nested_grid(cfg: ExperimentConfig, m_list: Sequence[int]) -> GridSpec:
    """One fine grid on which every m in ``m_list`` is a coarsening."""
    return GridSpec(T=cfg.horizon, m=math.lcm(*m_list), refine=cfg.refine)


def _fingerprint(cfg: ExperimentConfig, command: str) -> str:
    return config_fingerprint(cfg.model_dump(mode="json", exclude={"output_dir"}), command)


def _print_report(report: StatReport) -> None:
    status = "PASS" if report.passed else "FAIL"
    flag = " (degenerate)" if report.degenerate else ""
    print(f"  {report.label}: {status}{flag}")
    for row in report.failures():
        print(f"    {row.metric}[{row.coordinate}] = {row.value:.6g} (tolerance {row.tolerance:.6g})")
    for note in report.notes:
        print(f"    note: {note}")


def _order_report(cfg: ExperimentConfig, label: str, ensembles: Dict[int, Ensemble], out: Path,
                  fingerprint: str) -> StatReport:
    """Fit the mean-square order and write order.csv and the summary; degenerate runs pass."""
    m_values = sorted(ensembles)
    rms = [rms_error(ensembles[m]) for m in m_values]
    report = StatReport(label=label)

    if max(rms) <= DEGENERATE_ATOL:
        report.degenerate = True
        report.notes.append("all errors vanish: the scheme is exact for this model")
        write_table_csv([{"m": m, "rms_error": e, "log_residual": 0.0} for m, e in zip(m_values, rms)],
                        ["m", "rms_error", "log_residual"], out / "order.csv", fingerprint)
        report.add("max_rms_error", "all", max(rms), DEGENERATE_ATOL, True)
    else:
        fit = convergence_order_fit(list(zip(m_values, rms)))
        write_table_csv(
            [{"m": m, "rms_error": e, "log_residual": r} for m, e, r in zip(m_values, rms, fit.residuals)],
            ["m", "rms_error", "log_residual"], out / "order.csv", fingerprint,
        )
        low, high = cfg.order_band
        report.add("order_lower_bound", "-", fit.order, low, fit.order >= low)
        report.add("order_upper_bound", "-", fit.order, high, fit.order <= high)
        report.add("max_log_residual", "-", fit.max_residual, cfg.max_log_residual,
                   fit.max_residual < cfg.max_log_residual)
        report.add("order_ci_low", "-", fit.order_low, float("nan"), True)
        report.add("order_ci_high", "-", fit.order_high, float("nan"), True)
        logger.info(f"Fitted order {fit.order:.4f} (95% band {fit.order_low:.4f}..{fit.order_high:.4f})")

    write_report_csv(report, out / "order_summary.csv", fingerprint)
    return report


def cmd_order(cfg: ExperimentConfig, lab: ErrorLab) -> int:
    model = build_model(cfg)
    validate_regime(model.params, model.noise, model.op)
    grid = nested_grid(cfg, cfg.m_list)
    out = Path(cfg.output_dir)
    fingerprint = _fingerprint(cfg, "order")
    logger.info(f"Order experiment: preset={cfg.preset.value}, n={cfg.n}, m={cfg.m_list}, N={cfg.replicas}")

    ensembles = lab.run_error_ensembles(model, grid, cfg.m_list, cfg.replicas, cfg.proj_dim, cfg.master_seed)
    for m, ensemble in ensembles.items():
        write_ensemble_csv(ensemble, out / f"ensemble_U_m{m}.csv")
    report = _order_report(cfg, "mean-square order", ensembles, out, fingerprint)

    print("order:")
    _print_report(report)
    return EXIT_OK if report.passed else EXIT_ACCEPTANCE


def _linear_oracle(model: ModelSpec, proj_dim: int):
    moments = linear_limit_covariance(model, model.T, settings.ORACLE_STEPS)
    mean = moments.mean_u[:proj_dim]
    covariance = np.diag(moments.var_u[:proj_dim])
    return mean, covariance


def cmd_distribution(cfg: ExperimentConfig, lab: ErrorLab) -> int:
    if cfg.fully_discrete:
        cfg.check_iota()
    model = build_model(cfg)
    validate_regime(model.params, model.noise, model.op)
    m_list = cfg.distribution_m_list
    grid = nested_grid(cfg, m_list)
    out = Path(cfg.output_dir)
    fingerprint = _fingerprint(cfg, "distribution")
    galerkin = {m: cfg.galerkin_modes(m) for m in m_list}
    logger.info(f"Distribution experiment: preset={cfg.preset.value}, m={m_list}, Galerkin modes={galerkin}")

    ensembles = lab.run_error_ensembles(model, grid, m_list, cfg.replicas, cfg.proj_dim, cfg.master_seed, galerkin)
    limit = lab.run_limit_ensemble(model, grid, cfg.replicas, cfg.proj_dim, cfg.master_seed)
    for m, ensemble in ensembles.items():
        write_ensemble_csv(ensemble, out / f"ensemble_U_m{m}.csv")
    write_ensemble_csv(limit, out / "ensemble_U.csv")

    print("distribution:")
    reports: List[StatReport] = []
    distances, sizes = [], []
    for m in m_list:
        report = distribution_report(ensembles[m], limit, cfg.significance_level, cfg.n_se)
        write_report_csv(report, out / f"report_m{m}.csv", fingerprint)
        reports.append(report)
        if not report.degenerate:
            distances.append([row.value for row in report.rows if row.metric == "ks_statistic"])
            sizes.append(ks_effective_size(ensembles[m].N, limit.N))
        _print_report(report)

    # only the finest m must match the limit law; coarser reports feed the trend
    checks = [reports[-1]]
    if len(distances) > 1:
        trend = StatReport(label="KS distance trend")
        ks_trend_check(np.array(distances), sizes, trend)
        write_report_csv(trend, out / "ks_trend.csv", fingerprint)
        checks.append(trend)
        _print_report(trend)

    if model.nl.kind == NonlinearityKind.LINEAR and not reports[-1].degenerate:
        mean, covariance = _linear_oracle(model, cfg.proj_dim)
        m = m_list[-1]
        # U^m follows its own finite-m law; the limit law only bounds its variances
        finite = linear_scheme_error_moments(model, grid, m, galerkin[m])
        oracles = [
            oracle_report(limit, mean, covariance, cfg.n_se),
            oracle_report(ensembles[m], finite.mean[:cfg.proj_dim], np.diag(finite.variance[:cfg.proj_dim]),
                          cfg.n_se, cfg.rel_var_tol, cfg.rel_var_modes, rel_var_reference=np.diag(covariance)),
        ]
        for ensemble, report in zip((limit, ensembles[m]), oracles):
            write_report_csv(report, out / f"oracle_{ensemble.label.replace('^', '_m')}.csv", fingerprint)
            checks.append(report)
            _print_report(report)

    return EXIT_OK if all(r.passed for r in checks) else EXIT_ACCEPTANCE


def cmd_sode(cfg: ExperimentConfig, lab: ErrorLab) -> int:
    model = build_sode_model(cfg)
    m_list = cfg.sode_m_list
    grid = nested_grid(cfg, m_list)
    out = Path(cfg.output_dir)
    fingerprint = _fingerprint(cfg, "sode")
    logger.info(f"SODE experiment: d={model.d}, drift={model.drift.kind.value}, m={m_list}, N={cfg.replicas}")

    ensembles = lab.run_sode_error_ensembles(model, grid, m_list, cfg.replicas, cfg.master_seed)
    joint = lab.run_sode_limit_ensemble(model, grid, cfg.replicas, cfg.master_seed, with_state=True)
    limit = Ensemble(samples=joint.samples[:, model.d:], replica_ids=joint.replica_ids, label="M",
                     fingerprint=joint.fingerprint)
    for m, ensemble in ensembles.items():
        write_ensemble_csv(ensemble, out / f"ensemble_M_m{m}.csv")
    write_ensemble_csv(limit, out / "ensemble_M.csv")

    print("sode:")
    checks = [_order_report(cfg, "SODE mean-square order", ensembles, out, fingerprint)]
    _print_report(checks[0])

    report = distribution_report(ensembles[m_list[-1]], limit, cfg.significance_level, cfg.n_se)
    write_report_csv(report, out / f"report_m{m_list[-1]}.csv", fingerprint)
    checks.append(report)
    _print_report(report)

    if model.drift.kind == SodeDriftKind.LINEAR and not report.degenerate:
        moments = sode_linear_limit_covariance(model, model.T, settings.ORACLE_STEPS)
        oracles = {
            "oracle_YM.csv": oracle_report(joint, moments.mean, moments.covariance, cfg.n_se),
            f"oracle_M_m{m_list[-1]}.csv": oracle_report(ensembles[m_list[-1]], moments.m_mean, moments.m_covariance,
                                                         cfg.n_se, cfg.rel_var_tol, min(cfg.rel_var_modes, model.d)),
        }
        for name, oracle in oracles.items():
            write_report_csv(oracle, out / name, fingerprint)
            checks.append(oracle)
            _print_report(oracle)

    return EXIT_OK if all(r.passed for r in checks) else EXIT_ACCEPTANCE


def cmd_selftest(golden_path: Optional[Path] = None, record: bool = False) -> int:
    passed, failed = run_selftest(golden_path, record)
    if passed:
        print("selftest: all checks passed")
        return EXIT_OK
    print(f"selftest: FAILED checks: {', '.join(failed)}")
    return EXIT_ACCEPTANCE


COMMANDS = {
    "order": cmd_order,
    "distribution": cmd_distribution,
    "sode": cmd_sode,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aee_lab", description=settings.APP_DESCRIPTION)
    parser.add_argument("--version", action="version", version=f"%(prog)s {settings.APP_VERSION}")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="Experiment file of key=value lines")
    common.add_argument("--seed", type=int, help="Master seed (unsigned 64-bit)")
    common.add_argument("--threads", type=int, help="Replica worker processes (default: AEE_THREADS or 1)")
    common.add_argument("--out", type=Path, help="Output directory for CSV artifacts")
    common.add_argument("--log-level", default=settings.LOG_LEVEL, help="Logging level")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("order", parents=[common], help="Mean-square convergence order of the scheme")
    sub.add_parser("distribution", parents=[common], help="Normalised error ensembles against the limit law")
    sub.add_parser("sode", parents=[common], help="Finite-dimensional counterpart of the distribution experiment")
    selftest = sub.add_parser("selftest", parents=[common], help="Deterministic invariant suite")
    selftest.add_argument("--golden", type=Path, help="Golden noise file (default: bundled)")
    selftest.add_argument("--record-golden", action="store_true",
                          help="Write the golden noise file after the pinned entries check out")
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    overrides = {"master_seed": args.seed, "output_dir": args.out}
    if args.config is not None:
        return ExperimentConfig.from_file(args.config, **overrides)
    return ExperimentConfig.parse_values({k: v for k, v in overrides.items() if v is not None})


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=[logging.StreamHandler()],
        force=True,
    )

    try:
        if args.command == "selftest":
            return cmd_selftest(args.golden, args.record_golden)
        if args.threads is not None and args.threads < 1:
            raise ConfigError(f"--threads must be at least 1, got {args.threads}")
        cfg = load_config(args)
        return COMMANDS[args.command](cfg, ErrorLab(threads=args.threads))
    except (ConfigError, ValidationError, InvalidArgumentError) as e:
        logger.error(f"Configuration error: {e}")
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ReplicaFailedError as e:
        logger.error(f"Replica with stream id {e.stream_id} failed: {e.cause}")
        return EXIT_NUMERIC
    except NumericOverflowError as e:
        logger.error(f"Numeric failure: {e}")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

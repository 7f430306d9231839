import logging
from pathlib import Path
from typing import Dict, List

import pandas as pd

from aee_lab.models.statistics import Ensemble, StatReport

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


def _write(df: pd.DataFrame, path: Path, fingerprint: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(f"# fingerprint={fingerprint}\n")
        df.to_csv(f, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info(f"Wrote {len(df)} rows to {path}")
    return path


def write_ensemble_csv(ensemble: Ensemble, path: Path) -> Path:
    """Columns: replica, coord_1..coord_k."""
    df = pd.DataFrame(ensemble.samples, columns=[f"coord_{i + 1}" for i in range(ensemble.proj_dim)])
    df.insert(0, "replica", ensemble.replica_ids)
    return _write(df, path, ensemble.fingerprint)


def write_report_csv(report: StatReport, path: Path, fingerprint: str) -> Path:
    """Long format: metric, coordinate, value, tolerance, pass."""
    df = pd.DataFrame(
        [
            {"metric": r.metric, "coordinate": r.coordinate, "value": r.value,
             "tolerance": r.tolerance, "pass": r.passed}
            for r in report.rows
        ],
        columns=["metric", "coordinate", "value", "tolerance", "pass"],
    )
    return _write(df, path, fingerprint)


def write_table_csv(rows: List[Dict], columns: List[str], path: Path, fingerprint: str) -> Path:
    return _write(pd.DataFrame(rows, columns=columns), path, fingerprint)

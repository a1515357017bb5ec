"""
CSV reports: the per-experiment metrics table, ROC points for plotting and
the per-fold training report.
"""
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple

import pandas as pd

from utils.logging_config import get_logger

from .roc import RocCurve
from .summary import RunSummary

log = get_logger(__name__)

METRICS_COLUMNS = ["model", "task", "magnification", "run_aucs", "mean", "std", "auc"]
METRICS_KEY = ["model", "task", "magnification"]


def metrics_row(model: str, task: str, magnification: str, summary: RunSummary) -> Dict[str, object]:
    return {
        "model": model,
        "task": task,
        "magnification": magnification,
        "run_aucs": ";".join(f"{a:.6f}" for a in summary.aucs),
        "mean": round(summary.mean, 6),
        "std": round(summary.std, 6),
        "auc": summary.formatted,
    }


def _key(row: Dict[str, object]) -> Tuple[str, str, str]:
    return tuple(str(row[k]) for k in METRICS_KEY)


def write_metrics_report(rows: Iterable[Dict[str, object]], path: Path, merge: bool = True) -> Path:
    """Write metrics rows.

    With ``merge`` an existing report keeps its rows; a new row sharing a
    (model, task, magnification) key replaces the old one in place, other new
    rows go at the end. Re-running the same command leaves the file unchanged.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    records = [dict(r) for r in rows]
    if merge and path.exists():
        merged = pd.read_csv(path, dtype={"run_aucs": str, "magnification": str, "task": str}).to_dict("records")
        position = {_key(r): i for i, r in enumerate(merged)}
        for rec in records:
            if _key(rec) in position:
                merged[position[_key(rec)]] = rec
            else:
                position[_key(rec)] = len(merged)
                merged.append(rec)
        records = merged
    df = pd.DataFrame(records, columns=METRICS_COLUMNS)
    df.to_csv(path, index=False)
    log.info("Metrics report: %d row(s) in %s", len(df), path)
    return path


def write_roc_points(curves: Sequence[RocCurve], path: Path) -> Path:
    """One row per curve point, keyed by the run index."""
    frames: List[pd.DataFrame] = []
    for run, curve in enumerate(curves):
        frames.append(pd.DataFrame({"run": run, "fpr": curve.fpr, "tpr": curve.tpr,
                                    "threshold": curve.thresholds}))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.concat(frames, ignore_index=True).to_csv(path, index=False)
    return path


def write_fold_report(rows: Iterable[Dict[str, object]], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(list(rows)).to_csv(path, index=False)
    log.info("Fold report written to %s", path)
    return path

from dataclasses import dataclass
from typing import List, Sequence, Tuple, TypeVar

import numpy as np

from utils.errors import ConfigError
from utils.logging_config import get_logger

log = get_logger(__name__)

T = TypeVar("T")


@dataclass
class RunSummary:
    aucs: List[float]
    mean: float
    std: float

    @property
    def formatted(self) -> str:
        return f"{self.mean:.3f} ± {self.std:.3f}"

    def __str__(self) -> str:
        return self.formatted


def aggregate_runs(aucs: Sequence[float]) -> RunSummary:
    """Mean and sample (n - 1) standard deviation over independent runs."""
    values = [float(a) for a in aucs]
    if len(values) < 2:
        raise ConfigError(f"aggregating needs at least 2 runs, got {len(values)}")
    arr = np.asarray(values)
    return RunSummary(aucs=values, mean=float(arr.mean()), std=float(arr.std(ddof=1)))


def best_fold_index(val_aucs: Sequence[float]) -> int:
    """Fold with the highest validation AUC; lowest index wins ties, NaN folds never win."""
    if len(val_aucs) < 2:
        raise ConfigError(f"best-fold selection needs at least 2 folds, got {len(val_aucs)}")
    arr = np.asarray(val_aucs, dtype=np.float64)
    if np.all(np.isnan(arr)):
        log.warning("No fold has a defined validation AUC; keeping fold 0")
        return 0
    return int(np.nanargmax(arr))


def select_best_fold(models: Sequence[T], val_aucs: Sequence[float]) -> Tuple[int, T]:
    if len(models) != len(val_aucs):
        raise ConfigError(f"{len(models)} fold models for {len(val_aucs)} validation AUCs")
    idx = best_fold_index(val_aucs)
    return idx, models[idx]


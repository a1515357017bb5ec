"""
ROC curves from a threshold sweep over the distinct scores.

Counts stay integral until the final division, so the trapezoidal area is
exactly the Mann-Whitney statistic with tied pairs credited 1/2.
"""
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from numpy.typing import ArrayLike

from utils.errors import DegenerateLabelsError, DimensionError, InputError


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray

    @property
    def points(self) -> List[Tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


def _validated(scores: ArrayLike, labels: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if s.shape != y.shape:
        raise DimensionError(f"{s.size} scores for {y.size} labels")
    if not np.all(np.isfinite(s)):
        raise InputError("scores must be finite")
    if not np.all((y == 0) | (y == 1)):
        raise InputError("labels must be 0 or 1")
    y = y.astype(np.int64)
    if y.sum() == 0 or y.sum() == y.size:
        raise DegenerateLabelsError("ROC needs both positive and negative labels")
    return s, y


def roc_curve(scores: ArrayLike, labels: ArrayLike) -> Tuple[RocCurve, np.ndarray, np.ndarray]:
    """Curve plus the integer cumulative (fp, tp) counts behind it."""
    s, y = _validated(scores, labels)
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    # last index of every run of equal scores
    ends = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp = np.r_[0, np.cumsum(y)[ends]]
    fp = np.r_[0, np.cumsum(1 - y)[ends]]
    thresholds = np.r_[np.inf, s[ends]]
    curve = RocCurve(fpr=fp / fp[-1], tpr=tp / tp[-1], thresholds=thresholds)
    return curve, fp, tp


def roc_auc(scores: ArrayLike, labels: ArrayLike) -> Tuple[RocCurve, float]:
    curve, fp, tp = roc_curve(scores, labels)
    twice_area = int(np.sum(np.diff(fp) * (tp[1:] + tp[:-1])))
    return curve, twice_area / (2 * int(fp[-1]) * int(tp[-1]))


def auc_score(scores: ArrayLike, labels: ArrayLike) -> float:
    return roc_auc(scores, labels)[1]

"""
Stratified train/test split and stratified k-fold.

Within each class the order is a seeded permutation. Folds are filled
round-robin over the concatenated class orders, which keeps every fold's
class ratio within one bag of the overall ratio and hands remainders to the
lowest fold indices first.
"""
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from utils.errors import ConfigError, DegenerateDatasetError

from .bags import Bag, labels_of


@dataclass
class DatasetSplit:
    train: List[Bag]
    test: List[Bag]
    folds: List[np.ndarray] = field(default_factory=list)

    def fold_bags(self, i: int):
        """(train bags, validation bags) of fold ``i``."""
        val_idx = set(self.folds[i].tolist())
        fit = [b for j, b in enumerate(self.train) if j not in val_idx]
        val = [self.train[j] for j in sorted(val_idx)]
        return fit, val


def _class_indices(labels: np.ndarray, rng: np.random.Generator):
    out = []
    for cls in (0, 1):
        idx = np.flatnonzero(labels == cls)
        out.append(idx[rng.permutation(idx.size)])
    return out


def _require_both_classes(labels: np.ndarray, minimum: int = 1) -> None:
    counts = np.bincount(labels, minlength=2)
    if counts.min() < minimum:
        raise DegenerateDatasetError(
            f"need at least {minimum} bag(s) of each class, got {counts[0]} negative / {counts[1]} positive")


def split_train_test(bags: Sequence[Bag], test_frac: float = 0.2, seed: int = 0,
                     k: Optional[int] = None) -> DatasetSplit:
    if not 0 < test_frac < 1:
        raise ConfigError(f"test_frac must lie in (0, 1), got {test_frac}")
    if len(bags) < 5:
        raise DegenerateDatasetError(f"need at least 5 bags to split, got {len(bags)}")
    labels = labels_of(bags)
    _require_both_classes(labels, minimum=2)

    rng = np.random.default_rng(seed)
    test_idx, train_idx = [], []
    for idx in _class_indices(labels, rng):
        n_test = int(np.clip(round(test_frac * idx.size), 1, idx.size - 1))
        test_idx.extend(idx[:n_test].tolist())
        train_idx.extend(idx[n_test:].tolist())

    # shuffled order, not class-sorted
    train_idx = [train_idx[i] for i in rng.permutation(len(train_idx))]
    test_idx = [test_idx[i] for i in rng.permutation(len(test_idx))]
    split = DatasetSplit(train=[bags[i] for i in train_idx], test=[bags[i] for i in test_idx])
    if k is not None:
        split.folds = kfold(split.train, k, seed)
    return split


def kfold(bags: Sequence[Bag], k: int = 5, seed: int = 0) -> List[np.ndarray]:
    """k disjoint, label-stratified index sets covering ``range(len(bags))``."""
    if k < 2:
        raise ConfigError(f"k-fold needs k >= 2, got {k}")
    if k > len(bags):
        raise ConfigError(f"k={k} exceeds the {len(bags)} available bags")
    rng = np.random.default_rng(seed)
    order = np.concatenate(_class_indices(labels_of(bags), rng))
    folds = [order[i::k] for i in range(k)]
    return [np.sort(f) for f in folds]


def balance_classes(bags: Sequence[Bag], seed: int = 0) -> List[Bag]:
    """Down-sample the majority class to the minority class count."""
    labels = labels_of(bags)
    _require_both_classes(labels)
    rng = np.random.default_rng(seed)
    neg, pos = _class_indices(labels, rng)
    n = min(neg.size, pos.size)
    keep = np.sort(np.concatenate([neg[:n], pos[:n]]))
    return [bags[i] for i in keep]

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike

from utils.errors import DataError, DimensionError, EmptyBagError

TileCoord = Tuple[int, int, int]  # (level, col, row)


def bag_label_oracle(instance_labels: ArrayLike) -> int:
    """0 iff every instance is negative, otherwise 1."""
    labels = np.asarray(instance_labels).reshape(-1)
    if labels.size == 0:
        raise EmptyBagError("bag has no instances")
    if not np.all((labels == 0) | (labels == 1)):
        raise DataError("instance labels must be 0 or 1")
    return int(np.any(labels == 1))


@dataclass
class Bag:
    instances: np.ndarray
    label: int
    source_id: str = ""
    instance_labels: Optional[np.ndarray] = None
    tile_coords: Optional[List[TileCoord]] = None
    # 0 for an original tile, 1.. for its augmentations
    aug_flags: Optional[np.ndarray] = None
    label_flipped: bool = field(default=False)

    def __post_init__(self):
        self.instances = np.asarray(self.instances, dtype=np.float64)
        if self.instances.ndim != 2:
            raise DimensionError(f"{self.source_id}: instances must be n x M, got {self.instances.shape}")
        if self.instances.shape[0] == 0:
            raise EmptyBagError(f"{self.source_id}: bag has no instances")
        self.label = int(self.label)
        if self.label not in (0, 1):
            raise DataError(f"{self.source_id}: bag label must be 0 or 1")
        n = self.instances.shape[0]
        if self.instance_labels is not None:
            self.instance_labels = np.asarray(self.instance_labels, dtype=np.int64)
            if self.instance_labels.shape != (n,):
                raise DimensionError(f"{self.source_id}: {self.instance_labels.shape[0]} instance labels for {n} instances")
            expected = bag_label_oracle(self.instance_labels)
            if not self.label_flipped and expected != self.label:
                raise DataError(f"{self.source_id}: label {self.label} contradicts instance labels")
        if self.tile_coords is not None:
            self.tile_coords = [tuple(int(v) for v in c) for c in self.tile_coords]
            if len(self.tile_coords) != n:
                raise DimensionError(f"{self.source_id}: {len(self.tile_coords)} coords for {n} instances")
        if self.aug_flags is not None:
            self.aug_flags = np.asarray(self.aug_flags, dtype=np.uint8)
            if self.aug_flags.shape != (n,):
                raise DimensionError(f"{self.source_id}: augmentation flags do not match instances")

    def __len__(self) -> int:
        return self.instances.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.instances.shape[1]

    def originals(self) -> "Bag":
        """The bag restricted to non-augmented instances."""
        if self.aug_flags is None:
            return self
        keep = self.aug_flags == 0
        return Bag(
            instances=self.instances[keep],
            label=self.label,
            source_id=self.source_id,
            instance_labels=None if self.instance_labels is None else self.instance_labels[keep],
            tile_coords=None if self.tile_coords is None else [c for c, k in zip(self.tile_coords, keep) if k],
            aug_flags=self.aug_flags[keep],
            label_flipped=self.label_flipped,
        )


def labels_of(bags: Sequence[Bag]) -> np.ndarray:
    return np.array([b.label for b in bags], dtype=np.int64)

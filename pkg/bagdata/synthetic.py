"""
Synthetic bags in feature space.

Negative instances are standard Gaussian in M dimensions; positive instances
are the same Gaussian shifted by ``class_separation`` along one fixed random
unit direction. Bag labels come from the MIL oracle, so the standard
assumption holds by construction (unless ``label_noise`` flips a bag, which
is then marked ``label_flipped``).
"""
from typing import List, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError, model_validator

from utils.errors import ConfigError
from utils.logging_config import get_logger

from .bags import Bag, bag_label_oracle

log = get_logger(__name__)


class SyntheticConfig(BaseModel):
    num_bags: int = Field(200, ge=1)
    n_range: Tuple[int, int] = (20, 100)
    embed_dim: int = Field(32, ge=1)
    positive_instance_rate: float = Field(0.5, gt=0, le=1)
    class_separation: float = Field(2.0, ge=0)
    label_noise: float = Field(0.0, ge=0, le=1)
    seed: int = 0

    @model_validator(mode="after")
    def _check_range(self) -> "SyntheticConfig":
        lo, hi = self.n_range
        if lo < 1 or hi < lo:
            raise ValueError(f"invalid bag size range {self.n_range}")
        return self


class PlantedConfig(BaseModel):
    """Bags laid out on a ``grid x grid`` tile grid; positives fill one square."""
    num_bags: int = Field(40, ge=1)
    grid: int = Field(8, ge=2)
    region: int = Field(3, ge=1)
    embed_dim: int = Field(16, ge=1)
    class_separation: float = Field(3.0, ge=0)
    level: int = 5
    seed: int = 0

    @model_validator(mode="after")
    def _check_region(self) -> "PlantedConfig":
        if self.region > self.grid:
            raise ValueError("planted region larger than the grid")
        return self


def _validated(model, config):
    if isinstance(config, model):
        return config
    try:
        return model(**config)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def _signal_direction(rng: np.random.Generator, dim: int) -> np.ndarray:
    u = rng.standard_normal(dim)
    return u / np.linalg.norm(u)


def _balanced_labels(rng: np.random.Generator, num_bags: int) -> np.ndarray:
    labels = np.arange(num_bags) % 2
    rng.shuffle(labels)
    return labels


def generate_synthetic(config: Union[SyntheticConfig, dict]) -> List[Bag]:
    cfg = _validated(SyntheticConfig, config)
    rng = np.random.default_rng(cfg.seed)
    direction = _signal_direction(rng, cfg.embed_dim)
    targets = _balanced_labels(rng, cfg.num_bags)
    lo, hi = cfg.n_range

    bags = []
    for i, target in enumerate(targets):
        n = int(rng.integers(lo, hi + 1))
        inst = np.zeros(n, dtype=np.int64)
        if target == 1:
            # resample until the bag holds at least one positive instance
            while inst.sum() == 0:
                inst = (rng.random(n) < cfg.positive_instance_rate).astype(np.int64)
        x = rng.standard_normal((n, cfg.embed_dim)) + cfg.class_separation * inst[:, None] * direction
        label = bag_label_oracle(inst)
        flipped = bool(cfg.label_noise > 0 and rng.random() < cfg.label_noise)
        bags.append(Bag(
            instances=x,
            label=1 - label if flipped else label,
            source_id=f"synthetic-{i:04d}",
            instance_labels=inst,
            label_flipped=flipped,
        ))
    log.debug("Generated %d synthetic bags (seed %d)", len(bags), cfg.seed)
    return bags


def generate_planted(config: Union[PlantedConfig, dict]) -> List[Bag]:
    """Positive bags carry their positive tiles in one contiguous square."""
    cfg = _validated(PlantedConfig, config)
    rng = np.random.default_rng(cfg.seed)
    direction = _signal_direction(rng, cfg.embed_dim)
    targets = _balanced_labels(rng, cfg.num_bags)
    coords = [(cfg.level, col, row) for row in range(cfg.grid) for col in range(cfg.grid)]

    bags = []
    for i, target in enumerate(targets):
        inst = np.zeros(len(coords), dtype=np.int64)
        if target == 1:
            c0, r0 = rng.integers(0, cfg.grid - cfg.region + 1, size=2)
            for k, (_, col, row) in enumerate(coords):
                if c0 <= col < c0 + cfg.region and r0 <= row < r0 + cfg.region:
                    inst[k] = 1
        x = rng.standard_normal((len(coords), cfg.embed_dim)) + cfg.class_separation * inst[:, None] * direction
        bags.append(Bag(
            instances=x,
            label=bag_label_oracle(inst),
            source_id=f"planted-{i:04d}",
            instance_labels=inst,
            tile_coords=coords,
        ))
    return bags

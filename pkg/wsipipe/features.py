"""
Tile feature extractors.

Every extractor maps one padded RGB tile to a fixed-width embedding. The
built-in ``handcrafted`` extractor concatenates per-channel histograms,
gradient-orientation statistics and block means, then projects the result to
``embed_dim`` with a seeded Gaussian matrix. Other extractors plug in by
import path (``package.module:ClassName``).
"""
import importlib
from abc import ABC, abstractmethod
from functools import lru_cache
from typing import Dict, Optional, Sequence, Type

import cv2
import numpy as np
from numpy.typing import ArrayLike

from utils.errors import ConfigError, SizeError
from utils.logging_config import get_logger

from .store import EMBED_DIM
from .tiling import TILE_SIZE

log = get_logger(__name__)


class BaseExtractor(ABC):
    name: str = "base"

    def __init__(self, tile_size: int = TILE_SIZE, embed_dim: int = EMBED_DIM):
        self.tile_size = tile_size
        self.embed_dim = embed_dim

    @abstractmethod
    def _embed(self, tile: np.ndarray) -> np.ndarray:
        pass

    def extract(self, tile: ArrayLike) -> np.ndarray:
        img = np.asarray(tile)
        expected = (self.tile_size, self.tile_size, 3)
        if img.shape != expected:
            raise SizeError(f"{self.name}: tile shape {img.shape}, expected {expected}")
        vec = np.asarray(self._embed(img.astype(np.uint8, copy=False)), dtype=np.float64).reshape(-1)
        if vec.shape[0] != self.embed_dim:
            raise SizeError(f"{self.name}: produced {vec.shape[0]} features, expected {self.embed_dim}")
        return vec

    def extract_batch(self, tiles: Sequence[ArrayLike]) -> np.ndarray:
        if not tiles:
            return np.zeros((0, self.embed_dim))
        return np.stack([self.extract(t) for t in tiles])


class HandcraftedExtractor(BaseExtractor):
    name = "handcrafted"

    def __init__(self, tile_size: int = TILE_SIZE, embed_dim: int = EMBED_DIM,
                 hist_bins: int = 32, orientation_bins: int = 16, blocks: int = 8,
                 projection_seed: int = 0):
        super().__init__(tile_size, embed_dim)
        if tile_size % blocks:
            raise ConfigError(f"tile size {tile_size} is not a multiple of the {blocks}x{blocks} block grid")
        self.hist_bins = hist_bins
        self.orientation_bins = orientation_bins
        self.blocks = blocks
        width = 3 * hist_bins + orientation_bins + 2 + 3 * blocks * blocks
        rng = np.random.default_rng(projection_seed)
        self.projection = rng.standard_normal((width, embed_dim)) / np.sqrt(width)

    def descriptor(self, img: np.ndarray) -> np.ndarray:
        n_px = img.shape[0] * img.shape[1]
        hists = [np.bincount(img[..., c].ravel().astype(np.int64) * self.hist_bins // 256, minlength=self.hist_bins) / n_px
                 for c in range(3)]

        gray = cv2.cvtColor(img, cv2.COLOR_RGB2GRAY).astype(np.float64) / 255.0
        gx = cv2.Sobel(gray, cv2.CV_64F, 1, 0, ksize=3)
        gy = cv2.Sobel(gray, cv2.CV_64F, 0, 1, ksize=3)
        magnitude = np.hypot(gx, gy)
        angle = np.mod(np.arctan2(gy, gx), np.pi)
        orient, _ = np.histogram(angle, bins=self.orientation_bins, range=(0.0, np.pi), weights=magnitude)
        total = magnitude.sum()
        orient = orient / total if total > 0 else orient
        grad_stats = np.array([magnitude.mean(), magnitude.std()])

        step = self.tile_size // self.blocks
        block_means = img.reshape(self.blocks, step, self.blocks, step, 3).mean(axis=(1, 3)) / 255.0

        return np.concatenate([*hists, orient, grad_stats, block_means.ravel()])

    def _embed(self, tile: np.ndarray) -> np.ndarray:
        return self.descriptor(tile) @ self.projection


EXTRACTORS: Dict[str, Type[BaseExtractor]] = {
    HandcraftedExtractor.name: HandcraftedExtractor,
}


def resolve_extractor(name: str) -> Type[BaseExtractor]:
    """Registry name or ``module:Class`` import path."""
    if name in EXTRACTORS:
        return EXTRACTORS[name]
    if ":" not in name:
        raise ConfigError(f"unknown extractor '{name}'; known: {', '.join(sorted(EXTRACTORS))}")
    module_name, cls_name = name.split(":", 1)
    try:
        cls = getattr(importlib.import_module(module_name), cls_name)
    except (ImportError, AttributeError) as exc:
        raise ConfigError(f"cannot load extractor '{name}': {exc}") from exc
    if not (isinstance(cls, type) and issubclass(cls, BaseExtractor)):
        raise ConfigError(f"'{name}' is not a BaseExtractor subclass")
    log.info("Loaded external extractor %s", name)
    return cls


def build_extractor(name: str = "handcrafted", tile_size: int = TILE_SIZE,
                    embed_dim: int = EMBED_DIM) -> BaseExtractor:
    return resolve_extractor(name)(tile_size=tile_size, embed_dim=embed_dim)


def extract_features(tile: ArrayLike, extractor: Optional[BaseExtractor] = None) -> np.ndarray:
    return (extractor or _default_extractor()).extract(tile)


@lru_cache(maxsize=1)
def _default_extractor() -> HandcraftedExtractor:
    return HandcraftedExtractor()

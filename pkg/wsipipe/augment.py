"""
Tile augmentation: HED stain perturbation, Gaussian noise, quarter-turn
rotation and independent flips. Every random draw comes from the seed.
"""
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from numpy.typing import ArrayLike
from skimage.color import hed2rgb, rgb2hed

from utils.errors import InputError

AUGMENTATIONS_PER_TILE = 2


@dataclass(frozen=True)
class AugmentParams:
    hed_scale: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    noise_sigma: float = 0.0
    noise_seed: int = 0
    rotation: int = 0
    flip_h: bool = False
    flip_v: bool = False

    @classmethod
    def draw(cls, rng: np.random.Generator, alpha: float, sigma: float) -> "AugmentParams":
        scale = rng.uniform(-alpha, alpha, size=3) if alpha > 0 else np.zeros(3)
        return cls(
            hed_scale=tuple(float(s) for s in scale),
            noise_sigma=float(sigma),
            noise_seed=int(rng.integers(2**31 - 1)),
            rotation=int(rng.integers(4)),
            flip_h=bool(rng.random() < 0.5),
            flip_v=bool(rng.random() < 0.5),
        )


def _as_rgb(tile: ArrayLike) -> np.ndarray:
    img = np.asarray(tile)
    if img.ndim != 3 or img.shape[2] != 3:
        raise InputError(f"expected an RGB tile, got shape {img.shape}")
    return img.astype(np.uint8, copy=False)


def perturb_hed(img: np.ndarray, scale: Tuple[float, float, float]) -> np.ndarray:
    """Scale haematoxylin, eosin and DAB channels by (1 + s)."""
    if not any(scale):
        return img
    hed = rgb2hed(img)
    hed *= 1.0 + np.asarray(scale)[None, None, :]
    rgb = hed2rgb(hed)
    return np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8)


def add_noise(img: np.ndarray, sigma: float, seed: int) -> np.ndarray:
    if sigma <= 0:
        return img
    noise = np.random.default_rng(seed).normal(0.0, sigma, size=img.shape)
    return np.clip(np.rint(img.astype(np.float64) + noise), 0, 255).astype(np.uint8)


def apply_augmentation(tile: ArrayLike, params: AugmentParams) -> np.ndarray:
    img = perturb_hed(_as_rgb(tile), params.hed_scale)
    img = add_noise(img, params.noise_sigma, params.noise_seed)
    img = np.rot90(img, k=params.rotation % 4)
    if params.flip_h:
        img = img[:, ::-1]
    if params.flip_v:
        img = img[::-1]
    return np.ascontiguousarray(img)


def augment(tile: ArrayLike, seed: int, alpha: float = 0.05, sigma: float = 2.0,
            count: int = AUGMENTATIONS_PER_TILE) -> List[np.ndarray]:
    """Return ``count`` augmented copies of ``tile``, bit-identical for a given seed."""
    rng = np.random.default_rng(seed)
    return [apply_augmentation(tile, AugmentParams.draw(rng, alpha, sigma)) for _ in range(count)]

"""
Tissue masking at thumbnail scale.

Otsu's threshold is computed on integer luma with exact integer arithmetic
so that ties are decided the same way on every platform: the smallest
threshold that maximises the between-class variance wins. Tissue is the
dark class (luma <= threshold).
"""
from dataclasses import dataclass
from typing import Tuple

import cv2
import numpy as np
from numpy.typing import ArrayLike

from utils.errors import EmptyMaskError, InputError


@dataclass
class TissueMask:
    width: int
    height: int
    bits: np.ndarray  # bool, height x width

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=bool)
        if self.bits.shape != (self.height, self.width):
            raise InputError(f"mask bits {self.bits.shape} do not match {self.height}x{self.width}")

    @classmethod
    def from_bits(cls, bits: ArrayLike) -> "TissueMask":
        bits = np.asarray(bits, dtype=bool)
        return cls(width=bits.shape[1], height=bits.shape[0], bits=bits)

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    def pixels(self) -> np.ndarray:
        """(x, y) of every tissue pixel, row-major order."""
        ys, xs = np.nonzero(self.bits)
        return np.stack([xs, ys], axis=1)


def luma(rgb: ArrayLike) -> np.ndarray:
    rgb = np.asarray(rgb, dtype=np.int32)
    return ((77 * rgb[..., 0] + 150 * rgb[..., 1] + 29 * rgb[..., 2]) >> 8).astype(np.uint8)


def histogram(gray: ArrayLike) -> np.ndarray:
    return np.bincount(np.asarray(gray, dtype=np.uint8).reshape(-1), minlength=256)


def otsu_threshold(hist: ArrayLike) -> int:
    hist = [int(c) for c in np.asarray(hist).reshape(-1)]
    if len(hist) != 256:
        raise InputError(f"histogram needs 256 bins, got {len(hist)}")
    total = sum(hist)
    if total < 1:
        raise InputError("empty histogram")
    sum_all = sum(i * c for i, c in enumerate(hist))

    # sigma_b^2 is proportional to (S0*W1 - S1*W0)^2 / (W0*W1); compare as fractions
    best_t, best_num, best_den = 0, 0, 1
    w0 = s0 = 0
    for t in range(256):
        w0 += hist[t]
        s0 += t * hist[t]
        w1, s1 = total - w0, sum_all - s0
        if w0 == 0 or w1 == 0:
            continue
        num = (s0 * w1 - s1 * w0) ** 2
        den = w0 * w1
        if num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    return best_t


def morph_close(mask: TissueMask, kernel_size: int = 3) -> TissueMask:
    """Dilation then erosion with a square element; outside the image is background."""
    r = kernel_size // 2
    kernel = np.ones((kernel_size, kernel_size), dtype=np.uint8)
    padded = np.pad(mask.bits.astype(np.uint8), r, mode="constant")
    border = dict(borderType=cv2.BORDER_CONSTANT, borderValue=0)
    closed = cv2.erode(cv2.dilate(padded, kernel, **border), kernel, **border)
    return TissueMask(mask.width, mask.height, closed[r:r + mask.height, r:r + mask.width].astype(bool))


def color_artifact_filter(mask: TissueMask, rgb: ArrayLike, max_distance: float) -> TissueMask:
    """Keep tissue pixels whose colour lies within ``max_distance`` of the mean tissue colour."""
    if mask.count == 0:
        raise EmptyMaskError("no tissue pixels to filter")
    colors = np.asarray(rgb, dtype=np.float64)[..., :3]
    mean = colors[mask.bits].mean(axis=0)
    dist = np.sqrt(((colors - mean) ** 2).sum(axis=-1))
    return TissueMask(mask.width, mask.height, mask.bits & (dist <= max_distance))


def tissue_mask(thumb_rgb: ArrayLike, max_distance: float, kernel_size: int = 3) -> Tuple[TissueMask, int]:
    """Otsu + closing + colour filter on a thumbnail; returns the mask and the threshold."""
    gray = luma(thumb_rgb)
    threshold = otsu_threshold(histogram(gray))
    mask = morph_close(TissueMask.from_bits(gray <= threshold), kernel_size)
    if mask.count == 0:
        return mask, threshold
    return color_artifact_filter(mask, thumb_rgb, max_distance), threshold


def background_color(rgb: ArrayLike, mask: TissueMask) -> np.ndarray:
    """Mean colour of non-tissue pixels (white when there are none)."""
    colors = np.asarray(rgb)[..., :3]
    bg = ~mask.bits
    if not bg.any():
        return np.array([255, 255, 255], dtype=np.uint8)
    return np.round(colors[bg].astype(np.float64).mean(axis=0)).astype(np.uint8)

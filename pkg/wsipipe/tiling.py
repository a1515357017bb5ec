"""
Pyramid geometry: slide metadata, tile references, thumbnail-to-tile mapping,
child tiles at the next magnification, padding and the tissue-fraction gate.

All coordinate mapping is integer arithmetic: a thumbnail pixel ``x`` maps to
tile column ``x * W // (thumb_w * tile_size)`` of a level ``W`` pixels wide.
"""
from dataclasses import dataclass, field
from typing import Iterable, List, Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike

from utils.errors import InputError, RangeError, SizeError

from .masking import luma

TILE_SIZE = 512
THUMB_MIN_SIDE = 64
MAG_CODES = {"thumb": 0, "5x": 5, "10x": 10, "20x": 20}
MAG_TAGS = {v: k for k, v in MAG_CODES.items()}
MAG_ORDER = ("5x", "10x", "20x")

Dims = Tuple[int, int]
Rect = Tuple[int, int, int, int]


@dataclass
class SlideMeta:
    slide_id: str
    label: int
    mpp: float
    level_dims: List[Dims]
    level_tags: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.level_dims = [(int(w), int(h)) for w, h in self.level_dims]
        for (pw, ph), (w, h) in zip(self.level_dims, self.level_dims[1:]):
            if not (w < pw and h < ph):
                raise InputError(f"{self.slide_id}: level dims must strictly decrease")
            if abs(2 * w - pw) > 2 or abs(2 * h - ph) > 2:
                raise InputError(f"{self.slide_id}: levels must halve ({pw}x{ph} -> {w}x{h})")
        if self.level_tags and len(self.level_tags) != len(self.level_dims):
            raise InputError(f"{self.slide_id}: {len(self.level_tags)} tags for {len(self.level_dims)} levels")
        for tag in self.level_tags:
            if tag not in MAG_CODES:
                raise InputError(f"{self.slide_id}: unknown level tag '{tag}'")

    def level_index(self, tag: str) -> int:
        try:
            return self.level_tags.index(tag)
        except ValueError:
            raise InputError(f"{self.slide_id}: no {tag} level in the pyramid") from None

    def dims_of(self, tag: str) -> Dims:
        return self.level_dims[self.level_index(tag)]

    @property
    def thumbnail_index(self) -> int:
        """Smallest level whose short side is still at least 64 px."""
        candidates = [i for i, (w, h) in enumerate(self.level_dims) if min(w, h) >= THUMB_MIN_SIDE]
        return candidates[-1] if candidates else 0


@dataclass(frozen=True, order=True)
class TileRef:
    # ordering follows the deterministic merge key (magnification, row, col)
    magnification: int
    row: int
    col: int
    px_rect: Rect = field(compare=False)

    @property
    def level(self) -> str:
        return MAG_TAGS[self.magnification]

    @property
    def coord(self) -> Tuple[int, int, int]:
        return (self.magnification, self.col, self.row)

    @classmethod
    def at(cls, level: str, col: int, row: int, level_dims: Dims, tile_size: int = TILE_SIZE) -> "TileRef":
        w_lvl, h_lvl = level_dims
        x, y = col * tile_size, row * tile_size
        if not (0 <= x < w_lvl and 0 <= y < h_lvl):
            raise RangeError(f"tile ({col},{row}) lies outside a {w_lvl}x{h_lvl} level")
        return cls(MAG_CODES[level], row, col, (x, y, min(tile_size, w_lvl - x), min(tile_size, h_lvl - y)))


def grid_shape(level_dims: Dims, tile_size: int = TILE_SIZE) -> Tuple[int, int]:
    w, h = level_dims
    return -(-w // tile_size), -(-h // tile_size)


def thumb_to_tile(x: int, y: int, thumb_dims: Dims, level_dims: Dims, level: str,
                  tile_size: int = TILE_SIZE) -> TileRef:
    tw, th = thumb_dims
    if not (0 <= x < tw and 0 <= y < th):
        raise RangeError(f"pixel ({x},{y}) outside a {tw}x{th} thumbnail")
    col = (x * level_dims[0]) // (tw * tile_size)
    row = (y * level_dims[1]) // (th * tile_size)
    return TileRef.at(level, col, row, level_dims, tile_size)


def thumb_to_tiles(pixels: ArrayLike, thumb_dims: Dims, level_dims: Dims, level: str,
                   tile_size: int = TILE_SIZE) -> List[TileRef]:
    """Deduplicated tiles covering the given (x, y) thumbnail pixels, sorted."""
    pts = np.asarray(pixels, dtype=np.int64).reshape(-1, 2)
    tw, th = thumb_dims
    if pts.size and (pts.min() < 0 or (pts[:, 0] >= tw).any() or (pts[:, 1] >= th).any()):
        raise RangeError(f"pixels outside a {tw}x{th} thumbnail")
    cols = (pts[:, 0] * level_dims[0]) // (tw * tile_size)
    rows = (pts[:, 1] * level_dims[1]) // (th * tile_size)
    unique = sorted(set(zip(rows.tolist(), cols.tolist())))
    return [TileRef.at(level, c, r, level_dims, tile_size) for r, c in unique]


def child_tiles(tile: TileRef, child_dims: Dims, child_level: str, tile_size: int = TILE_SIZE) -> List[TileRef]:
    cols, rows = grid_shape(child_dims, tile_size)
    out = []
    for dr in (0, 1):
        for dc in (0, 1):
            c, r = 2 * tile.col + dc, 2 * tile.row + dr
            if c < cols and r < rows:
                out.append(TileRef.at(child_level, c, r, child_dims, tile_size))
    return out


def tile_footprint(col: int, row: int, thumb_dims: Dims, level_dims: Dims,
                   tile_size: int = TILE_SIZE) -> Rect:
    """Thumbnail pixels mapping to tile (col, row), as (x0, y0, x1, y1), end-exclusive."""
    tw, th = thumb_dims
    w_lvl, h_lvl = level_dims

    def span(i: int, thumb: int, level: int) -> Tuple[int, int]:
        lo = -(-(i * thumb * tile_size) // level)
        hi = -(-((i + 1) * thumb * tile_size) // level)
        return min(lo, thumb), min(hi, thumb)

    x0, x1 = span(col, tw, w_lvl)
    y0, y1 = span(row, th, h_lvl)
    return x0, y0, x1, y1


def pad_tile(image: ArrayLike, target: int = TILE_SIZE, background: Sequence[int] = (255, 255, 255)) -> np.ndarray:
    img = np.asarray(image, dtype=np.uint8)
    h, w = img.shape[:2]
    if h < 1 or w < 1 or h > target or w > target:
        raise SizeError(f"tile of {w}x{h} cannot be padded to {target}x{target}")
    if h == target and w == target:
        return img
    out = np.empty((target, target, 3), dtype=np.uint8)
    out[...] = np.asarray(background, dtype=np.uint8)[:3]
    out[:h, :w] = img[..., :3]
    return out


def tissue_fraction(tile: ArrayLike, threshold: int) -> float:
    return float(np.mean(luma(tile) <= threshold))


def tissue_fraction_gate(tile: ArrayLike, threshold: int, min_fraction: float) -> bool:
    """True keeps the tile: its share of Otsu-tissue pixels reaches ``min_fraction``."""
    if not 0.0 <= min_fraction <= 1.0:
        raise RangeError(f"tissue fraction threshold {min_fraction} outside [0, 1]")
    if min_fraction == 0.0:
        return True
    return tissue_fraction(tile, threshold) >= min_fraction


def sort_tiles(tiles: Iterable[TileRef]) -> List[TileRef]:
    return sorted(set(tiles))

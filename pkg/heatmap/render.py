"""
Heatmaps painted onto slide thumbnails.

Each tile's score fills the tile's exact footprint on the thumbnail (the
thumbnail pixels that map into that tile). Attention is min-max normalised per
slide and coloured with matplotlib's ``viridis``; additive models also get a
contribution overlay: red where the bounded contribution is >= 0.5
(excitatory) and blue below (inhibitory). Overlays are blended with alpha 0.6.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from matplotlib import colormaps
from numpy.typing import ArrayLike
from PIL import Image

from utils.errors import DimensionError, EmptyBagError, InputError, UnsupportedModelError
from wsipipe.tiling import TILE_SIZE, Dims, tile_footprint

COLORMAP = "viridis"
OVERLAY_ALPHA = 0.6
EXCITATORY_RGB = (255, 0, 0)
INHIBITORY_RGB = (0, 0, 255)
BLANK_RGB = (255, 255, 255)
GRID_CELL = 8


@dataclass
class PatchScoreMap:
    slide_id: str
    coords: List[Tuple[int, int, int]]
    attention: np.ndarray
    thumb_dims: Dims
    level_dims: Dims
    tile_size: int = TILE_SIZE
    bounded_contribs: Optional[np.ndarray] = None
    thumbnail: Optional[np.ndarray] = None

    def __post_init__(self):
        self.coords = [tuple(int(v) for v in c) for c in self.coords]
        self.attention = np.asarray(self.attention, dtype=np.float64).reshape(-1)
        if not self.coords:
            raise EmptyBagError(f"{self.slide_id}: no tiles to render")
        if len(set(self.coords)) != len(self.coords):
            raise InputError(f"{self.slide_id}: duplicate tile coordinates")
        if self.attention.shape != (len(self.coords),):
            raise DimensionError(f"{self.slide_id}: {self.attention.size} scores for {len(self.coords)} tiles")
        if self.bounded_contribs is not None:
            self.bounded_contribs = np.asarray(self.bounded_contribs, dtype=np.float64).reshape(-1)
            if self.bounded_contribs.shape != self.attention.shape:
                raise DimensionError(f"{self.slide_id}: contributions do not match the tiles")
        if self.thumbnail is not None:
            h, w = self.thumbnail.shape[:2]
            if (w, h) != tuple(self.thumb_dims):
                raise DimensionError(f"{self.slide_id}: thumbnail is {w}x{h}, expected {self.thumb_dims}")

    @classmethod
    def on_grid(cls, slide_id: str, coords: Sequence[Tuple[int, int, int]], attention: ArrayLike,
                bounded_contribs: Optional[ArrayLike] = None, cell: int = GRID_CELL,
                tile_size: int = TILE_SIZE) -> "PatchScoreMap":
        """Map on a blank canvas where every tile is a ``cell`` x ``cell`` square."""
        cols = max(c[1] for c in coords) + 1
        rows = max(c[2] for c in coords) + 1
        return cls(slide_id, list(coords), np.asarray(attention), thumb_dims=(cols * cell, rows * cell),
                   level_dims=(cols * tile_size, rows * tile_size), tile_size=tile_size,
                   bounded_contribs=bounded_contribs)

    def footprints(self) -> List[Tuple[int, int, int, int]]:
        return [tile_footprint(col, row, self.thumb_dims, self.level_dims, self.tile_size)
                for _, col, row in self.coords]

    def canvas(self) -> np.ndarray:
        if self.thumbnail is not None:
            return np.array(self.thumbnail[..., :3], dtype=np.uint8)
        w, h = self.thumb_dims
        out = np.empty((h, w, 3), dtype=np.uint8)
        out[...] = BLANK_RGB
        return out


def normalise_scores(scores: ArrayLike) -> np.ndarray:
    """Min-max to [0, 1]; a single tile maps to 1 and all-equal scores to 0.5."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    if s.size == 0:
        raise EmptyBagError("no scores to normalise")
    if s.size == 1:
        return np.ones(1)
    lo, hi = s.min(), s.max()
    if hi == lo:
        return np.full(s.size, 0.5)
    return (s - lo) / (hi - lo)


def _paint(score_map: PatchScoreMap, colors: np.ndarray, alpha: float) -> np.ndarray:
    out = score_map.canvas()
    for (x0, y0, x1, y1), color in zip(score_map.footprints(), colors):
        region = out[y0:y1, x0:x1].astype(np.float64)
        out[y0:y1, x0:x1] = np.rint((1.0 - alpha) * region + alpha * color).astype(np.uint8)
    return out


def attention_colors(attention: ArrayLike) -> np.ndarray:
    rgba = colormaps[COLORMAP](normalise_scores(attention))
    return np.rint(rgba[:, :3] * 255.0)


def render_attention(score_map: PatchScoreMap, alpha: float = OVERLAY_ALPHA) -> np.ndarray:
    return _paint(score_map, attention_colors(score_map.attention), alpha)


def contribution_colors(bounded_contribs: ArrayLike) -> np.ndarray:
    c = np.asarray(bounded_contribs, dtype=np.float64).reshape(-1)
    return np.where((c >= 0.5)[:, None], np.array(EXCITATORY_RGB, dtype=np.float64),
                    np.array(INHIBITORY_RGB, dtype=np.float64))


def render_contributions(score_map: PatchScoreMap, alpha: float = OVERLAY_ALPHA) -> np.ndarray:
    if score_map.bounded_contribs is None:
        raise UnsupportedModelError(f"{score_map.slide_id}: model produces no patch contributions")
    return _paint(score_map, contribution_colors(score_map.bounded_contribs), alpha)


def write_image(image: ArrayLike, path: Path) -> Path:
    """Lossless PNG with fixed encoder settings."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(image, dtype=np.uint8)[..., :3]).save(path, format="PNG", compress_level=6)
    return path


def heatmap_path(out_dir: Path, slide_id: str, model: str, kind: str) -> Path:
    return Path(out_dir) / f"{slide_id}_{model}_{kind}.png"

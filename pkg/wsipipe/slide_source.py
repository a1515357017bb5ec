"""
Slide sources and the synthetic pyramid corpus.

A slide on disk is a directory holding one PNG per pyramid level
(``level_0.png`` is the base) and a ``slide.txt`` metadata file of
``key=value`` lines::

    slide_id=synthetic-slide-000
    label=1
    mpp=0.5
    levels=20x,10x,5x,thumb,thumb

Real WSI containers are not decoded here; an adapter only has to implement
``SlideSource``.
"""
import threading
from abc import ABC, abstractmethod
from functools import cached_property
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import cv2
import numpy as np
from dotenv import dotenv_values
from PIL import Image
from pydantic import BaseModel, Field, ValidationError

from utils.errors import ConfigError, FormatError
from utils.file_utils import ensure_dir, level_file, level_files
from utils.logging_config import get_logger
from utils.metadata import SlideRecord, write_records

from .tiling import MAG_ORDER, Rect, SlideMeta

log = get_logger(__name__)

META_FILE = "slide.txt"


class SlideSource(ABC):
    """Read access to one multi-resolution slide."""

    @property
    @abstractmethod
    def meta(self) -> SlideMeta:
        pass

    @abstractmethod
    def read_level(self, index: int) -> np.ndarray:
        """Whole level as an H x W x 3 uint8 array."""

    def read_region(self, index: int, rect: Rect) -> np.ndarray:
        x, y, w, h = rect
        return self.read_level(index)[y:y + h, x:x + w]

    def thumbnail(self) -> np.ndarray:
        return self.read_level(self.meta.thumbnail_index)


class DirectoryPyramidSource(SlideSource):
    def __init__(self, path: Path, label: Optional[int] = None, mpp: Optional[float] = None):
        self.path = Path(path)
        meta_path = self.path / META_FILE
        if not meta_path.exists():
            raise FormatError(f"{self.path}: missing {META_FILE}")
        self._info = dotenv_values(meta_path)
        self._label = label
        self._mpp = mpp
        self._levels: Dict[int, np.ndarray] = {}
        self._levels_lock = threading.Lock()

    @cached_property
    def meta(self) -> SlideMeta:
        tags = [t.strip() for t in (self._info.get("levels") or "").split(",") if t.strip()]
        on_disk = len(level_files(self.path))
        if on_disk != len(tags):
            raise FormatError(f"{self.path}: {on_disk} level images for {len(tags)} level tags")
        dims: List[Tuple[int, int]] = []
        for i in range(len(tags)):
            level_path = level_file(self.path, i)
            if not level_path.exists():
                raise FormatError(f"{self.path}: missing {level_path.name}")
            with Image.open(level_path) as im:
                dims.append(im.size)
        try:
            return SlideMeta(
                slide_id=self._info.get("slide_id") or self.path.name,
                label=int(self._label if self._label is not None else self._info.get("label", 0)),
                mpp=float(self._mpp if self._mpp is not None else self._info.get("mpp", 0.5)),
                level_dims=dims,
                level_tags=tags,
            )
        except ValueError as exc:
            raise FormatError(f"{self.path}: {exc}") from exc

    def read_level(self, index: int) -> np.ndarray:
        # tile workers share one decoded copy per level
        with self._levels_lock:
            if index not in self._levels:
                with Image.open(level_file(self.path, index)) as im:
                    self._levels[index] = np.asarray(im.convert("RGB"), dtype=np.uint8)
            return self._levels[index]


def open_slide(record: SlideRecord) -> DirectoryPyramidSource:
    return DirectoryPyramidSource(record.path, label=record.label, mpp=record.mpp)


class SyntheticPyramidConfig(BaseModel):
    num_slides: int = Field(4, ge=1)
    base_size: int = Field(1024, ge=64, description="Edge of the highest-magnification level")
    base_magnification: str = Field("20x")
    mpp: float = Field(0.5, gt=0)
    blobs: int = Field(4, ge=1, description="Tissue blobs per slide")
    lesion_fraction: float = Field(0.5, gt=0, le=1, description="Share of positive slides")
    artifacts: int = Field(2, ge=0, description="Green marker strokes per slide")
    seed: int = 0


TISSUE_RGB = np.array([214, 150, 196])
LESION_RGB = np.array([182, 112, 176])
MARKER_RGB = np.array([20, 210, 40])


def _level_tags(cfg: SyntheticPyramidConfig, count: int) -> List[str]:
    if cfg.base_magnification not in MAG_ORDER:
        raise ConfigError(f"base magnification must be one of {MAG_ORDER}")
    mags = list(reversed(MAG_ORDER[:MAG_ORDER.index(cfg.base_magnification) + 1]))
    return (mags + ["thumb"] * count)[:count]


def _level_count(cfg: SyntheticPyramidConfig) -> int:
    n_mags = MAG_ORDER.index(cfg.base_magnification) + 1
    size, count = cfg.base_size, 1
    # stop once the next halving would leave the short side under 64 px
    while size // 2 >= 64 or count < n_mags:
        size //= 2
        count += 1
    return count


def render_synthetic_slide(cfg: SyntheticPyramidConfig, rng: np.random.Generator, positive: bool) -> np.ndarray:
    """Base-level image: white background, textured tissue blobs, an optional
    dark lesion inside one blob and green marker strokes off the tissue."""
    size = cfg.base_size
    yy, xx = np.mgrid[0:size, 0:size]
    image = np.full((size, size, 3), 250, dtype=np.float64)
    image += rng.normal(0, 2.0, size=image.shape)

    tissue = np.zeros((size, size), dtype=bool)
    centres = []
    for _ in range(cfg.blobs):
        cx, cy = rng.uniform(0.2, 0.8, size=2) * size
        rx, ry = rng.uniform(0.08, 0.18, size=2) * size
        centres.append((cx, cy, rx, ry))
        tissue |= ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0
    texture = rng.normal(0, 12.0, size=image.shape)
    image[tissue] = TISSUE_RGB + texture[tissue]

    if positive:
        cx, cy, rx, ry = centres[0]
        lesion = tissue & (((xx - cx) / (0.5 * rx)) ** 2 + ((yy - cy) / (0.5 * ry)) ** 2 <= 1.0)
        image[lesion] = LESION_RGB + texture[lesion]

    width = max(2, size // 128)
    for _ in range(cfg.artifacts):
        for _attempt in range(20):
            x0, y0 = rng.integers(0, size, size=2)
            x1, y1 = np.clip([x0 + rng.integers(-size // 6, size // 6), y0 + rng.integers(-size // 6, size // 6)], 0, size - 1)
            stroke = np.zeros((size, size), dtype=np.uint8)
            cv2.line(stroke, (int(x0), int(y0)), (int(x1), int(y1)), 1, thickness=width)
            stroke = stroke.astype(bool)
            if not (stroke & tissue).any():
                image[stroke] = MARKER_RGB
                break
    return np.clip(np.rint(image), 0, 255).astype(np.uint8)


def write_pyramid(base: np.ndarray, tags: List[str], path: Path, slide_id: str, label: int, mpp: float) -> Path:
    ensure_dir(path)
    level = base
    for i in range(len(tags)):
        if i:
            h, w = level.shape[:2]
            level = cv2.resize(level, (w // 2, h // 2), interpolation=cv2.INTER_AREA)
        Image.fromarray(level).save(level_file(path, i))
    (path / META_FILE).write_text(
        f"slide_id={slide_id}\nlabel={label}\nmpp={mpp}\nlevels={','.join(tags)}\n", encoding="utf-8"
    )
    return path


def generate_pyramid_corpus(config, out_dir: Path) -> List[SlideRecord]:
    """Write ``num_slides`` synthetic pyramids plus ``slides.csv`` under ``out_dir``."""
    try:
        cfg = config if isinstance(config, SyntheticPyramidConfig) else SyntheticPyramidConfig(**config)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
    count = _level_count(cfg)
    tags = _level_tags(cfg, count)
    rng = np.random.default_rng(cfg.seed)
    n_pos = int(round(cfg.lesion_fraction * cfg.num_slides))
    labels = rng.permutation(np.r_[np.ones(n_pos, dtype=int), np.zeros(cfg.num_slides - n_pos, dtype=int)])

    records = []
    for i, label in enumerate(labels):
        slide_id = f"synthetic-slide-{i:03d}"
        base = render_synthetic_slide(cfg, rng, bool(label))
        slide_dir = write_pyramid(base, tags, Path(out_dir) / slide_id, slide_id, int(label), cfg.mpp)
        records.append(SlideRecord(slide_id=slide_id, label=int(label), path=slide_dir, mpp=cfg.mpp))
        log.debug("Wrote %s (label %d, %d levels)", slide_id, label, count)
    # manifest paths are written relative to the corpus directory
    write_records([r.model_copy(update={"path": Path(r.path.name)}) for r in records], Path(out_dir) / "slides.csv")
    log.info("Synthetic corpus: %d slides (%d positive) in %s", len(records), n_pos, out_dir)
    return records

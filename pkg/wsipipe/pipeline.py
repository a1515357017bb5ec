"""
Per-slide preprocessing: mask the thumbnail, map tissue to 5x tiles, gate on
tissue fraction, sample (proportionally at 5x, by clustering when descending
to 10x and 20x), augment, extract features and store the embeddings.

Tile work runs on a thread pool; results are merged in (magnification, row,
col) order so the store does not depend on scheduling.
"""
import zlib
from concurrent.futures import Executor, ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from utils.errors import EmptyBagError, EmptyMaskError
from utils.logging_config import get_logger
from utils.metadata import BagRecord, SlideRecord, write_records

from .augment import augment
from .features import BaseExtractor, build_extractor
from .masking import TissueMask, background_color, luma, tissue_mask
from .sampling import cluster_sample, kmeans, sample_level5
from .slide_source import SlideSource, open_slide
from .store import SlideEmbeddings, store_write
from .tiling import MAG_ORDER, TileRef, pad_tile, thumb_to_tiles, tissue_fraction_gate

log = get_logger(__name__)


class PipelineConfig(BaseModel):
    magnification: str = Field("5x", pattern="^(5x|10x|20x)$")
    color_distance: float = Field(60.0, ge=0)
    tissue_fraction: float = Field(0.25, ge=0, le=1)
    sample_fraction: float = Field(0.6, gt=0, le=1)
    sample_limit: int = Field(1000, ge=0)
    n_per_cluster: int = Field(20, ge=1)
    k_clusters: int = Field(8, ge=1)
    kmeans_iters: int = Field(100, ge=1)
    kmeans_restarts: int = Field(10, ge=1)
    tile_size: int = Field(512, ge=8)
    kernel_size: int = Field(3, ge=1)
    augment: bool = True
    hed_alpha: float = Field(0.05, ge=0, lt=1)
    noise_sigma: float = Field(2.0, ge=0)
    seed: int = 0
    workers: int = Field(1, ge=1)

    @classmethod
    def from_experiment(cls, cfg) -> "PipelineConfig":
        values = {name: getattr(cfg, name) for name in cls.model_fields if hasattr(cfg, name)}
        values["workers"] = cfg.worker_count
        return cls(**values)


@dataclass
class SlideResult:
    record: SlideEmbeddings
    tiles: List[TileRef]
    kept: int
    discarded: int


@dataclass
class PipelineSummary:
    store_path: Path
    manifest_path: Path
    slides: int = 0
    failed: List[str] = field(default_factory=list)
    tiles: int = 0
    discarded: int = 0
    # (slide_id, kept, discarded) in processing order
    per_slide: List[Tuple[str, int, int]] = field(default_factory=list)


def slide_seed(seed: int, slide_id: str, *extra: int) -> int:
    """Seed derived from the run seed and the slide, independent of processing order."""
    entropy = [seed & 0xFFFFFFFF, zlib.crc32(slide_id.encode("utf-8")), *extra]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def tile_seed(seed: int, slide_id: str, tile: TileRef) -> int:
    return slide_seed(seed, slide_id, *tile.coord)


class SlideProcessor:
    def __init__(self, source: SlideSource, config: PipelineConfig, extractor: BaseExtractor,
                 executor: Executor):
        self.source = source
        self.meta = source.meta
        self.config = config
        self.extractor = extractor
        self.executor = executor
        self.threshold = 0
        self.background = np.array([255, 255, 255], dtype=np.uint8)

    def tile_image(self, tile: TileRef) -> np.ndarray:
        region = self.source.read_region(self.meta.level_index(tile.level), tile.px_rect)
        return pad_tile(region, self.config.tile_size, self.background)

    def _map(self, fn, tiles: Sequence[TileRef]) -> Dict[TileRef, object]:
        futures = {self.executor.submit(fn, t): t for t in tiles}
        results = {}
        for future in as_completed(futures):
            results[futures[future]] = future.result()
        return results

    def gate(self, tiles: Sequence[TileRef]) -> Tuple[List[TileRef], int]:
        cfg = self.config
        verdicts = self._map(
            lambda t: tissue_fraction_gate(self.tile_image(t), self.threshold, cfg.tissue_fraction), tiles
        )
        kept = sorted(t for t, keep in verdicts.items() if keep)
        return kept, len(tiles) - len(kept)

    def _embed_one(self, tile: TileRef, with_augmentations: bool) -> List[np.ndarray]:
        image = self.tile_image(tile)
        vectors = [self.extractor.extract(image)]
        if with_augmentations:
            cfg = self.config
            seed = tile_seed(cfg.seed, self.meta.slide_id, tile)
            vectors.extend(self.extractor.extract(a) for a in augment(image, seed, cfg.hed_alpha, cfg.noise_sigma))
        return vectors

    def embed(self, tiles: Sequence[TileRef], with_augmentations: bool) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        results = self._map(lambda t: self._embed_one(t, with_augmentations), tiles)
        rows, coords, flags = [], [], []
        for tile in sorted(results):
            for flag, vec in enumerate(results[tile]):
                rows.append(vec)
                coords.append(tile.coord)
                flags.append(flag)
        return np.stack(rows), np.array(coords, dtype=np.int32), np.array(flags, dtype=np.uint8)

    def _descend(self, tiles: List[TileRef], child_level: str) -> Tuple[List[TileRef], int]:
        cfg = self.config
        features, _, _ = self.embed(tiles, with_augmentations=False)
        k = min(cfg.k_clusters, len(tiles))
        clusters = kmeans(features, k, seed=cfg.seed, max_iters=cfg.kmeans_iters,
                          n_init=cfg.kmeans_restarts)
        sample = cluster_sample(tiles, clusters.assignments, cfg.n_per_cluster, seed=cfg.seed,
                                child_dims=self.meta.dims_of(child_level), child_level=child_level,
                                tile_size=cfg.tile_size)
        log.debug("%s: %d %s tiles in %d clusters -> %d %s children", self.meta.slide_id, len(tiles),
                  tiles[0].level, k, len(sample.children), child_level)
        return self.gate(sample.children)

    def select_tiles(self) -> Tuple[List[TileRef], int]:
        cfg = self.config
        meta = self.meta
        thumb = self.source.thumbnail()
        thumb_dims = meta.level_dims[meta.thumbnail_index]
        mask, self.threshold = tissue_mask(thumb, cfg.color_distance, cfg.kernel_size)
        if mask.count == 0:
            raise EmptyMaskError(f"{meta.slide_id}: no tissue on the thumbnail")
        self.background = background_color(thumb, TissueMask.from_bits(luma(thumb) <= self.threshold))

        candidates = thumb_to_tiles(mask.pixels(), thumb_dims, meta.dims_of("5x"), "5x", cfg.tile_size)
        tiles, discarded = self.gate(candidates)
        if cfg.magnification == "5x":
            seed = slide_seed(cfg.seed, meta.slide_id)
            return sample_level5(tiles, cfg.sample_fraction, cfg.sample_limit, seed), discarded

        for child_level in MAG_ORDER[1:MAG_ORDER.index(cfg.magnification) + 1]:
            if not tiles:
                break
            tiles, dropped = self._descend(tiles, child_level)
            discarded += dropped
        return tiles, discarded

    def run(self) -> SlideResult:
        tiles, discarded = self.select_tiles()
        if not tiles:
            raise EmptyBagError(f"{self.meta.slide_id}: no tile passed the tissue gate")
        embeddings, coords, flags = self.embed(tiles, with_augmentations=self.config.augment)
        record = SlideEmbeddings.build(self.meta.slide_id, self.meta.label, embeddings, coords, flags)
        log.info("%s: kept %d tiles at %s, discarded %d", self.meta.slide_id, len(tiles),
                 self.config.magnification, discarded)
        return SlideResult(record, tiles, len(tiles), discarded)


def process_slide(source: SlideSource, config: PipelineConfig,
                  extractor: Optional[BaseExtractor] = None) -> SlideResult:
    extractor = extractor or build_extractor(tile_size=config.tile_size)
    with ThreadPoolExecutor(max_workers=config.workers) as executor:
        return SlideProcessor(source, config, extractor, executor).run()


def run_pipeline(slides: Sequence[SlideRecord], config: PipelineConfig, out_dir: Path,
                 extractor: Optional[BaseExtractor] = None, store_name: str = "embeddings.mile") -> PipelineSummary:
    """Process every slide of a manifest into one store plus a ``bags.csv`` dataset manifest.

    A slide that fails is logged and skipped; the others are still written.
    """
    out_dir = Path(out_dir)
    extractor = extractor or build_extractor(tile_size=config.tile_size)
    summary = PipelineSummary(store_path=out_dir / store_name, manifest_path=out_dir / "bags.csv")
    records: List[SlideEmbeddings] = []
    with ThreadPoolExecutor(max_workers=config.workers) as executor:
        for slide in sorted(slides, key=lambda s: s.slide_id):
            try:
                result = SlideProcessor(open_slide(slide), config, extractor, executor).run()
            except Exception as exc:
                log.exception("Skipping slide %s - %s", slide.slide_id, exc)
                summary.failed.append(slide.slide_id)
                continue
            records.append(result.record)
            summary.tiles += result.kept
            summary.per_slide.append((slide.slide_id, result.kept, result.discarded))
            summary.discarded += result.discarded
    summary.slides = len(records)
    if not records:
        raise EmptyBagError("no slide produced any tiles")

    store_write(records, summary.store_path)
    write_records(
        [BagRecord(source_id=r.slide_id, label=r.label, store_path=Path(store_name)) for r in records],
        summary.manifest_path,
    )
    log.info("✔ preprocessed %d slides (%d failed): %d tiles kept, %d discarded -> %s",
             summary.slides, len(summary.failed), summary.tiles, summary.discarded, summary.store_path)
    return summary

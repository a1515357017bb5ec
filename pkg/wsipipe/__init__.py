from .augment import AugmentParams, apply_augmentation, augment
from .features import BaseExtractor, EXTRACTORS, HandcraftedExtractor, build_extractor, extract_features, resolve_extractor
from .masking import (
    TissueMask,
    background_color,
    color_artifact_filter,
    histogram,
    luma,
    morph_close,
    otsu_threshold,
    tissue_mask,
)
from .pipeline import PipelineConfig, PipelineSummary, SlideResult, process_slide, run_pipeline
from .sampling import ClusterSample, KMeansResult, cluster_sample, kmeans, sample_level5
from .slide_source import (
    DirectoryPyramidSource,
    SlideSource,
    SyntheticPyramidConfig,
    generate_pyramid_corpus,
    open_slide,
)
from .store import EMBED_DIM, SlideEmbeddings, import_embeddings, store_read, store_write
from .tiling import (
    TILE_SIZE,
    SlideMeta,
    TileRef,
    child_tiles,
    pad_tile,
    thumb_to_tile,
    thumb_to_tiles,
    tile_footprint,
    tissue_fraction,
    tissue_fraction_gate,
)

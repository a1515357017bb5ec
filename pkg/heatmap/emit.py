from pathlib import Path
from typing import List, Optional

from bagdata import Bag
from milmodels import BaseMILModel, score_map
from utils.errors import InputError
from utils.logging_config import get_logger
from wsipipe.slide_source import SlideSource
from wsipipe.tiling import MAG_TAGS, TILE_SIZE

from .render import PatchScoreMap, heatmap_path, render_attention, render_contributions, write_image

log = get_logger(__name__)


def build_score_map(model: BaseMILModel, bag: Bag, source: Optional[SlideSource] = None,
                    tile_size: int = TILE_SIZE) -> PatchScoreMap:
    """Score the bag's original tiles; onto the slide thumbnail when a source is given."""
    bag = bag.originals()
    if bag.tile_coords is None:
        raise InputError(f"{bag.source_id}: bag has no tile coordinates")
    out = score_map(model, bag)
    contribs = out.bounded_contribs if model.additive else None
    if source is None:
        return PatchScoreMap.on_grid(bag.source_id, bag.tile_coords, out.attention, contribs, tile_size=tile_size)

    magnifications = {c[0] for c in bag.tile_coords}
    if len(magnifications) != 1:
        raise InputError(f"{bag.source_id}: tiles span several magnifications {sorted(magnifications)}")
    meta = source.meta
    thumb = source.thumbnail()
    return PatchScoreMap(
        slide_id=bag.source_id,
        coords=bag.tile_coords,
        attention=out.attention,
        thumb_dims=meta.level_dims[meta.thumbnail_index],
        level_dims=meta.dims_of(MAG_TAGS[magnifications.pop()]),
        tile_size=tile_size,
        bounded_contribs=contribs,
        thumbnail=thumb,
    )


def emit_heatmaps(model: BaseMILModel, bag: Bag, out_dir: Path, source: Optional[SlideSource] = None,
                  tile_size: int = TILE_SIZE) -> List[Path]:
    """Attention PNG for every model, plus the contribution PNG for additive ones."""
    scores = build_score_map(model, bag, source, tile_size)
    paths = [write_image(render_attention(scores), heatmap_path(out_dir, bag.source_id, model.architecture, "attention"))]
    if model.additive:
        paths.append(write_image(render_contributions(scores),
                                 heatmap_path(out_dir, bag.source_id, model.architecture, "contrib")))
    for p in paths:
        log.info("Heatmap written to %s", p)
    return paths

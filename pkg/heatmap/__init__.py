from .emit import build_score_map, emit_heatmaps
from .render import (
    COLORMAP,
    OVERLAY_ALPHA,
    PatchScoreMap,
    heatmap_path,
    normalise_scores,
    render_attention,
    render_contributions,
    write_image,
)

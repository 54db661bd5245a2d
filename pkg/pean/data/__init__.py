"""Synthetic paired scene-text data: rendering, degradation and the on-disk format."""

from pean.data.dataset import (
    PairDataset,
    PairListDataset,
    build_dataset,
    collate_pairs,
    load_manifest,
    load_pair,
    pairs_to_batch,
    read_png,
    write_png,
)
from pean.data.font import glyph, text_mask
from pean.data.render import (
    DEGRADATION,
    RenderStyle,
    box_downsample,
    degrade,
    render_pair,
    sample_style,
    sample_text,
)

__all__ = [
    "DEGRADATION",
    "PairDataset",
    "PairListDataset",
    "RenderStyle",
    "box_downsample",
    "build_dataset",
    "collate_pairs",
    "degrade",
    "glyph",
    "load_manifest",
    "load_pair",
    "pairs_to_batch",
    "read_png",
    "render_pair",
    "sample_style",
    "sample_text",
    "text_mask",
    "write_png",
]

"""Training-free cross-view geo-localization: pooling, aggregation, alignment, retrieval."""

from ._core import (
    AlignmentModel,
    Error,
    aggregate,
    average_precision,
    fit_alignment,
    fit_pca,
    fit_procrustes,
    pool,
    pool_region,
    procrustes_objective,
    read_feature_map,
    recall_at_k,
    recall_top1pct,
    search,
    similarity_heatmap,
    synth_generate,
    top1pct_threshold,
    write_feature_map,
)

__all__ = [
    "AlignmentModel",
    "Error",
    "aggregate",
    "average_precision",
    "fit_alignment",
    "fit_pca",
    "fit_procrustes",
    "pool",
    "pool_region",
    "procrustes_objective",
    "read_feature_map",
    "recall_at_k",
    "recall_top1pct",
    "search",
    "similarity_heatmap",
    "synth_generate",
    "top1pct_threshold",
    "write_feature_map",
]

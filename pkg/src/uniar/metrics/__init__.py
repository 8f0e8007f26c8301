"""Behavior-prediction metric suite: map comparison, scanpath
similarity, rating correlation."""

from .heatmap import (
    HeatmapScores,
    auc_judd,
    cc,
    evaluate_heatmap,
    fixations_to_map,
    kld,
    nss,
    r_squared,
    resize_bilinear,
    rmse,
    sauc,
    sim,
    subsample_negatives,
)
from .rating import average_ranks, plcc, srcc
from .scanpath import (
    MeanShiftResult,
    MultiMatchScores,
    assign_to_clusters,
    default_bandwidth,
    levenshtein,
    meanshift_clusters,
    multimatch,
    nw_similarity,
    semfed,
    semss,
    sequence_score,
)

__all__ = [
    "HeatmapScores",
    "MeanShiftResult",
    "MultiMatchScores",
    "assign_to_clusters",
    "auc_judd",
    "average_ranks",
    "cc",
    "default_bandwidth",
    "evaluate_heatmap",
    "fixations_to_map",
    "kld",
    "levenshtein",
    "meanshift_clusters",
    "multimatch",
    "nss",
    "nw_similarity",
    "plcc",
    "r_squared",
    "resize_bilinear",
    "rmse",
    "sauc",
    "semfed",
    "semss",
    "sequence_score",
    "sim",
    "srcc",
    "subsample_negatives",
]

"""Desk-scale differentiable multi-object tracking toolkit.

The heavy lifting lives in the C++ extension module; this package re-exports
its surface.
"""

from ._deepmot import (
    Dhn,
    deepmot_loss,
    discretize,
    distance_matrix,
    dmotp,
    evaluate_tracking,
    focal_loss,
    gen_matrix_pairs,
    iou,
    pair_distance,
    soft_counts,
    solve,
    solve_thresholded,
)

__all__ = [
    "Dhn",
    "deepmot_loss",
    "discretize",
    "distance_matrix",
    "dmotp",
    "evaluate_tracking",
    "focal_loss",
    "gen_matrix_pairs",
    "iou",
    "pair_distance",
    "soft_counts",
    "solve",
    "solve_thresholded",
]

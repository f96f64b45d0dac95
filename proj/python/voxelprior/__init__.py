"""Shape-prior voxel reconstruction: data generation, model, training and evaluation."""

from ._core import (
    Model,
    Dataset,
    average_prior,
    base_categories,
    build_dataset,
    generate_shape,
    iou,
    novel_categories,
    occupancy_bins,
    render,
)

__all__ = [
    "Model",
    "Dataset",
    "average_prior",
    "base_categories",
    "build_dataset",
    "generate_shape",
    "iou",
    "novel_categories",
    "occupancy_bins",
    "render",
]

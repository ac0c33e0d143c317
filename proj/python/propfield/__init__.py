"""Physical property fields from posed RGB-D captures."""

import json

from ._core import (
    Error,
    analytic_mass,
    compute_metrics,
    default_config,
    generate_scene,
    kernel_regress,
    load_field,
    pairwise_relationship_accuracy,
    pca_colorize,
    pca_project,
    remove_outliers,
    segment_material,
    softmax_weights,
    voxel_downsample,
)
from ._core import run_pipeline as _run_pipeline

__all__ = [
    "Error",
    "analytic_mass",
    "compute_metrics",
    "default_config",
    "generate_scene",
    "kernel_regress",
    "load_field",
    "pairwise_relationship_accuracy",
    "pca_colorize",
    "pca_project",
    "remove_outliers",
    "run_pipeline",
    "segment_material",
    "softmax_weights",
    "voxel_downsample",
]


def run_pipeline(scene_dir, out_dir, config=None, force=False):
    """Runs every stage and returns the parsed mass.json."""
    text = json.dumps(config) if config is not None else ""
    return json.loads(_run_pipeline(str(scene_dir), str(out_dir), text, force))
